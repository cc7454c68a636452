#include "qamatch/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>

#include "qamatch/errors.hpp"
#include "qamatch/io.hpp"
#include "qamatch/random.hpp"

namespace qamatch {

void EvalPool::validate() const {
  const std::string who = "pool for question " + std::to_string(question_id);
  if (candidates.empty()) throw InputError(who + " is empty");
  std::set<Id> unique(candidates.begin(), candidates.end());
  if (unique.size() != candidates.size()) throw InputError(who + " lists a candidate twice");
  if (relevant.empty()) throw InputError(who + " has no relevant candidate");
  for (Id r : relevant) {
    if (!unique.count(r)) throw InputError(who + ": relevant answer " + std::to_string(r) + " is not a candidate");
  }
}

Ranking rank_by_score(std::span<const Id> ids, std::span<const double> scores) {
  if (ids.size() != scores.size()) {
    throw DimensionError("ranking " + std::to_string(ids.size()) + " ids with " + std::to_string(scores.size()) +
                         " scores");
  }
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return ids[a] < ids[b];
  });
  Ranking out;
  out.reserve(ids.size());
  for (std::size_t i : order) out.push_back(ids[i]);
  return out;
}

Ranking rank_pool(const EvalPool& pool, const Model& model, const Dataset& data) {
  pool.validate();
  const EncodedSequence q = model.encode(data.question_text(pool.question_id));
  std::vector<EncodedSequence> answers;
  answers.reserve(pool.candidates.size());
  for (Id c : pool.candidates) answers.push_back(model.encode(data.answer(c).text));
  const auto scores = model.score_candidates(q, answers);
  return rank_by_score(pool.candidates, scores);
}

std::size_t hits_at_k(std::span<const EvalPool> pools, std::span<const Ranking> rankings, std::size_t k) {
  if (pools.size() != rankings.size()) {
    throw InputError(std::to_string(pools.size()) + " pools but " + std::to_string(rankings.size()) + " rankings");
  }
  if (pools.empty()) throw InputError("no pools to evaluate");
  if (k == 0) throw InputError("K must be at least 1");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pools.size(); ++i) {
    if (k > rankings[i].size()) {
      throw InputError("K=" + std::to_string(k) + " exceeds the " + std::to_string(rankings[i].size()) +
                       " candidates for question " + std::to_string(pools[i].question_id));
    }
    const auto& rel = pools[i].relevant;
    const bool hit = std::any_of(rankings[i].begin(), rankings[i].begin() + static_cast<std::ptrdiff_t>(k),
                                 [&](Id c) { return std::find(rel.begin(), rel.end(), c) != rel.end(); });
    hits += hit ? 1 : 0;
  }
  return hits;
}

double acc_at_k(std::span<const EvalPool> pools, std::span<const Ranking> rankings, std::size_t k) {
  return static_cast<double>(hits_at_k(pools, rankings, k)) / static_cast<double>(pools.size());
}

namespace {
constexpr std::uint64_t kPoolTag = 0x9001;
}

std::vector<EvalPool> build_pools(const Dataset& data, std::span<const Id> questions, std::size_t pool_size,
                                  std::uint64_t seed) {
  if (pool_size == 0) throw InputError("pool size must be positive");
  const auto& all = data.answer_ids();
  if (pool_size > all.size()) {
    throw InputError("pool size " + std::to_string(pool_size) + " exceeds the " + std::to_string(all.size()) +
                     " answers in the dataset");
  }
  std::vector<EvalPool> pools;
  pools.reserve(questions.size());
  for (Id q : questions) {
    const auto linked = data.answers_of(q);
    if (linked.empty()) throw InputError("question " + std::to_string(q) + " has no linked answer");
    if (linked.size() > pool_size) {
      throw InputError("question " + std::to_string(q) + " has " + std::to_string(linked.size()) +
                       " linked answers, more than the pool size " + std::to_string(pool_size));
    }
    std::vector<Id> others;
    others.reserve(all.size() - linked.size());
    std::set_difference(all.begin(), all.end(), linked.begin(), linked.end(), std::back_inserter(others));

    // Partial Fisher-Yates: the first `need` entries become the distractors.
    Rng rng = make_rng(seed, {kPoolTag, q});
    const std::size_t need = pool_size - linked.size();
    for (std::size_t i = 0; i < need; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, others.size() - 1);
      std::swap(others[i], others[pick(rng)]);
    }
    EvalPool pool{q, std::vector<Id>(linked.begin(), linked.end()), std::vector<Id>(linked.begin(), linked.end())};
    pool.candidates.insert(pool.candidates.end(), others.begin(), others.begin() + static_cast<std::ptrdiff_t>(need));
    std::sort(pool.candidates.begin(), pool.candidates.end());
    pools.push_back(std::move(pool));
  }
  return pools;
}

std::vector<EvalPool> parse_pools(std::string_view text) {
  auto rows = parse_csv(text, "pool file");
  if (rows.empty() || rows[0].fields != std::vector<std::string>{"question_id", "candidate_id", "label"}) {
    throw InputError("pool file line 1: expected header 'question_id,candidate_id,label'");
  }
  std::vector<EvalPool> pools;
  std::map<Id, std::size_t> index;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& f = rows[r].fields;
    const std::string where = "pool file line " + std::to_string(rows[r].line);
    if (f.size() != 3) throw InputError(where + ": expected 3 fields");
    auto num = [&](const std::string& s) -> Id {
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
        throw InputError(where + ": invalid id '" + s + "'");
      }
      try {
        return std::stoull(s);
      } catch (const std::exception&) {
        throw InputError(where + ": invalid id '" + s + "'");
      }
    };
    if (f[2] != "0" && f[2] != "1") throw InputError(where + ": label must be 0 or 1");
    const Id q = num(f[0]), c = num(f[1]);
    auto [it, fresh] = index.emplace(q, pools.size());
    if (fresh) pools.push_back(EvalPool{q, {}, {}});
    auto& pool = pools[it->second];
    pool.candidates.push_back(c);
    if (f[2] == "1") pool.relevant.push_back(c);
  }
  for (const auto& p : pools) p.validate();
  return pools;
}

std::vector<EvalPool> load_pools(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (!bytes) throw InputError("cannot read pool file " + path.string());
  return parse_pools(*bytes);
}

std::string EvalReport::to_text() const {
  std::string out;
  char buf[64];
  for (std::size_t i = 0; i < ks.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\n", ks[i], accuracy[i]);
    out += buf;
  }
  return out + "N\t" + std::to_string(n) + "\n";
}

EvalReport evaluate(const Model& model, const Dataset& data, std::span<const EvalPool> pools,
                    std::span<const std::size_t> ks) {
  if (pools.empty()) throw InputError("no pools to evaluate");
  std::vector<Ranking> rankings;
  rankings.reserve(pools.size());
  for (const auto& pool : pools) {
    for (Id c : pool.candidates) {
      if (!data.has_answer(c)) {
        throw InputError("pool for question " + std::to_string(pool.question_id) + " names unknown answer " +
                         std::to_string(c));
      }
    }
    rankings.push_back(rank_pool(pool, model, data));
  }
  EvalReport report;
  report.n = pools.size();
  for (std::size_t k : ks) {
    report.ks.push_back(k);
    report.accuracy.push_back(acc_at_k(pools, rankings, k));
  }
  return report;
}

}  // namespace qamatch
