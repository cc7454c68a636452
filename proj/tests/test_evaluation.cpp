#include <algorithm>
#include <random>
#include <numeric>
#include <set>

#include "doctest.h"
#include "qamatch/errors.hpp"
#include "qamatch/evaluation.hpp"
#include "qamatch/random.hpp"

using namespace qamatch;

namespace {

// Ten answers over four questions: q1 {1,2}, q2 {3}, q3 {4,5,6}, q4 {7..10}.
Dataset ten_answer_fixture() {
  Dataset d;
  for (Id q = 1; q <= 4; ++q) d.add_question(q, "question " + std::to_string(q));
  const std::vector<Id> owner = {1, 1, 2, 3, 3, 3, 4, 4, 4, 4};
  for (Id a = 1; a <= 10; ++a) d.add_answer(a, owner[a - 1], "answer " + std::to_string(a));
  d.train = {1, 2};
  d.dev = {3};
  d.test = {4};
  return d;
}

// Hit iff fewer than K candidates beat the best relevant one, where "beat"
// means higher score, or equal score and lower id. No sorting involved.
std::size_t brute_hits(const std::vector<EvalPool>& pools, const std::vector<std::vector<double>>& scores,
                       std::size_t k) {
  std::size_t hits = 0;
  for (std::size_t p = 0; p < pools.size(); ++p) {
    const auto& cand = pools[p].candidates;
    std::size_t best_rank = cand.size();
    for (Id r : pools[p].relevant) {
      const std::size_t ri = static_cast<std::size_t>(std::find(cand.begin(), cand.end(), r) - cand.begin());
      std::size_t ahead = 0;
      for (std::size_t c = 0; c < cand.size(); ++c) {
        if (scores[p][c] > scores[p][ri] || (scores[p][c] == scores[p][ri] && cand[c] < r)) ++ahead;
      }
      best_rank = std::min(best_rank, ahead);
    }
    if (best_rank < k) ++hits;
  }
  return hits;
}

}  // namespace

TEST_CASE("rank_by_score") {
  CHECK(rank_by_score(std::vector<Id>{7}, std::vector<double>{0.1}) == Ranking{7});
  CHECK(rank_by_score(std::vector<Id>{5, 3}, std::vector<double>{0.5, 0.5}) == Ranking{3, 5});
  CHECK(rank_by_score(std::vector<Id>{1, 2, 3}, std::vector<double>{0.1, 0.9, 0.5}) == Ranking{2, 3, 1});

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> coarse(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Id> ids(12);
    std::vector<double> s(12);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      ids[i] = i * 3 + 1;
      s[i] = coarse(rng) * 0.25;
    }
    const Ranking base = rank_by_score(ids, s);
    std::vector<std::size_t> perm(ids.size());
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<Id> ids2;
    std::vector<double> s2;
    for (std::size_t i : perm) {
      ids2.push_back(ids[i]);
      s2.push_back(s[i]);
    }
    CHECK(rank_by_score(ids2, s2) == base);
  }
}

TEST_CASE("acc_at_k examples") {
  const std::vector<EvalPool> pools = {{1, {1, 2, 3}, {1}}, {2, {4, 5, 6}, {5}}, {3, {7, 8, 9}, {9}}};
  const std::vector<Ranking> rankings = {{1, 2, 3}, {5, 4, 6}, {8, 9, 7}};
  CHECK(hits_at_k(pools, rankings, 1) == 2);
  CHECK(acc_at_k(pools, rankings, 1) == 2.0 / 3.0);
  CHECK(acc_at_k(pools, rankings, 2) == 1.0);
  CHECK(acc_at_k(pools, rankings, 3) == 1.0);
  CHECK_THROWS_AS(acc_at_k(pools, rankings, 0), InputError);
  CHECK_THROWS_AS(acc_at_k(pools, rankings, 4), InputError);
  CHECK_THROWS_AS(acc_at_k(std::span<const EvalPool>(pools).first(2), rankings, 1), InputError);

  // multiple relevant: any one in the top K counts
  const std::vector<EvalPool> multi = {{1, {1, 2, 3, 4}, {3, 4}}};
  CHECK(acc_at_k(multi, std::vector<Ranking>{{1, 4, 2, 3}}, 1) == 0.0);
  CHECK(acc_at_k(multi, std::vector<Ranking>{{1, 4, 2, 3}}, 2) == 1.0);
}

TEST_CASE("acc_at_k matches a brute-force recomputation on random fixtures") {
  std::mt19937_64 rng(99);
  for (int fixture = 0; fixture < 20; ++fixture) {
    std::uniform_int_distribution<std::size_t> n_pools(1, 15), size(5, 12);
    std::vector<EvalPool> pools;
    std::vector<std::vector<double>> scores;
    std::vector<Ranking> rankings;
    for (std::size_t p = n_pools(rng); p > 0; --p) {
      const std::size_t n = size(rng);
      EvalPool pool{p, {}, {}};
      for (std::size_t c = 0; c < n; ++c) pool.candidates.push_back(100 * p + c);
      std::shuffle(pool.candidates.begin(), pool.candidates.end(), rng);
      std::uniform_int_distribution<std::size_t> n_rel(1, 3);
      for (std::size_t r = n_rel(rng); r > 0; --r) pool.relevant.push_back(pool.candidates[r - 1]);
      // coarse scores so ties are common
      std::uniform_int_distribution<int> level(0, 4);
      std::vector<double> s;
      for (std::size_t c = 0; c < n; ++c) s.push_back(level(rng) / 4.0);
      rankings.push_back(rank_by_score(pool.candidates, s));
      pools.push_back(pool);
      scores.push_back(s);
    }
    std::size_t prev = 0;
    for (std::size_t k : {1, 2, 5}) {
      const std::size_t hits = hits_at_k(pools, rankings, k);
      CHECK(hits == brute_hits(pools, scores, k));
      CHECK(hits >= prev);
      prev = hits;
    }
  }
}

TEST_CASE("equal scores give the tie-rule accuracy exactly") {
  std::vector<EvalPool> pools;
  std::vector<Ranking> rankings;
  std::size_t expected = 0;
  for (Id q = 0; q < 40; ++q) {
    EvalPool pool{q, {10, 20, 30, 40, 50}, {10 * (q % 5 + 1)}};
    if (pool.relevant[0] == 10) ++expected;
    rankings.push_back(rank_by_score(pool.candidates, std::vector<double>(5, 0.3)));
    pools.push_back(pool);
  }
  CHECK(hits_at_k(pools, rankings, 1) == expected);
}

TEST_CASE("random scorer baseline") {
  Rng rng = make_rng(2024, {});
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<EvalPool> pools;
  std::vector<Ranking> rankings;
  for (Id q = 0; q < 2000; ++q) {
    EvalPool pool{q, {}, {0}};
    std::vector<double> s;
    for (Id c = 0; c < 100; ++c) {
      pool.candidates.push_back(c);
      s.push_back(u(rng));
    }
    rankings.push_back(rank_by_score(pool.candidates, s));
    pools.push_back(std::move(pool));
  }
  const double acc = acc_at_k(pools, rankings, 1);
  MESSAGE("random ACC@1 = ", acc);
  CHECK(acc >= 0.004);
  CHECK(acc <= 0.018);
  CHECK(acc_at_k(pools, rankings, 100) == 1.0);
}

TEST_CASE("build_pools") {
  const Dataset d = ten_answer_fixture();

  SUBCASE("pool size equal to the linked count has no distractors") {
    const auto pools = build_pools(d, std::vector<Id>{3}, 3, 1);
    CHECK(pools[0].candidates == std::vector<Id>{4, 5, 6});
    CHECK(pools[0].relevant == std::vector<Id>{4, 5, 6});
  }

  SUBCASE("distractors never include the question's answers") {
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      for (Id q = 1; q <= 4; ++q) {
        const auto pools = build_pools(d, std::vector<Id>{q}, 6, seed);
        const auto& p = pools[0];
        CHECK_NOTHROW(p.validate());
        CHECK(p.candidates.size() == 6);
        const auto linked = d.answers_of(q);
        std::set<Id> own(linked.begin(), linked.end());
        CHECK(std::set<Id>(p.relevant.begin(), p.relevant.end()) == own);
        for (Id c : p.candidates) {
          CHECK(d.has_answer(c));
          if (!own.count(c)) CHECK(d.answer(c).question_id != q);
        }
      }
    }
  }

  SUBCASE("seeded and deterministic") {
    const std::vector<Id> qs = {1, 2, 3, 4};
    const auto a = build_pools(d, qs, 7, 5), b = build_pools(d, qs, 7, 5);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].candidates == b[i].candidates);
    bool differs = false;
    for (std::uint64_t s = 6; s < 20 && !differs; ++s) {
      const auto c = build_pools(d, qs, 7, s);
      for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].candidates != c[i].candidates;
    }
    CHECK(differs);
  }

  SUBCASE("every distractor is reachable") {
    std::set<Id> seen;
    for (std::uint64_t s = 0; s < 300; ++s) {
      const auto p = build_pools(d, std::vector<Id>{2}, 2, s)[0];
      for (Id c : p.candidates)
        if (c != 3) seen.insert(c);
    }
    CHECK(seen == std::set<Id>{1, 2, 4, 5, 6, 7, 8, 9, 10});
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(build_pools(d, std::vector<Id>{1}, 11, 1), InputError);
    CHECK_THROWS_AS(build_pools(d, std::vector<Id>{4}, 3, 1), InputError);
    CHECK_THROWS_AS(build_pools(d, std::vector<Id>{1}, 0, 1), InputError);
  }
}

TEST_CASE("pool files") {
  const auto pools = parse_pools("question_id,candidate_id,label\n5,1,0\n5,2,1\n6,3,1\n5,4,0\n");
  REQUIRE(pools.size() == 2);
  CHECK(pools[0].question_id == 5);
  CHECK(pools[0].candidates == std::vector<Id>{1, 2, 4});
  CHECK(pools[0].relevant == std::vector<Id>{2});
  CHECK(pools[1].candidates == std::vector<Id>{3});

  CHECK_THROWS_AS(parse_pools("q,c,l\n"), InputError);
  CHECK_THROWS_AS(parse_pools("question_id,candidate_id,label\n5,1,2\n"), InputError);
  CHECK_THROWS_AS(parse_pools("question_id,candidate_id,label\n5,1,0\n"), InputError);  // no relevant
  CHECK_THROWS_AS(parse_pools("question_id,candidate_id,label\n5,1,1\n5,1,0\n"), InputError);
  CHECK_THROWS_AS(parse_pools("question_id,candidate_id,label\n5,x,1\n"), InputError);
}

TEST_CASE("report text") {
  EvalReport r{{1, 5}, {0.5, 1.0}, 4};
  CHECK(r.to_text() == "1\t0.500000\n5\t1.000000\nN\t4\n");
}

TEST_CASE("rank_pool agrees with scoring each candidate and selecting the best repeatedly") {
  const Dataset d = generate_synthetic({12, 2, 20, 3});
  const auto texts = d.texts();
  for (auto variant : {Variant::SiameseBert, Variant::CrossedBertBiGru}) {
    ModelConfig cfg = ModelConfig::for_variant(variant);
    cfg.encoder.dim = 8;
    cfg.encoder.ffn_dim = 8;
    cfg.max_len = 12;
    if (cfg.gru) cfg.gru->hidden = 3;
    const Model m = Model::create(cfg, build_vocab(texts), 4);
    std::vector<Id> qs;
    for (const auto& [id, t] : d.questions()) qs.push_back(id);
    for (const auto& pool : build_pools(d, qs, 8, 2)) {
      std::vector<std::pair<Id, double>> left;
      for (Id c : pool.candidates) left.emplace_back(c, m.score(d.question_text(pool.question_id), d.answer(c).text));
      Ranking expect;
      while (!left.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < left.size(); ++i) {
          if (left[i].second > left[best].second ||
              (left[i].second == left[best].second && left[i].first < left[best].first))
            best = i;
        }
        expect.push_back(left[best].first);
        left.erase(left.begin() + static_cast<std::ptrdiff_t>(best));
      }
      CHECK(rank_pool(pool, m, d) == expect);
    }
  }
  CHECK_THROWS_AS(rank_pool(EvalPool{1, {}, {}}, Model::create(ModelConfig::for_variant(Variant::SiameseBert),
                                                                build_vocab(texts), 1),
                            d),
                  InputError);
}
