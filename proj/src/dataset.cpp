#include "qamatch/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <set>

#include "qamatch/errors.hpp"
#include "qamatch/io.hpp"
#include "qamatch/random.hpp"
#include "qamatch/text.hpp"

namespace qamatch {

void Dataset::add_question(Id id, std::string text) {
  if (!questions_.emplace(id, std::move(text)).second) {
    throw DatasetError("duplicate question id " + std::to_string(id));
  }
}

void Dataset::add_answer(Id id, Id question_id, std::string text) {
  if (!has_question(question_id)) {
    throw DatasetError("answer " + std::to_string(id) + " references unknown question " + std::to_string(question_id));
  }
  if (!answers_.emplace(id, Answer{std::move(text), question_id}).second) {
    throw DatasetError("duplicate answer id " + std::to_string(id));
  }
  auto& linked = links_[question_id];
  linked.insert(std::upper_bound(linked.begin(), linked.end(), id), id);
  answer_ids_.insert(std::upper_bound(answer_ids_.begin(), answer_ids_.end(), id), id);
}

const std::string& Dataset::question_text(Id id) const {
  auto it = questions_.find(id);
  if (it == questions_.end()) throw InputError("unknown question id " + std::to_string(id));
  return it->second;
}

const Answer& Dataset::answer(Id id) const {
  auto it = answers_.find(id);
  if (it == answers_.end()) throw InputError("unknown answer id " + std::to_string(id));
  return it->second;
}

std::span<const Id> Dataset::answers_of(Id question) const {
  auto it = links_.find(question);
  if (it == links_.end()) return {};
  return it->second;
}

const std::vector<Id>& Dataset::split(std::string_view name) const {
  if (name == "train") return train;
  if (name == "dev") return dev;
  if (name == "test") return test;
  throw InputError("unknown split '" + std::string(name) + "' (expected train, dev or test)");
}

void Dataset::validate() const {
  std::set<Id> seen;
  for (const char* name : {"train", "dev", "test"}) {
    for (Id q : split(name)) {
      if (!has_question(q)) throw DatasetError(std::string(name) + " split lists unknown question " + std::to_string(q));
      if (!seen.insert(q).second) {
        throw DatasetError("question " + std::to_string(q) + " appears twice across splits (" + name + ")");
      }
      if (answers_of(q).empty()) {
        throw DatasetError(std::string(name) + " question " + std::to_string(q) + " has no linked answer");
      }
    }
  }
}

std::vector<std::string> Dataset::texts() const {
  std::vector<std::string> out;
  out.reserve(questions_.size() + answers_.size());
  for (const auto& [id, text] : questions_) out.push_back(text);
  for (const auto& [id, a] : answers_) out.push_back(a.text);
  return out;
}

bool Dataset::operator==(const Dataset& other) const {
  if (questions_ != other.questions_ || train != other.train || dev != other.dev || test != other.test) return false;
  if (answers_.size() != other.answers_.size()) return false;
  return std::equal(answers_.begin(), answers_.end(), other.answers_.begin(), [](const auto& x, const auto& y) {
    return x.first == y.first && x.second.text == y.second.text && x.second.question_id == y.second.question_id;
  });
}

// --- CSV ---

std::vector<CsvRow> parse_csv(std::string_view text, const std::string& file_name) {
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  std::size_t line = 1, i = 0;
  bool row_open = false;
  row.line = 1;

  auto end_field = [&] {
    row.fields.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row = CsvRow{};
    row_open = false;
  };

  while (i < text.size()) {
    const char c = text[i];
    if (!row_open) {
      row.line = line;
      row_open = true;
    }
    if (c == '"' && field.empty()) {
      // quoted field
      const std::size_t start_line = line;
      ++i;
      for (;;) {
        if (i >= text.size()) {
          throw DatasetError(file_name + " line " + std::to_string(start_line) + ": unterminated quoted field");
        }
        if (text[i] == '"') {
          if (i + 1 < text.size() && text[i + 1] == '"') {
            field += '"';
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        if (text[i] == '\n') ++line;
        field += text[i++];
      }
      if (i < text.size() && text[i] != ',' && text[i] != '\n' && text[i] != '\r') {
        throw DatasetError(file_name + " line " + std::to_string(line) + ": text after closing quote");
      }
      continue;
    }
    if (c == ',') {
      end_field();
      ++i;
    } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
      end_row();
      i += 2;
      ++line;
    } else if (c == '\n') {
      end_row();
      ++i;
      ++line;
    } else {
      if (c == '"') throw DatasetError(file_name + " line " + std::to_string(line) + ": stray quote in unquoted field");
      field += c;
      ++i;
    }
  }
  if (row_open) end_row();
  // blank lines carry a single empty field
  std::erase_if(rows, [](const CsvRow& r) { return r.fields.size() == 1 && r.fields[0].empty(); });
  return rows;
}

std::string csv_field(std::string_view value) {
  if (value.find_first_of(",\"\r\n") == std::string_view::npos && !value.empty()) return std::string(value);
  if (value.empty()) return "";
  std::string out = "\"";
  for (char c : value) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

namespace {

Id parse_id(std::string_view text, const std::string& where) {
  Id v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc() || end != text.data() + text.size()) {
    throw DatasetError(where + ": invalid id '" + std::string(text) + "'");
  }
  return v;
}

std::string need_file(const std::filesystem::path& dir, const char* name) {
  auto bytes = read_file(dir / name);
  if (!bytes) throw InputError("missing file " + (dir / name).string());
  return *std::move(bytes);
}

std::vector<CsvRow> csv_body(const std::string& text, const char* name, const std::vector<std::string>& header) {
  auto rows = parse_csv(text, name);
  if (rows.empty() || rows[0].fields != header) {
    std::string want;
    for (const auto& h : header) want += (want.empty() ? "" : ",") + h;
    throw DatasetError(std::string(name) + " line 1: expected header '" + want + "'");
  }
  rows.erase(rows.begin());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].fields.size() != header.size()) {
      throw DatasetError(std::string(name) + " row " + std::to_string(r + 1) + " (line " +
                         std::to_string(rows[r].line) + "): expected " + std::to_string(header.size()) +
                         " fields, got " + std::to_string(rows[r].fields.size()));
    }
  }
  return rows;
}

std::vector<Id> read_split(const std::filesystem::path& dir, const char* name) {
  const std::string text = need_file(dir, name);
  std::vector<Id> ids;
  std::size_t line = 0, pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view item(text.data() + pos, (nl == std::string::npos ? text.size() : nl) - pos);
    ++line;
    if (!item.empty() && item.back() == '\r') item.remove_suffix(1);
    if (!item.empty()) ids.push_back(parse_id(item, std::string(name) + " line " + std::to_string(line)));
    if (nl == std::string::npos) break;
    pos = nl + 1;
  }
  return ids;
}

std::string join_lines(const std::vector<Id>& ids) {
  std::string out;
  for (Id id : ids) out += std::to_string(id) + "\n";
  return out;
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset data;
  const auto questions = csv_body(need_file(dir, "questions.csv"), "questions.csv", {"question_id", "content"});
  const auto answers = csv_body(need_file(dir, "answers.csv"), "answers.csv", {"ans_id", "question_id", "content"});

  for (std::size_t r = 0; r < questions.size(); ++r) {
    const std::string where = "questions.csv row " + std::to_string(r + 1) + " (line " + std::to_string(questions[r].line) + ")";
    const Id id = parse_id(questions[r].fields[0], where);
    if (data.has_question(id)) throw DatasetError(where + ": duplicate question id " + std::to_string(id));
    data.add_question(id, questions[r].fields[1]);
  }
  for (std::size_t r = 0; r < answers.size(); ++r) {
    const std::string where = "answers.csv row " + std::to_string(r + 1) + " (line " + std::to_string(answers[r].line) + ")";
    const Id id = parse_id(answers[r].fields[0], where);
    const Id q = parse_id(answers[r].fields[1], where);
    if (data.has_answer(id)) throw DatasetError(where + ": duplicate answer id " + std::to_string(id));
    if (!data.has_question(q)) {
      throw DatasetError(where + ": answer " + std::to_string(id) + " references unknown question " + std::to_string(q));
    }
    data.add_answer(id, q, answers[r].fields[2]);
  }
  data.train = read_split(dir, "train.txt");
  data.dev = read_split(dir, "dev.txt");
  data.test = read_split(dir, "test.txt");
  data.validate();
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw PersistenceError("cannot create directory " + dir.string() + ": " + ec.message());
  std::string q = "question_id,content\n";
  for (const auto& [id, text] : data.questions()) q += std::to_string(id) + "," + csv_field(text) + "\n";
  std::string a = "ans_id,question_id,content\n";
  for (const auto& [id, ans] : data.answers()) {
    a += std::to_string(id) + "," + std::to_string(ans.question_id) + "," + csv_field(ans.text) + "\n";
  }
  write_file_atomic(dir / "questions.csv", q);
  write_file_atomic(dir / "answers.csv", a);
  write_file_atomic(dir / "train.txt", join_lines(data.train));
  write_file_atomic(dir / "dev.txt", join_lines(data.dev));
  write_file_atomic(dir / "test.txt", join_lines(data.test));
}

// --- summary ---

DatasetSummary summarize(const Dataset& data) {
  DatasetSummary s;
  s.questions = data.questions().size();
  s.answers = data.answers().size();
  s.train = data.train.size();
  s.dev = data.dev.size();
  s.test = data.test.size();
  std::size_t qc = 0, ac = 0;
  for (const auto& [id, text] : data.questions()) qc += utf8_decode(text).size();
  for (const auto& [id, a] : data.answers()) ac += utf8_decode(a.text).size();
  if (s.questions) {
    s.mean_question_chars = static_cast<double>(qc) / static_cast<double>(s.questions);
    s.answers_per_question = static_cast<double>(s.answers) / static_cast<double>(s.questions);
  }
  if (s.answers) s.mean_answer_chars = static_cast<double>(ac) / static_cast<double>(s.answers);
  return s;
}

std::string DatasetSummary::to_text() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "questions\t%zu\nanswers\t%zu\ntrain\t%zu\ndev\t%zu\ntest\t%zu\n"
                "chars_per_question\t%.2f\nchars_per_answer\t%.2f\nanswers_per_question\t%.2f\n",
                questions, answers, train, dev, test, mean_question_chars, mean_answer_chars, answers_per_question);
  return buf;
}

// --- synthetic corpus ---

namespace {

constexpr std::uint64_t kSyntheticTag = 0x5947;
constexpr std::size_t kQuestionFiller = 4;
constexpr std::size_t kAnswerFiller = 6;

}  // namespace

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.vocab_chars < 10) {
    throw InputError("synthetic corpus needs at least 10 characters, got " + std::to_string(spec.vocab_chars));
  }
  if (spec.n_questions == 0 || spec.answers_per_question == 0) {
    throw InputError("synthetic corpus needs at least one question and one answer per question");
  }
  const std::size_t topic = spec.vocab_chars / 2;
  const std::size_t filler = spec.vocab_chars - topic;
  const std::size_t pairs = topic * (topic - 1) / 2;
  if (spec.n_questions > pairs) {
    throw InputError(std::to_string(spec.n_questions) + " questions need distinct topic clusters but " +
                     std::to_string(spec.vocab_chars) + " characters only allow " + std::to_string(pairs));
  }

  Rng rng = make_rng(spec.seed, {kSyntheticTag});
  std::vector<char32_t> chars(spec.vocab_chars);
  for (std::size_t i = 0; i < chars.size(); ++i) chars[i] = static_cast<char32_t>(0x4E00 + i);
  std::shuffle(chars.begin(), chars.end(), rng);

  std::vector<std::pair<std::size_t, std::size_t>> clusters;
  for (std::size_t i = 0; i < topic; ++i)
    for (std::size_t j = i + 1; j < topic; ++j) clusters.emplace_back(i, j);
  std::shuffle(clusters.begin(), clusters.end(), rng);

  std::uniform_int_distribution<std::size_t> pick_filler(topic, topic + filler - 1);
  auto text = [&](std::size_t a, std::size_t b, std::size_t repeat, std::size_t noise) {
    std::u32string s;
    for (std::size_t r = 0; r < repeat; ++r) s += {chars[a], chars[b]};
    for (std::size_t k = 0; k < noise; ++k) s += chars[pick_filler(rng)];
    std::shuffle(s.begin(), s.end(), rng);
    return utf8_encode(s);
  };

  Dataset data;
  Id next_answer = 1;
  for (std::size_t q = 0; q < spec.n_questions; ++q) {
    const auto [a, b] = clusters[q];
    const Id qid = q + 1;
    data.add_question(qid, text(a, b, 1, kQuestionFiller));
    for (std::size_t k = 0; k < spec.answers_per_question; ++k) data.add_answer(next_answer++, qid, text(a, b, 2, kAnswerFiller));
  }

  std::vector<Id> order(spec.n_questions);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i + 1;
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(spec.n_questions);
  const auto n_train = static_cast<std::size_t>(std::llround(0.6 * n));
  const auto n_dev = std::min(spec.n_questions - n_train, static_cast<std::size_t>(std::llround(0.2 * n)));
  data.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  data.dev.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                  order.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev));
  data.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_dev), order.end());
  for (auto* s : {&data.train, &data.dev, &data.test}) std::sort(s->begin(), s->end());
  data.validate();
  return data;
}

}  // namespace qamatch
