#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qamatch {

using Id = std::uint64_t;

struct Answer {
  std::string text;
  Id question_id = 0;
};

// Questions, answers linked to them, and train/dev/test question splits.
class Dataset {
 public:
  // DatasetError on duplicate ids or a dangling question reference.
  void add_question(Id id, std::string text);
  void add_answer(Id id, Id question_id, std::string text);

  std::vector<Id> train, dev, test;

  const std::map<Id, std::string>& questions() const { return questions_; }
  const std::map<Id, Answer>& answers() const { return answers_; }
  const std::string& question_text(Id id) const;
  const Answer& answer(Id id) const;
  bool has_question(Id id) const { return questions_.count(id) > 0; }
  bool has_answer(Id id) const { return answers_.count(id) > 0; }

  // Answer ids linked to `question`, ascending. Empty when there are none.
  std::span<const Id> answers_of(Id question) const;
  // All answer ids, ascending.
  const std::vector<Id>& answer_ids() const { return answer_ids_; }

  // "train", "dev" or "test"; InputError otherwise.
  const std::vector<Id>& split(std::string_view name) const;

  // Splits disjoint, split ids known, every split question answered.
  void validate() const;

  // Every question and answer text, in id order (vocabulary corpus).
  std::vector<std::string> texts() const;

  bool operator==(const Dataset& other) const;

 private:
  std::map<Id, std::string> questions_;
  std::map<Id, Answer> answers_;
  std::map<Id, std::vector<Id>> links_;
  std::vector<Id> answer_ids_;
};

// RFC 4180 CSV. Rows keep their 1-based line number for error messages.
struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};
std::vector<CsvRow> parse_csv(std::string_view text, const std::string& file_name);
std::string csv_field(std::string_view value);

// questions.csv (question_id,content), answers.csv (ans_id,question_id,content),
// train.txt / dev.txt / test.txt with one question id per line.
Dataset load_dataset(const std::filesystem::path& dir);
void save_dataset(const Dataset& data, const std::filesystem::path& dir);

struct DatasetSummary {
  std::size_t questions = 0;
  std::size_t answers = 0;
  std::size_t train = 0, dev = 0, test = 0;
  double mean_question_chars = 0.0;
  double mean_answer_chars = 0.0;
  double answers_per_question = 0.0;

  std::string to_text() const;
};
DatasetSummary summarize(const Dataset& data);

struct SyntheticSpec {
  std::size_t n_questions = 30;
  std::size_t answers_per_question = 2;
  std::size_t vocab_chars = 40;
  std::uint64_t seed = 7;
};

// Each question carries a two-character topic signature that its answers
// repeat; filler characters are shared noise. Splits are 60/20/20.
Dataset generate_synthetic(const SyntheticSpec& spec);

}  // namespace qamatch
