#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qamatch/dataset.hpp"
#include "qamatch/model.hpp"

namespace qamatch {

struct EvalPool {
  Id question_id = 0;
  std::vector<Id> candidates;
  std::vector<Id> relevant;

  // InputError on an empty pool, duplicate candidates, or a relevant id
  // missing from the candidates.
  void validate() const;
};

using Ranking = std::vector<Id>;

// Ids ordered by score descending, ties by ascending id.
Ranking rank_by_score(std::span<const Id> ids, std::span<const double> scores);

// Scores every candidate against the pool's question with `model`.
Ranking rank_pool(const EvalPool& pool, const Model& model, const Dataset& data);

// Number of pools whose top-K holds at least one relevant answer.
// InputError when K is 0 or exceeds a pool's size, or counts disagree.
std::size_t hits_at_k(std::span<const EvalPool> pools, std::span<const Ranking> rankings, std::size_t k);
double acc_at_k(std::span<const EvalPool> pools, std::span<const Ranking> rankings, std::size_t k);

// For each question: its linked answers plus seeded uniform distractors from
// other questions' answers, up to `pool_size` candidates.
std::vector<EvalPool> build_pools(const Dataset& data, std::span<const Id> questions, std::size_t pool_size,
                                  std::uint64_t seed);

// CSV with header question_id,candidate_id,label (label 0 or 1). Pools keep
// first-appearance order of questions.
std::vector<EvalPool> parse_pools(std::string_view text);
std::vector<EvalPool> load_pools(const std::filesystem::path& path);

struct EvalReport {
  std::vector<std::size_t> ks;
  std::vector<double> accuracy;
  std::size_t n = 0;

  // "K\tacc" lines then "N\t<n>".
  std::string to_text() const;
};

EvalReport evaluate(const Model& model, const Dataset& data, std::span<const EvalPool> pools,
                    std::span<const std::size_t> ks);

}  // namespace qamatch
