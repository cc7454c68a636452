#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "qamatch/tape.hpp"

namespace qamatch {

// Decodes UTF-8 into Unicode scalar values. Malformed bytes decode to U+FFFD.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(char32_t cp);
std::string utf8_encode(std::u32string_view text);

using Sha256 = std::array<std::uint8_t, 32>;
Sha256 sha256(std::string_view bytes);
std::string to_hex(std::span<const std::uint8_t> bytes);

// Character-level vocabulary. Ids are dense; the first four are reserved.
class Vocabulary {
 public:
  static constexpr std::int32_t kPad = 0;
  static constexpr std::int32_t kUnk = 1;
  static constexpr std::int32_t kCls = 2;
  static constexpr std::int32_t kSep = 3;
  static constexpr std::int32_t kReserved = 4;

  Vocabulary() = default;

  // One id per distinct scalar value in first-seen order. Throws InputError
  // on an empty corpus.
  static Vocabulary build(std::span<const std::string> corpus);

  std::size_t size() const { return kReserved + chars_.size(); }
  // UNK for characters outside the table.
  std::int32_t id_of(char32_t ch) const;
  bool contains(char32_t ch) const { return ids_.count(ch) != 0; }
  // Throws InputError for reserved or out-of-range ids.
  char32_t char_of(std::int32_t id) const;

  // "id<TAB>char" per line, reserved entries first as [PAD], [UNK], [CLS], [SEP].
  // Tab, newline, carriage return and backslash are backslash-escaped.
  std::string serialize() const;
  static Vocabulary parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  // SHA-256 of serialize().
  Sha256 content_hash() const;

  bool operator==(const Vocabulary& other) const { return chars_ == other.chars_; }

 private:
  std::vector<char32_t> chars_;
  std::unordered_map<char32_t, std::int32_t> ids_;

  void add(char32_t ch);
};

inline Vocabulary build_vocab(std::span<const std::string> corpus) { return Vocabulary::build(corpus); }

// Fixed-length encoding of one sentence: [CLS] chars... [SEP] PAD...
struct EncodedSequence {
  std::vector<std::int32_t> token_ids;
  std::vector<std::int32_t> segment_ids;
  std::vector<std::int32_t> position_ids;
  std::vector<std::uint8_t> useful_mask;

  std::size_t length() const { return token_ids.size(); }
  std::size_t useful_count() const;
  // Same sequence with every segment id replaced.
  EncodedSequence with_segment(std::int32_t segment) const;
};

// Content is truncated to max_len - 2 characters; unknown characters map to
// UNK. Throws ConfigError when max_len < 3.
EncodedSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len);

// Token [vocab x d], segment [2 x d] and position [L x d] tables.
struct EmbeddingTables {
  Tensor token;
  Tensor segment;
  Tensor position;

  std::size_t dim() const { return token.cols(); }
};

// Row i = token[token_ids[i]] + segment[segment_ids[i]] + position[i].
// Throws IntegrityError for ids outside the tables.
Var embed(Tape& tape, const EncodedSequence& seq, const EmbeddingTables& tables);

}  // namespace qamatch
