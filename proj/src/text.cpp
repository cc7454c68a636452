#include "qamatch/text.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "qamatch/errors.hpp"
#include "qamatch/io.hpp"
#include "qamatch/ops.hpp"

namespace qamatch {

std::u32string utf8_decode(std::string_view text) {
  constexpr char32_t kReplacement = 0xFFFD;
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto b0 = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len != 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(text[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
        break;
      }
      cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong forms, surrogates and values past U+10FFFF.
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (ok && (cp < kMin[len] || (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF)) ok = false;
    if (!ok) {
      out.push_back(kReplacement);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
  return out;
}

std::string utf8_encode(std::u32string_view text) {
  std::string out;
  for (char32_t cp : text) out += utf8_encode(cp);
  return out;
}

Sha256 sha256(std::string_view bytes) {
  Sha256 digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 ||
      len != digest.size()) {
    throw IntegrityError("SHA-256 computation failed");
  }
  return digest;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xF];
  }
  return out;
}

// --- Vocabulary ---

namespace {

constexpr const char* kReservedNames[] = {"[PAD]", "[UNK]", "[CLS]", "[SEP]"};

std::string escape_char(char32_t ch) {
  switch (ch) {
    case U'\t': return "\\t";
    case U'\n': return "\\n";
    case U'\r': return "\\r";
    case U'\\': return "\\\\";
    default: return utf8_encode(ch);
  }
}

std::u32string unescape(std::string_view field) {
  if (field == "\\t") return U"\t";
  if (field == "\\n") return U"\n";
  if (field == "\\r") return U"\r";
  if (field == "\\\\") return U"\\";
  return utf8_decode(field);
}

}  // namespace

void Vocabulary::add(char32_t ch) {
  if (ids_.count(ch)) return;
  ids_.emplace(ch, static_cast<std::int32_t>(kReserved + chars_.size()));
  chars_.push_back(ch);
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus) {
  if (corpus.empty()) throw InputError("cannot build a vocabulary from an empty corpus");
  Vocabulary vocab;
  for (const auto& text : corpus)
    for (char32_t ch : utf8_decode(text)) vocab.add(ch);
  return vocab;
}

std::int32_t Vocabulary::id_of(char32_t ch) const {
  auto it = ids_.find(ch);
  return it == ids_.end() ? kUnk : it->second;
}

char32_t Vocabulary::char_of(std::int32_t id) const {
  if (id < kReserved || static_cast<std::size_t>(id) >= size()) {
    throw InputError("id " + std::to_string(id) + " has no character");
  }
  return chars_[static_cast<std::size_t>(id - kReserved)];
}

std::string Vocabulary::serialize() const {
  std::string out;
  for (int i = 0; i < kReserved; ++i) out += std::to_string(i) + "\t" + kReservedNames[i] + "\n";
  for (std::size_t i = 0; i < chars_.size(); ++i) {
    out += std::to_string(kReserved + i) + "\t" + escape_char(chars_[i]) + "\n";
  }
  return out;
}

Vocabulary Vocabulary::parse(std::string_view text) {
  Vocabulary vocab;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos) {
      throw LoadError("vocabulary line " + std::to_string(line_no) + ": missing tab separator");
    }
    std::int64_t id = -1;
    auto [ptr, ec] = std::from_chars(line.data(), line.data() + tab, id);
    if (ec != std::errc() || ptr != line.data() + tab || id != static_cast<std::int64_t>(line_no - 1)) {
      throw LoadError("vocabulary line " + std::to_string(line_no) + ": expected id " + std::to_string(line_no - 1));
    }
    const std::string_view field = line.substr(tab + 1);
    if (id < kReserved) {
      if (field != kReservedNames[id]) {
        throw LoadError("vocabulary line " + std::to_string(line_no) + ": expected reserved entry " +
                        kReservedNames[id]);
      }
      continue;
    }
    const std::u32string ch = unescape(field);
    if (ch.size() != 1 || vocab.contains(ch[0])) {
      throw LoadError("vocabulary line " + std::to_string(line_no) + ": invalid or duplicate character");
    }
    vocab.add(ch[0]);
  }
  if (line_no < static_cast<std::size_t>(kReserved)) throw LoadError("vocabulary is missing reserved entries");
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file_atomic(path, serialize()); }

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  if (!bytes) throw LoadError("cannot open vocabulary " + path.string());
  return parse(*bytes);
}

Sha256 Vocabulary::content_hash() const { return sha256(serialize()); }

// --- encoding ---

std::size_t EncodedSequence::useful_count() const {
  return static_cast<std::size_t>(std::count(useful_mask.begin(), useful_mask.end(), 1));
}

EncodedSequence EncodedSequence::with_segment(std::int32_t segment) const {
  EncodedSequence out = *this;
  std::fill(out.segment_ids.begin(), out.segment_ids.end(), segment);
  return out;
}

EncodedSequence encode(std::string_view text, const Vocabulary& vocab, std::size_t max_len) {
  if (max_len < 3) throw ConfigError("sequence length must be at least 3, got " + std::to_string(max_len));
  const std::u32string chars = utf8_decode(text);
  const std::size_t kept = std::min(chars.size(), max_len - 2);

  EncodedSequence seq;
  seq.token_ids.assign(max_len, Vocabulary::kPad);
  seq.segment_ids.assign(max_len, 0);
  seq.position_ids.resize(max_len);
  seq.useful_mask.assign(max_len, 0);
  for (std::size_t i = 0; i < max_len; ++i) seq.position_ids[i] = static_cast<std::int32_t>(i);

  seq.token_ids[0] = Vocabulary::kCls;
  for (std::size_t i = 0; i < kept; ++i) seq.token_ids[i + 1] = vocab.id_of(chars[i]);
  seq.token_ids[kept + 1] = Vocabulary::kSep;
  for (std::size_t i = 0; i < kept + 2; ++i) seq.useful_mask[i] = 1;
  return seq;
}

Var embed(Tape& tape, const EncodedSequence& seq, const EmbeddingTables& tables) {
  const std::size_t len = seq.length();
  if (seq.segment_ids.size() != len || seq.position_ids.size() != len) {
    throw IntegrityError("encoded sequence lists have different lengths");
  }
  Var tok = op::gather_rows(tape.leaf(tables.token), seq.token_ids);
  Var seg = op::gather_rows(tape.leaf(tables.segment), seq.segment_ids);
  Var pos = op::gather_rows(tape.leaf(tables.position), seq.position_ids);
  return op::add(op::add(tok, seg), pos);
}

}  // namespace qamatch
