#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace qamatch {

// Canonical "key=value" text: one pair per line, '#' comments and blank lines
// ignored on input. Duplicate keys are a ConfigError.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(std::string_view text);

// Typed field access; every parse failure is a ConfigError naming the key.
std::size_t kv_size(const KeyValues& kv, const std::string& key);
std::int64_t kv_int(const KeyValues& kv, const std::string& key);
std::uint64_t kv_u64(const KeyValues& kv, const std::string& key);
double kv_double(const KeyValues& kv, const std::string& key);
const std::string& kv_string(const KeyValues& kv, const std::string& key);
std::vector<std::size_t> parse_size_list(std::string_view text, const std::string& key);

std::string format_double(double v);
std::string format_size_list(const std::vector<std::size_t>& values);

}  // namespace qamatch
