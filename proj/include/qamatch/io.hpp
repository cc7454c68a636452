#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

namespace qamatch {

// Writes to "<path>.tmp" then renames over `path`. PersistenceError on failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

// Whole file as bytes; nullopt when it cannot be opened.
std::optional<std::string> read_file(const std::filesystem::path& path);

}  // namespace qamatch
