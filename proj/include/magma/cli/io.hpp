#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace magma::cli {

// Whole-file read; throws DataError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Writes to a temporary sibling and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

}  // namespace magma::cli
