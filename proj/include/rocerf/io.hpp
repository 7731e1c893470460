#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace rocerf {

// Reads a whole file; throws Error(kMissingFile) when it cannot be opened.
std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes);

// Shortest decimal form that round-trips.
std::string format_number(double value);

}  // namespace rocerf
