#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace kppo {

// Lowercase hex SHA-256 of the input bytes.
std::string sha256_hex(std::string_view data);

std::uint64_t splitmix64(std::uint64_t x);

// Deterministic seed derivation from a base seed and a list of coordinates.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> coords);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

void append_file(const std::filesystem::path& path, std::string_view content);

// Splits on '\n', dropping a trailing '\r' from every line. A final empty
// segment after a trailing newline is not returned.
std::vector<std::string> split_lines(std::string_view text);

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);

// Whitespace-delimited token count; stands in for a real tokenizer.
std::size_t count_tokens(std::string_view text);

void log_warning(std::string_view message);

} // namespace kppo
