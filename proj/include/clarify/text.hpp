#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace clarify {

std::vector<std::string> split(std::string_view line, char delimiter);
std::string_view trim(std::string_view text);
std::string to_lower(std::string_view text);

/// Shortest representation that round-trips to the same double.
std::string format_double(double value);
/// Strict parse of the whole string; throws InputError on junk.
double parse_double(std::string_view text);
std::size_t parse_size(std::string_view text);

/// Reads a UTF-8 text file as lines, stripping '\n' and a trailing '\r'.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Hex SHA-256 of the bytes.
std::string sha256_hex(std::string_view bytes);

}  // namespace clarify
