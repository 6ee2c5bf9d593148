#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dapt {

// Error categories used across the library. The C API and the CLI map these
// onto status/exit codes; everything else is reported as an internal error.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---- string helpers ----

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
bool starts_with_ci(std::string_view text, std::string_view prefix);
bool contains_ci(std::string_view text, std::string_view needle);
std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Splits on runs of ASCII whitespace, dropping empty tokens.
std::vector<std::string> split_whitespace(std::string_view s);
int64_t count_whitespace_tokens(std::string_view s);

// ---- utf-8 ----

// Decodes the next code point starting at `pos`; advances `pos` past it.
// Invalid bytes decode as U+FFFD and advance by one.
uint32_t utf8_next(std::string_view s, size_t& pos);
void utf8_append(std::string& out, uint32_t cp);
std::vector<std::string> utf8_chars(std::string_view s);

// ---- numbers ----

// Round-half-up at `digits` decimal places (ties away from zero would differ
// for negatives; scores here are non-negative).
double round_half_up(double x, int digits);
int64_t round_half_up_to_int(double x);

// Formats an integer with "," thousands separators.
std::string with_thousands(int64_t n);

// ---- files ----

std::string read_file(const std::string& path);          // throws DataError
void write_file(const std::string& path, std::string_view contents);
std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
bool file_exists(const std::string& path);

// FNV-1a 64-bit, used as the checkpoint trailer checksum.
uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ull);

}  // namespace dapt
