#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace grhd {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Flat "key = value" text. Blank lines and '#' comments are ignored; keys and
// values are trimmed. A line without '=' or a repeated key is InvalidConfig.
KeyValues parse_key_values(std::string_view text);
KeyValues read_key_value_file(const std::filesystem::path& path);

std::string trim(std::string_view s);
std::vector<std::string> split_list(std::string_view s, char sep = ',');

// Strict numeric parsing; trailing garbage is InvalidConfig naming `key`.
double parse_double(std::string_view key, std::string_view value);
long long parse_int(std::string_view key, std::string_view value);
bool parse_bool(std::string_view key, std::string_view value);

// Shortest text that parses back to the same double.
std::string format_double(double v);

}  // namespace grhd
