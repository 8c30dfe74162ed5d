#pragma once

#include <filesystem>
#include <map>
#include <string>

namespace gtr {

/// Flat key/value settings as read from `key = value` files.
using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines; '#' starts a comment, blank lines are skipped.
[[nodiscard]] KeyValues parse_key_values(const std::string& text);
[[nodiscard]] KeyValues read_key_values(const std::filesystem::path& path);
[[nodiscard]] std::string format_key_values(const KeyValues& kv);

[[nodiscard]] int parse_int(const std::string& key, const std::string& value);
[[nodiscard]] double parse_double(const std::string& key, const std::string& value);
[[nodiscard]] bool parse_bool(const std::string& key, const std::string& value);
[[nodiscard]] std::string format_double(double v);

}  // namespace gtr
