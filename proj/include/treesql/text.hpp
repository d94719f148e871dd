#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

// Small string utilities shared across modules.
namespace treesql::text {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
/// Collapses runs of whitespace to one space and trims the ends.
std::string collapse_whitespace(std::string_view s);
std::string replace_all(std::string s, std::string_view from, std::string_view to);
bool iequals(std::string_view a, std::string_view b);
bool contains(std::string_view haystack, std::string_view needle);

/// Hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

/// Contents of the first ```json fenced block, else the first balanced
/// {...} object (string literals respected). nullopt when neither exists.
std::optional<std::string> extract_json_object(std::string_view raw);
/// First balanced {...} object only.
std::optional<std::string> extract_balanced_object(std::string_view raw);

/// Levenshtein distance over bytes.
std::size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace treesql::text
