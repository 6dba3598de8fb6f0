#pragma once

// Small string helpers shared across modules. ASCII-only case folding; bytes
// outside ASCII pass through untouched.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace trialmatch::text {

std::string to_lower(std::string_view s);
std::string_view trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// Lowercased maximal runs of ASCII letters and digits. Non-ASCII bytes are
/// kept inside tokens so accented words are not split apart.
std::vector<std::string> word_tokens(std::string_view s);

std::vector<std::string> split(std::string_view s, char sep);

/// Replaces every "{{name}}" with the matching value.
std::string render(std::string_view tmpl,
                   const std::vector<std::pair<std::string, std::string>>& vars);

/// 64-bit FNV-1a. Stable across platforms, used for content addressing and
/// template versioning.
std::uint64_t fnv1a64(std::string_view s, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

}  // namespace trialmatch::text
