#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace autoquery::text {

// ASCII lowercasing; bytes outside [A-Z] pass through untouched.
std::string to_lower(std::string_view s);

// Trim leading/trailing whitespace and collapse internal runs to one space.
std::string collapse_whitespace(std::string_view s);

// Canonical text form shared by the embedder, the semantic comparator and
// dedup keys: lowercase + whitespace collapse.
std::string normalize(std::string_view s);

// normalize() plus removal of punctuation bytes (dedup key form).
std::string normalize_strip_punct(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

// Count of whitespace-delimited tokens.
std::size_t token_count(std::string_view s);

// 64-bit FNV-1a over the bytes of `s`.
std::uint64_t fnv1a64(std::string_view s);

bool starts_with_icase(std::string_view s, std::string_view prefix);
bool contains_icase(std::string_view s, std::string_view needle);

}  // namespace autoquery::text
