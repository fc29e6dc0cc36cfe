#include "autoquery/text.hpp"

#include <algorithm>
#include <cctype>

namespace autoquery::text {

namespace {
bool is_ws(unsigned char c) { return std::isspace(c) != 0; }
}  // namespace

std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string collapse_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool in_run = false;
    for (unsigned char c : s) {
        if (is_ws(c)) {
            in_run = true;
            continue;
        }
        if (in_run && !out.empty()) out.push_back(' ');
        in_run = false;
        out.push_back(static_cast<char>(c));
    }
    return out;
}

std::string normalize(std::string_view s) { return collapse_whitespace(to_lower(s)); }

std::string normalize_strip_punct(std::string_view s) {
    std::string lowered = to_lower(s);
    std::string no_punct;
    no_punct.reserve(lowered.size());
    for (unsigned char c : lowered) {
        if (std::ispunct(c)) continue;
        no_punct.push_back(static_cast<char>(c));
    }
    return collapse_whitespace(no_punct);
}

std::vector<std::string> split_whitespace(std::string_view s) {
    std::vector<std::string> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_ws(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t start = i;
        while (i < s.size() && !is_ws(static_cast<unsigned char>(s[i]))) ++i;
        if (i > start) tokens.emplace_back(s.substr(start, i - start));
    }
    return tokens;
}

std::size_t token_count(std::string_view s) {
    std::size_t count = 0;
    bool in_token = false;
    for (unsigned char c : s) {
        if (is_ws(c)) {
            in_token = false;
        } else if (!in_token) {
            in_token = true;
            ++count;
        }
    }
    return count;
}

std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : s) {
        h ^= static_cast<std::uint64_t>(c);
        h *= 1099511628211ull;
    }
    return h;
}

bool starts_with_icase(std::string_view s, std::string_view prefix) {
    if (s.size() < prefix.size()) return false;
    for (std::size_t i = 0; i < prefix.size(); ++i) {
        if (std::tolower(static_cast<unsigned char>(s[i])) !=
            std::tolower(static_cast<unsigned char>(prefix[i])))
            return false;
    }
    return true;
}

bool contains_icase(std::string_view s, std::string_view needle) {
    if (needle.empty()) return true;
    if (s.size() < needle.size()) return false;
    for (std::size_t i = 0; i + needle.size() <= s.size(); ++i) {
        if (starts_with_icase(s.substr(i), needle)) return true;
    }
    return false;
}

}  // namespace autoquery::text
