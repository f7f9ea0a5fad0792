// Small string helpers shared across the library. Everything here is pure.
#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

namespace pitlab::text {

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string trim(std::string_view s) {
    const char* ws = " \t\r\n";
    auto b = s.find_first_not_of(ws);
    if (b == std::string_view::npos) return {};
    auto e = s.find_last_not_of(ws);
    return std::string(s.substr(b, e - b + 1));
}

inline bool contains_ci(std::string_view haystack, std::string_view needle) {
    if (needle.empty()) return true;
    return to_lower(haystack).find(to_lower(needle)) != std::string::npos;
}

inline std::vector<std::string> split_lines(std::string_view s) {
    std::vector<std::string> out;
    size_t start = 0;
    while (start <= s.size()) {
        auto nl = s.find('\n', start);
        if (nl == std::string_view::npos) {
            out.emplace_back(s.substr(start));
            break;
        }
        out.emplace_back(s.substr(start, nl - start));
        start = nl + 1;
    }
    return out;
}

// Splits free text into sentences on ., !, ? and newlines. Offsets refer to
// the original string so matches can be reported verbatim.
struct Sentence {
    std::string body;
    size_t offset = 0;
};

inline std::vector<Sentence> split_sentences(std::string_view s) {
    std::vector<Sentence> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        // '.' inside tokens like host names or email addresses is not a
        // sentence boundary; require whitespace or end-of-text after it.
        bool punct = i < s.size() && (s[i] == '.' || s[i] == '!' || s[i] == '?');
        bool followed_by_space =
            i + 1 >= s.size() || s[i + 1] == ' ' || s[i + 1] == '\t' || s[i + 1] == '\n';
        bool boundary =
            i == s.size() || s[i] == '\n' || (punct && followed_by_space);
        if (!boundary) continue;
        std::string_view piece = s.substr(start, i - start);
        std::string trimmed = trim(piece);
        if (!trimmed.empty()) {
            size_t lead = piece.find_first_not_of(" \t\r\n");
            out.push_back({std::move(trimmed), start + lead});
        }
        start = i + 1;
    }
    return out;
}

// Longest common substring of a and b. O(|a|*|b|) with a rolling row; inputs
// here are tool outputs and call arguments, at most a few KB.
inline std::string longest_common_substring(std::string_view a, std::string_view b) {
    if (a.empty() || b.empty()) return {};
    std::vector<uint32_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    size_t best_len = 0, best_end = 0;
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            if (a[i - 1] == b[j - 1]) {
                cur[j] = prev[j - 1] + 1;
                if (cur[j] > best_len) {
                    best_len = cur[j];
                    best_end = i;
                }
            } else {
                cur[j] = 0;
            }
        }
        std::swap(prev, cur);
    }
    return std::string(a.substr(best_end - best_len, best_len));
}

// FNV-1a 64-bit, hex encoded. Used for description digests in discovery events.
inline std::string fnv1a_hex(std::string_view s) {
    uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    static const char* digits = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = digits[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

inline std::regex make_regex_ci(const std::string& pattern) {
    return std::regex(pattern, std::regex::ECMAScript | std::regex::icase);
}

// First match of any pattern in `text`; returns the matched text and offset.
struct Match {
    std::string matched;
    size_t offset = 0;
};

inline std::optional<Match> search_ci(std::string_view text, const std::string& pattern) {
    std::regex re = make_regex_ci(pattern);
    std::cmatch m;
    if (std::regex_search(text.data(), text.data() + text.size(), m, re)) {
        return Match{m.str(0), static_cast<size_t>(m.position(0))};
    }
    return std::nullopt;
}

}  // namespace pitlab::text
