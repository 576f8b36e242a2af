#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace chiq::text {

inline bool is_space(char c) {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline std::string_view trim(std::string_view s) {
    std::size_t begin = 0;
    std::size_t end = s.size();
    while (begin < end && is_space(s[begin])) ++begin;
    while (end > begin && is_space(s[end - 1])) --end;
    return s.substr(begin, end - begin);
}

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
    std::vector<std::string_view> tokens;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t start = i;
        while (i < s.size() && !is_space(s[i])) ++i;
        if (i > start) tokens.push_back(s.substr(start, i - start));
    }
    return tokens;
}

inline std::size_t count_tokens(std::string_view s) {
    return split_whitespace(s).size();
}

/// Keeps the first `limit` whitespace tokens. Text up to the end of the last
/// kept token is returned unchanged, so inner spacing survives.
inline std::string keep_head_tokens(std::string_view s, std::size_t limit) {
    auto tokens = split_whitespace(s);
    if (tokens.size() <= limit) return std::string(trim(s));
    if (limit == 0) return {};
    const auto& last = tokens[limit - 1];
    const auto first_offset = static_cast<std::size_t>(tokens.front().data() - s.data());
    const auto end_offset = static_cast<std::size_t>(last.data() - s.data()) + last.size();
    return std::string(s.substr(first_offset, end_offset - first_offset));
}

/// Keeps the last `limit` whitespace tokens (front truncation).
inline std::string keep_tail_tokens(std::string_view s, std::size_t limit) {
    auto tokens = split_whitespace(s);
    if (tokens.size() <= limit) return std::string(trim(s));
    if (limit == 0) return {};
    const auto& first = tokens[tokens.size() - limit];
    const auto& last = tokens.back();
    const auto begin = static_cast<std::size_t>(first.data() - s.data());
    const auto end = static_cast<std::size_t>(last.data() - s.data()) + last.size();
    return std::string(s.substr(begin, end - begin));
}

/// First non-blank line, trimmed.
inline std::string first_line(std::string_view s) {
    s = trim(s);
    if (auto pos = s.find('\n'); pos != std::string_view::npos) s = s.substr(0, pos);
    return std::string(trim(s));
}

inline bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

inline std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

}  // namespace chiq::text
