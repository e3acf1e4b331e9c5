#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace antidote::text {

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

// Whitespace-separated tokens, no normalization.
std::vector<std::string> split_words(std::string_view s);
std::size_t word_count(std::string_view s);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool contains_icase(std::string_view haystack, std::string_view needle);
bool starts_with_icase(std::string_view s, std::string_view prefix);

// Lowercase, drop ASCII punctuation, collapse whitespace runs.
std::string normalize(std::string_view s);

// Replaces every "{name}" with vars[name]; unknown placeholders are left as-is.
template <typename Map>
std::string render(std::string_view tmpl, const Map& vars) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            auto close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                std::string key(tmpl.substr(i + 1, close - i - 1));
                auto it = vars.find(key);
                if (it != vars.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out += tmpl[i++];
    }
    return out;
}

}  // namespace antidote::text
