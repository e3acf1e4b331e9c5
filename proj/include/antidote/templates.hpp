#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace antidote {

/// Prompt templates keyed P0-recaption, P1-rewrite, P1-extract, P1-verify,
/// P2-cpq, P2-tpq, P2-exist, P2-desc and P3-judge. Placeholders use {name}.
class TemplateSet {
public:
    // The copies of templates/*.txt compiled into the library.
    static TemplateSet builtin();
    // Reads <dir>/<key>.txt for every required key; ConfigError if one is missing.
    static TemplateSet load(const std::filesystem::path& dir);

    const std::string& get(std::string_view key) const;

    static const std::vector<std::string>& required_keys();

private:
    std::map<std::string, std::string, std::less<>> templates_;
};

// Accepted image-description requests.
const std::vector<std::string>& description_templates();

// Leading phrases an object-existence question may start with.
const std::vector<std::string>& existence_openers();

inline constexpr std::string_view kAvoidClausePrefix =
    "Do not generate questions similar to the following:";

}  // namespace antidote
