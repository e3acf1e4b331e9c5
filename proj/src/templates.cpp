#include "antidote/templates.hpp"

#include <fstream>
#include <sstream>

#include "antidote/error.hpp"

namespace antidote {

// Generated at configure time from templates/*.txt.
namespace generated {
extern const std::map<std::string, std::string>& builtin_templates();
}

const std::vector<std::string>& TemplateSet::required_keys() {
    static const std::vector<std::string> keys{"P0-recaption", "P1-rewrite", "P1-extract",
                                               "P1-verify",    "P2-cpq",     "P2-tpq",
                                               "P2-exist",     "P2-desc",    "P3-judge"};
    return keys;
}

TemplateSet TemplateSet::builtin() {
    TemplateSet set;
    for (const auto& [key, body] : generated::builtin_templates()) set.templates_.emplace(key, body);
    return set;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
    TemplateSet set;
    for (const auto& key : required_keys()) {
        const auto path = dir / (key + ".txt");
        std::ifstream in(path);
        if (!in) throw ConfigError("missing prompt template " + path.string());
        std::stringstream ss;
        ss << in.rdbuf();
        set.templates_.emplace(key, ss.str());
    }
    return set;
}

const std::string& TemplateSet::get(std::string_view key) const {
    auto it = templates_.find(key);
    if (it == templates_.end()) throw ConfigError("unknown prompt template '" + std::string(key) + "'");
    return it->second;
}

const std::vector<std::string>& description_templates() {
    static const std::vector<std::string> templates{
        "Please describe the image in detail.",
        "Can you describe what you see in the image thoroughly?",
        "Describe this image as completely as you can.",
        "What is happening in this image? Please give a detailed description.",
    };
    return templates;
}

const std::vector<std::string>& existence_openers() {
    static const std::vector<std::string> openers{"Is there", "Are there", "Can you see"};
    return openers;
}

}  // namespace antidote
