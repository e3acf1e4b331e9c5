// Rule-based stand-ins for the external models, used by stub://synthetic.
// They read the structured `vars` of a request rather than the prompt text.

#include <algorithm>
#include <array>
#include <set>
#include <sstream>

#include "antidote/hash.hpp"
#include "antidote/stubs.hpp"
#include "antidote/templates.hpp"
#include "antidote/text.hpp"

namespace antidote::gateway::synthetic {

namespace {

// Objects that co-occur in everyday scenes.
const std::vector<std::vector<std::string>>& scene_groups() {
    static const std::vector<std::vector<std::string>> groups{
        {"boat", "water", "pier", "dock", "seagull", "bridge", "buoy", "lighthouse", "harbor"},
        {"car", "road", "bus", "bicycle", "building", "sidewalk", "truck", "streetlight"},
        {"table", "plate", "cup", "knife", "fork", "oven", "bowl", "bottle", "kitchen"},
        {"dog", "tree", "bench", "grass", "frisbee", "kite", "ball", "park", "fountain"},
        {"sand", "umbrella", "surfboard", "towel", "wave", "beach", "sunglasses"},
        {"train", "railroad", "platform", "station", "clock", "passenger"},
        {"bed", "lamp", "pillow", "window", "book", "chair", "laptop", "curtain"},
        {"mountain", "snow", "skier", "sled", "jacket", "cabin"},
        {"horse", "fence", "barn", "field", "farmer", "tractor"},
        {"cat", "sofa", "rug", "television", "plant", "vase"},
    };
    return groups;
}

const std::set<std::string>& stopwords() {
    static const std::set<std::string> words{
        "a",     "an",   "the",  "and",   "with",   "on",    "in",    "of",   "at",    "near",
        "by",    "for",  "from", "under", "over",   "into",  "its",   "their", "some",  "two",
        "three", "very", "while", "next", "behind", "front", "along", "across", "during", "this",
        "that",  "is",   "are",  "sits",  "stands", "large", "small", "old",   "young", "red",
        "blue",  "green", "white", "black", "wooden", "calm", "busy", "sunny", "rainy", "bright"};
    return words;
}

std::string var(const json& request, const char* name) {
    const json vars = request.value("vars", json::object());
    if (!vars.contains(name)) return {};
    return vars[name].is_string() ? vars[name].get<std::string>() : vars[name].dump();
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = text::trim(item);
        if (!item.empty()) out.push_back(text::to_lower(item));
    }
    return out;
}

bool mentions(const std::vector<std::string>& words, const std::string& label) {
    return std::any_of(words.begin(), words.end(),
                       [&](const std::string& w) { return w == label || w == label + "s"; });
}

std::string article(const std::string& label) {
    if (!label.empty() && label.back() == 's') return label;
    const bool vowel = !label.empty() && std::string("aeiou").find(label[0]) != std::string::npos;
    return (vowel ? "an " : "a ") + label;
}

std::uint64_t key_of(std::initializer_list<std::string_view> parts) {
    std::uint64_t h = 0;
    for (auto p : parts) h = hash::mix(h, hash::fnv1a64(p));
    return h;
}

std::string first_words(const std::string& s, std::size_t n) {
    auto words = text::split_words(s);
    if (words.size() > n) words.resize(n);
    std::string out = text::join(words, " ");
    while (!out.empty() && (out.back() == '.' || out.back() == ',')) out.pop_back();
    return out;
}

json reply(std::string s) { return json{{"text", std::move(s)}}; }

json extract(const std::string& caption) {
    const auto words = text::split_words(text::normalize(caption));
    std::vector<std::string> present;
    std::set<std::size_t> groups_hit;
    for (const auto& w : words) {
        for (std::size_t g = 0; g < scene_groups().size(); ++g) {
            for (const auto& label : scene_groups()[g]) {
                if ((w == label || w == label + "s") &&
                    std::find(present.begin(), present.end(), label) == present.end() &&
                    present.size() < 4) {
                    present.push_back(label);
                    groups_hit.insert(g);
                }
            }
        }
    }
    if (present.empty()) {
        for (const auto& w : words) {
            if (w.size() >= 4 && !stopwords().count(w) && present.size() < 2) present.push_back(w);
        }
    }
    std::vector<std::string> pool;
    for (auto g : groups_hit) {
        for (const auto& label : scene_groups()[g]) {
            if (!mentions(words, label)) pool.push_back(label);
        }
    }
    if (pool.empty()) pool = {"car", "dog", "umbrella", "bicycle", "bench"};
    std::sort(pool.begin(), pool.end(), [&](const std::string& a, const std::string& b) {
        return key_of({caption, a}) < key_of({caption, b});
    });
    std::vector<std::string> hallu;
    for (const auto& label : pool) {
        if (hallu.size() == 3) break;
        if (!mentions(words, label)) hallu.push_back(label);
    }
    return reply("present: [" + text::join(present, ", ") + "]\nabsent-candidates: [" +
                 text::join(hallu, ", ") + "]");
}

json verify(const json& request) {
    const auto present = split_list(var(request, "present"));
    const auto hallu = split_list(var(request, "hallucination"));
    auto in_bounds = [](std::size_t n) { return n >= 1 && n <= 5; };
    bool conflict = false;
    for (const auto& p : present) conflict |= std::find(hallu.begin(), hallu.end(), p) != hallu.end();
    std::string out;
    out += in_bounds(present.size()) && in_bounds(hallu.size()) ? "object_count: pass\n"
                                                                 : "object_count: fail list size out of range\n";
    out += "visible_entities: pass\n";
    out += conflict ? "no_conflict: fail an object appears in both lists\n" : "no_conflict: pass\n";
    return reply(out);
}

struct QuestionTemplate {
    const char* marker;  // phrase that identifies the template inside an avoid-list
    const char* pattern;
};

constexpr std::array<QuestionTemplate, 5> kObjectQuestions{{
    {"made of", "What is the {o} made of?"},
    {"what color", "What color is the {o}?"},
    {"located", "Where is the {o} located in the image?"},
    {"how large", "How large is the {o} compared to its surroundings?"},
    {"used for", "What is the {o} being used for?"},
}};

json object_question(const json& request) {
    const std::string object = var(request, "object");
    const std::string avoid = text::to_lower(var(request, "avoid"));
    const std::size_t start = key_of({var(request, "caption"), object}) % kObjectQuestions.size();
    std::size_t pick = start;
    for (std::size_t i = 0; i < kObjectQuestions.size(); ++i) {
        const std::size_t idx = (start + i) % kObjectQuestions.size();
        if (avoid.find(kObjectQuestions[idx].marker) == std::string::npos) {
            pick = idx;
            break;
        }
    }
    return reply(text::render(std::string(kObjectQuestions[pick].pattern),
                              std::map<std::string, std::string>{{"o", object}}));
}

json existence_question(const json& request) {
    const std::string object = var(request, "object");
    const bool plural = !object.empty() && object.back() == 's';
    if (plural) return reply("Are there " + object + " in the image?");
    const bool second = key_of({var(request, "caption"), object}) % 2 == 1;
    return reply((second ? "Can you see " : "Is there ") + article(object) + " in the image?");
}

json description_request(const json& request) {
    const auto& options = description_templates();
    const std::string avoid = var(request, "avoid");
    const std::size_t start = key_of({var(request, "caption")}) % options.size();
    for (std::size_t i = 0; i < options.size(); ++i) {
        const auto& candidate = options[(start + i) % options.size()];
        if (avoid.find(candidate) == std::string::npos) return reply(candidate);
    }
    return reply(options[start]);
}

const char* attribute(const std::string& object) {
    static constexpr std::array<const char*, 6> attrs{"wooden", "metallic", "bright red",
                                                      "dark blue", "plastic", "stone grey"};
    return attrs[hash::fnv1a64(object) % attrs.size()];
}

// The policy model: hallucinates without a prior, corrects itself with one.
json policy_answer(const json& request) {
    const std::string kind = var(request, "kind");
    const std::string object = var(request, "object");
    const bool with_prior = var(request, "with_prior") == "true";
    const auto present = split_list(var(request, "present"));
    const auto hallu = split_list(var(request, "hallucination"));
    const std::string a = article(object);

    if (kind == "CPQ") {
        if (with_prior) return reply("I cannot answer the question, as there is no " + object + " in the image.");
        return reply("The " + object + " appears " + attribute(object) + " and is clearly visible in the scene.");
    }
    if (kind == "TPQ") {
        const std::string original =
            "The " + object + " appears " + attribute(object) + " and is clearly visible in the scene.";
        if (!with_prior || key_of({var(request, "question")}) % 3 == 0) return reply(original);
        return reply("Yes, looking closely, the " + object + " in this picture is " + attribute(object) + ".");
    }
    if (kind == "Existence") {
        const bool is_present = std::find(present.begin(), present.end(), object) != present.end();
        if (with_prior && !is_present) return reply("No, there is no " + object + " in the image.");
        return reply("Yes, there is " + a + " in the image.");
    }
    // Description
    if (with_prior) {
        return reply("In this picture I can see " + text::join(present, ", ") + ". No " +
                     text::join(hallu, " or ") + " appears anywhere.");
    }
    const std::string extra = hallu.empty() ? std::string("person") : hallu.front();
    return reply("The image shows " + first_words(var(request, "caption"), 15) + ", with " + article(extra) +
                 " in the background.");
}

}  // namespace

json textgen(const json& request) {
    const std::string task = request.value("task", std::string{});
    const std::string caption = var(request, "caption");
    if (task == "P0-recaption") {
        if (text::word_count(text::normalize(caption)) < 3) return reply("REJECT");
        return reply(text::join(text::split_words(caption), " "));
    }
    if (task == "P1-rewrite") return reply(first_words(caption, 15));
    if (task == "P1-extract") return extract(caption);
    if (task == "P1-verify") return verify(request);
    if (task == "P2-cpq" || task == "P2-tpq") return object_question(request);
    if (task == "P2-exist") return existence_question(request);
    if (task == "P2-desc") return description_request(request);
    if (task == "policy-answer") return policy_answer(request);
    return reply("OK");
}

json judge(const json& request) {
    const std::string response = text::to_lower(var(request, "response"));
    const std::string label = var(request, "label");
    static const std::array<const char*, 6> denials{"there is no", "there are no", "cannot answer",
                                                    "isn't",       "is not present", "no such"};
    const bool denies = std::any_of(denials.begin(), denials.end(),
                                    [&](const char* d) { return response.find(d) != std::string::npos; });
    const bool correct = label == "positive" ? denies : !denies;
    return reply(correct ? "YES\nThe answer handles the presupposition correctly."
                         : "NO\nThe answer does not handle the presupposition correctly.");
}

json detect(const json& request, const ImageResolver& resolver) {
    const std::string image_ref = request.at("image_ref").get<std::string>();
    const std::string label = text::to_lower(text::trim(request.at("label").get<std::string>()));
    const std::uint64_t key = key_of({image_ref, label});
    const double u = hash::unit_interval(key);

    std::optional<std::string> bytes;
    if (resolver) bytes = resolver(image_ref);
    double confidence = 0.0;
    if (bytes) {
        std::string prompt;
        std::string negative;
        std::stringstream ss(*bytes);
        std::string line;
        while (std::getline(ss, line)) {
            if (line.rfind("# prompt: ", 0) == 0) prompt = line.substr(10);
            if (line.rfind("# negative: ", 0) == 0) negative = line.substr(12);
        }
        const auto negatives = split_list(negative);
        const auto prompt_words = text::split_words(text::normalize(prompt));
        if (std::find(negatives.begin(), negatives.end(), label) != negatives.end()) {
            // The generator occasionally ignores the negative prompt.
            confidence = u < 0.12 ? 0.6 + 0.3 * u : 0.05 + 0.2 * u;
        } else if (mentions(prompt_words, label)) {
            confidence = u < 0.10 ? 0.1 + 0.2 * u : 0.55 + 0.4 * u;
        } else {
            confidence = 0.1 * u;
        }
    }
    json boxes = json::array();
    if (confidence >= kDefaultDetectionThreshold) {
        const double x0 = 0.05 + 0.4 * hash::unit_interval(hash::mix(key, 1));
        const double y0 = 0.05 + 0.4 * hash::unit_interval(hash::mix(key, 2));
        boxes.push_back({x0, y0, x0 + 0.3, y0 + 0.3});
    }
    return json{{"max_confidence", confidence}, {"boxes", boxes}};
}

}  // namespace antidote::gateway::synthetic
