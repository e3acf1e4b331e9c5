#include "antidote/correction.hpp"

#include <algorithm>
#include <cctype>

#include "antidote/error.hpp"
#include "antidote/gateway.hpp"
#include "antidote/random.hpp"
#include "antidote/text.hpp"

namespace antidote::correction {

namespace {

constexpr std::string_view kFactPrefix = "Given the fact";
constexpr std::string_view kHintPrefix = "Given the hint";

}  // namespace

std::string policy_answer(gateway::Client& policy, QueryKind kind, const std::string& target,
                          const std::string& question, const std::string& prompt,
                          const assessor::AssessedSample& sample, bool with_prior) {
    const json vars{{"kind", querygen::to_string(kind)},
                    {"object", target},
                    {"with_prior", with_prior ? "true" : "false"},
                    {"question", question},
                    {"present", text::join(sample.triplet.present_objects, ", ")},
                    {"hallucination", text::join(sample.triplet.hallucination_candidates, ", ")},
                    {"caption", sample.triplet.caption}};
    const json request{{"task", "policy-answer"}, {"prompt", prompt}, {"image_ref", sample.image.image_ref},
                       {"vars", vars}};
    return text::trim(policy.call(request).at("text").get<std::string>());
}

json ResponsePair::to_json() const {
    json j{{"query_id", query_id},     {"triplet_id", triplet_id}, {"kind", querygen::to_string(kind)},
           {"image_ref", image_ref},   {"prompt_text", prompt_text}, {"original", original},
           {"corrected", corrected}};
    j["similarity"] = similarity ? json(*similarity) : json(nullptr);
    return j;
}

ResponsePair ResponsePair::from_json(const json& j) {
    ResponsePair p;
    try {
        p.query_id = j.at("query_id").get<std::string>();
        p.triplet_id = j.at("triplet_id").get<std::string>();
        p.kind = querygen::kind_from_string(j.at("kind").get<std::string>());
        p.image_ref = j.at("image_ref").get<std::string>();
        p.prompt_text = j.at("prompt_text").get<std::string>();
        p.original = j.at("original").get<std::string>();
        p.corrected = j.at("corrected").get<std::string>();
        if (j.contains("similarity") && !j["similarity"].is_null()) p.similarity = j["similarity"].get<double>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed response pair: ") + e.what());
    }
    return p;
}

json PreferencePair::to_json() const {
    return json{{"prompt_text", prompt_text}, {"image_ref", image_ref}, {"chosen", chosen},
                {"rejected", rejected},       {"kind", querygen::to_string(kind)}, {"triplet_id", triplet_id}};
}

PreferencePair PreferencePair::from_json(const json& j) {
    PreferencePair p;
    try {
        p.prompt_text = j.at("prompt_text").get<std::string>();
        p.image_ref = j.at("image_ref").get<std::string>();
        p.chosen = j.at("chosen").get<std::string>();
        p.rejected = j.at("rejected").get<std::string>();
        p.kind = querygen::kind_from_string(j.at("kind").get<std::string>());
        p.triplet_id = j.at("triplet_id").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed preference pair: ") + e.what());
    }
    return p;
}

json CompositionConfig::to_json() const {
    json c = json::object();
    for (const auto& [kind, n] : counts) c[std::string(querygen::to_string(kind))] = n;
    return json{{"counts", c}, {"seed", seed}};
}

bool contains_prior_clause(const std::string& s) {
    return s.find(kFactPrefix) != std::string::npos || s.find(kHintPrefix) != std::string::npos;
}

std::string build_factual_prompt(const TaskQuery& q) {
    if (text::trim(q.factual_prior).empty()) throw ConfigError("query '" + q.id + "' has no factual prior");
    if (q.kind != QueryKind::Description) {
        return "Given the fact that " + q.factual_prior + ", please answer: " + q.text;
    }
    std::string request = text::trim(q.text);
    if (text::starts_with_icase(request, "please ")) request = request.substr(7);
    if (!request.empty()) request[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(request[0])));
    return "Given the hint of the image: " + q.factual_prior + ", please " + request;
}

ResponsePair collect_pair(const TaskQuery& q, const assessor::AssessedSample& sample, gateway::Client& policy) {
    if (sample.image.image_ref.empty()) throw DataError("query '" + q.id + "' has no image");
    ResponsePair p;
    p.query_id = q.id;
    p.triplet_id = q.triplet_id;
    p.kind = q.kind;
    p.image_ref = sample.image.image_ref;
    p.prompt_text = q.text;
    const std::string target = q.target_objects.empty() ? std::string{} : q.target_objects.front();
    p.original = policy_answer(policy, q.kind, target, q.text, q.text, sample, false);
    p.corrected = policy_answer(policy, q.kind, target, q.text, build_factual_prompt(q), sample, true);
    if (p.original.empty() || p.corrected.empty()) throw DataError("query '" + q.id + "': empty policy answer");
    if (p.original == p.corrected) p.similarity = 1.0;
    return p;
}

json FilterReport::to_json() const {
    return json{{"total", total},
                {"kept", kept},
                {"dropped_degenerate", dropped_degenerate},
                {"dropped_similar", dropped_similar},
                {"threshold", threshold},
                {"discard_fraction", discard_fraction}};
}

FilterResult filter_pairs(const std::vector<ResponsePair>& pairs, gateway::Client& embed, double sim_threshold) {
    if (!(sim_threshold >= 0.0 && sim_threshold <= 1.0)) throw ConfigError("similarity threshold must be in [0,1]");
    FilterResult out;
    out.report.total = pairs.size();
    out.report.threshold = sim_threshold;
    for (const auto& p : pairs) {
        if (text::trim(p.original) == text::trim(p.corrected)) {
            ++out.report.dropped_degenerate;
            continue;
        }
        const json response = embed.call(json{{"texts", json::array({p.original, p.corrected})}});
        const auto a = response.at("vectors").at(0).get<std::vector<double>>();
        const auto b = response.at("vectors").at(1).get<std::vector<double>>();
        ResponsePair scored = p;
        scored.similarity = querygen::cosine(a, b);
        if (*scored.similarity >= sim_threshold) {
            ++out.report.dropped_similar;
            continue;
        }
        out.kept.push_back(std::move(scored));
    }
    out.report.kept = out.kept.size();
    if (out.report.total > 0) {
        out.report.discard_fraction =
            static_cast<double>(out.report.total - out.report.kept) / static_cast<double>(out.report.total);
    }
    return out;
}

std::vector<PreferencePair> compose_dataset(const std::vector<ResponsePair>& kept, const CompositionConfig& cfg) {
    std::map<QueryKind, std::vector<const ResponsePair*>> by_kind;
    for (const auto& p : kept) by_kind[p.kind].push_back(&p);

    std::map<std::string, std::size_t> shortfall;
    for (const auto& [kind, n] : cfg.counts) {
        const std::size_t have = by_kind[kind].size();
        if (have < n) shortfall[std::string(querygen::to_string(kind))] = n - have;
    }
    if (!shortfall.empty()) throw InsufficientData(shortfall);

    SeededRng rng(cfg.seed);
    std::vector<PreferencePair> out;
    for (QueryKind kind : querygen::kAllKinds) {
        auto it = cfg.counts.find(kind);
        if (it == cfg.counts.end() || it->second == 0) continue;
        auto pool = by_kind[kind];
        std::sort(pool.begin(), pool.end(), [](const auto* a, const auto* b) { return a->query_id < b->query_id; });
        rng.shuffle(pool);
        for (std::size_t i = 0; i < it->second; ++i) {
            const ResponsePair& p = *pool[i];
            if (contains_prior_clause(p.prompt_text)) {
                throw DataError("pair '" + p.query_id + "' carries a factual prior in its prompt text");
            }
            if (text::trim(p.original) == text::trim(p.corrected)) {
                throw DataError("pair '" + p.query_id + "' has identical chosen and rejected answers");
            }
            out.push_back(PreferencePair{p.prompt_text, p.image_ref, p.corrected, p.original, p.kind, p.triplet_id});
        }
    }
    rng.shuffle(out);
    return out;
}

}  // namespace antidote::correction
