#include "antidote/scene.hpp"

#include <algorithm>
#include <cctype>

#include "antidote/error.hpp"
#include "antidote/gateway.hpp"
#include "antidote/parallel.hpp"
#include "antidote/text.hpp"

namespace antidote::scene {

namespace {

constexpr std::string_view kStatusNames[] = {"proposed", "verified", "assessed", "discarded"};
constexpr std::string_view kReflectionRules[] = {"object_count", "visible_entities", "no_conflict"};

std::string strip_label(std::string_view raw) {
    std::string s = text::trim(raw);
    auto junk = [](unsigned char c) {
        return c == '"' || c == '\'' || c == '`' || c == '.' || c == '*' || std::isspace(c);
    };
    while (!s.empty() && junk(static_cast<unsigned char>(s.front()))) s.erase(s.begin());
    while (!s.empty() && junk(static_cast<unsigned char>(s.back()))) s.pop_back();
    return text::to_lower(s);
}

std::vector<std::string> parse_list_after(const std::string& lowered, const std::string& original,
                                          std::string_view key) {
    const std::string marker = std::string(key) + ":";
    std::size_t pos = std::string::npos;
    // The key must start a line or follow a ';' separator.
    for (std::size_t at = lowered.find(marker); at != std::string::npos; at = lowered.find(marker, at + 1)) {
        std::size_t b = at;
        while (b > 0 && (lowered[b - 1] == ' ' || lowered[b - 1] == '\t')) --b;
        if (b == 0 || lowered[b - 1] == '\n' || lowered[b - 1] == ';' || lowered[b - 1] == '-') {
            pos = at;
            break;
        }
    }
    if (pos == std::string::npos) throw ParseError("reply has no '" + marker + "' list");
    const auto open = original.find('[', pos + marker.size());
    const auto eol = original.find('\n', pos);
    if (open == std::string::npos || (eol != std::string::npos && open > eol)) {
        throw ParseError("'" + marker + "' is not followed by a [ ... ] list");
    }
    const auto close = original.find(']', open);
    if (close == std::string::npos || (eol != std::string::npos && close > eol)) {
        throw ParseError("unterminated list after '" + marker + "'");
    }
    std::vector<std::string> items;
    const std::string body = original.substr(open + 1, close - open - 1);
    if (text::trim(body).empty()) return items;
    std::size_t start = 0;
    while (true) {
        const auto comma = body.find(',', start);
        items.push_back(body.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
        if (comma == std::string::npos) break;
        start = comma + 1;
    }
    return items;
}

std::string reply_text(gateway::Client& client, const json& request) {
    return client.call(request).at("text").get<std::string>();
}

json request_for(std::string_view task, const std::string& prompt, const json& vars) {
    return json{{"task", task}, {"prompt", prompt}, {"vars", vars}};
}

std::string vars_prompt(const TemplateSet& templates, std::string_view key, const json& vars) {
    std::map<std::string, std::string> flat;
    for (const auto& [k, v] : vars.items()) flat[k] = v.is_string() ? v.get<std::string>() : v.dump();
    return text::render(templates.get(key), flat);
}

}  // namespace

std::string_view to_string(TripletStatus s) { return kStatusNames[static_cast<int>(s)]; }

TripletStatus status_from_string(std::string_view s) {
    for (int i = 0; i < 4; ++i) {
        if (kStatusNames[i] == s) return static_cast<TripletStatus>(i);
    }
    throw DataError("unknown triplet status '" + std::string(s) + "'");
}

json SceneTriplet::to_json() const {
    json j{{"id", id},
           {"caption", caption},
           {"present_objects", present_objects},
           {"hallucination_candidates", hallucination_candidates},
           {"status", to_string(status)}};
    if (!discard_reason.empty()) j["discard_reason"] = discard_reason;
    return j;
}

SceneTriplet SceneTriplet::from_json(const json& j) {
    SceneTriplet t;
    try {
        t.id = j.at("id").get<std::string>();
        t.caption = j.at("caption").get<std::string>();
        t.present_objects = j.at("present_objects").get<std::vector<std::string>>();
        t.hallucination_candidates = j.at("hallucination_candidates").get<std::vector<std::string>>();
        t.status = status_from_string(j.at("status").get<std::string>());
        t.discard_reason = j.value("discard_reason", std::string{});
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed triplet record: ") + e.what());
    }
    return t;
}

bool ValidationReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const auto& kv) { return kv.second.passed; });
}

json ValidationReport::to_json() const {
    json c = json::object();
    for (const auto& [name, r] : checks) c[name] = {{"passed", r.passed}, {"message", r.message}};
    return json{{"triplet_id", triplet_id}, {"checks", c}, {"verdict", passed() ? "pass" : "fail"}};
}

std::vector<std::string> normalize_labels(const std::vector<std::string>& labels) {
    std::vector<std::string> out;
    for (const auto& raw : labels) {
        std::string l = strip_label(raw);
        if (std::find(out.begin(), out.end(), l) == out.end()) out.push_back(std::move(l));
    }
    return out;
}

std::pair<std::vector<std::string>, std::vector<std::string>> parse_triplet_reply(std::string_view reply) {
    const std::string original(reply);
    const std::string lowered = text::to_lower(original);
    auto present = parse_list_after(lowered, original, "present");
    auto absent = parse_list_after(lowered, original, "absent-candidates");
    return {normalize_labels(present), normalize_labels(absent)};
}

std::string rewrite_caption(const corpus::Caption& caption, gateway::Client& textgen,
                            const TemplateSet& templates, const SceneConfig& cfg) {
    const std::string& source = caption.effective_text();
    if (text::trim(source).empty()) throw RewriteFailed("caption '" + caption.id + "' has no text");
    std::string last_problem;
    for (std::size_t attempt = 1; attempt <= cfg.max_rewrite_attempts; ++attempt) {
        const json vars{{"caption", source}, {"attempt", std::to_string(attempt)}};
        std::string reply = text::trim(reply_text(
            textgen, request_for("P1-rewrite", vars_prompt(templates, "P1-rewrite", vars), vars)));
        std::string bare = reply;
        while (!bare.empty() && bare.back() == '.') bare.pop_back();
        if (bare == "REJECT") throw CaptionRejected("caption '" + caption.id + "' rejected by backend");
        const auto words = text::word_count(reply);
        if (words == 0) {
            last_problem = "empty rewrite";
        } else if (words > cfg.max_prompt_words) {
            last_problem = "rewrite has " + std::to_string(words) + " words (limit " +
                           std::to_string(cfg.max_prompt_words) + ")";
        } else {
            return reply;
        }
    }
    throw RewriteFailed("caption '" + caption.id + "': " + last_problem + " after " +
                        std::to_string(cfg.max_rewrite_attempts) + " attempt(s)");
}

SceneTriplet extract_triplet(const std::string& triplet_id, const std::string& prompt_caption,
                             gateway::Client& textgen, const TemplateSet& templates,
                             const SceneConfig& cfg) {
    std::string last_error;
    for (std::size_t attempt = 1; attempt <= cfg.max_parse_retries + 1; ++attempt) {
        const json vars{{"caption", prompt_caption}, {"attempt", std::to_string(attempt)}};
        const std::string reply =
            reply_text(textgen, request_for("P1-extract", vars_prompt(templates, "P1-extract", vars), vars));
        try {
            auto [present, absent] = parse_triplet_reply(reply);
            SceneTriplet t;
            t.id = triplet_id;
            t.caption = prompt_caption;
            t.present_objects = std::move(present);
            t.hallucination_candidates = std::move(absent);
            t.status = TripletStatus::proposed;
            return t;
        } catch (const ParseError& e) {
            last_error = e.what();
        }
    }
    throw ParseError("triplet '" + triplet_id + "': " + last_error);
}

ValidationReport verify_triplet(SceneTriplet& t, gateway::Client& textgen, const TemplateSet& templates,
                                const SceneConfig& cfg) {
    if (t.status != TripletStatus::proposed && t.status != TripletStatus::verified) {
        throw DataError("triplet '" + t.id + "' is " + std::string(to_string(t.status)) +
                        "; only proposed triplets can be verified");
    }
    ValidationReport report;
    report.triplet_id = t.id;

    auto count_check = [&](const std::vector<std::string>& list) {
        const bool ok = !list.empty() && list.size() <= cfg.max_objects;
        return CheckResult{ok, std::to_string(list.size()) + " object(s), allowed 1.." +
                                   std::to_string(cfg.max_objects)};
    };
    report.checks["count_present"] = count_check(t.present_objects);
    report.checks["count_hallucination"] = count_check(t.hallucination_candidates);

    std::vector<std::string> overlap;
    for (const auto& p : t.present_objects) {
        if (std::find(t.hallucination_candidates.begin(), t.hallucination_candidates.end(), p) !=
            t.hallucination_candidates.end()) {
            overlap.push_back(p);
        }
    }
    report.checks["disjoint"] = {overlap.empty(),
                                 overlap.empty() ? "lists are disjoint" : "in both lists: " + text::join(overlap, ", ")};

    auto has_empty = [](const std::vector<std::string>& l) {
        return std::any_of(l.begin(), l.end(), [](const std::string& s) { return s.empty(); });
    };
    const bool labels_ok = !has_empty(t.present_objects) && !has_empty(t.hallucination_candidates);
    report.checks["labels_nonempty"] = {labels_ok, labels_ok ? "ok" : "empty label present"};

    if (report.passed()) {
        const json vars{{"caption", t.caption},
                        {"present", text::join(t.present_objects, ", ")},
                        {"hallucination", text::join(t.hallucination_candidates, ", ")}};
        const std::string reply =
            reply_text(textgen, request_for("P1-verify", vars_prompt(templates, "P1-verify", vars), vars));
        const std::string lowered = text::to_lower(reply);
        for (auto rule : kReflectionRules) {
            CheckResult r{false, "no verdict returned"};
            const std::string marker = std::string(rule) + ":";
            if (auto at = lowered.find(marker); at != std::string::npos) {
                const auto eol = lowered.find('\n', at);
                const std::string verdict = text::trim(
                    lowered.substr(at + marker.size(), eol == std::string::npos ? std::string::npos
                                                                                : eol - at - marker.size()));
                r.passed = verdict.rfind("pass", 0) == 0;
                r.message = verdict;
            }
            report.checks["reflection." + std::string(rule)] = r;
        }
    }

    if (t.status == TripletStatus::proposed) {
        if (report.passed()) {
            t.status = TripletStatus::verified;
        } else {
            t.status = TripletStatus::discarded;
            std::vector<std::string> failed;
            for (const auto& [name, r] : report.checks) {
                if (!r.passed) failed.push_back(name);
            }
            t.discard_reason = "verification_failed: " + text::join(failed, ", ");
        }
    }
    return report;
}

std::vector<SceneOutcome> run_scene(const std::vector<corpus::Caption>& captions, gateway::Client& textgen,
                                    const TemplateSet& templates, const SceneConfig& cfg) {
    std::vector<SceneOutcome> outcomes(captions.size());
    parallel_for(captions.size(), textgen.endpoint().parallelism_budget, [&](std::size_t i) {
        const auto& c = captions[i];
        SceneOutcome& out = outcomes[i];
        out.caption_id = c.id;
        try {
            const std::string prompt = rewrite_caption(c, textgen, templates, cfg);
            SceneTriplet t = extract_triplet("t-" + c.id, prompt, textgen, templates, cfg);
            out.report = verify_triplet(t, textgen, templates, cfg);
            out.triplet = std::move(t);
        } catch (const CaptionRejected& e) {
            out.dropped_reason = std::string("rejected: ") + e.what();
        } catch (const RewriteFailed& e) {
            out.dropped_reason = std::string("rewrite_failed: ") + e.what();
        } catch (const ParseError& e) {
            out.dropped_reason = std::string("parse_failed: ") + e.what();
        }
    });
    return outcomes;
}

}  // namespace antidote::scene
