#include "antidote/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>

#include "antidote/error.hpp"
#include "antidote/gateway.hpp"
#include "antidote/random.hpp"
#include "antidote/text.hpp"

namespace antidote::bench {

namespace {

constexpr std::string_view kLabels[] = {"positive", "negative"};
constexpr std::string_view kCategories[] = {"item", "knowledge", "scene", "activity", "unspecified"};
constexpr std::string_view kPredicted[] = {"positive", "negative", "unparsable"};

template <std::size_t N, typename E>
E from_names(const std::string_view (&names)[N], std::string_view s, const char* what) {
    for (std::size_t i = 0; i < N; ++i) {
        if (names[i] == s) return static_cast<E>(i);
    }
    throw DataError("unknown " + std::string(what) + " '" + std::string(s) + "'");
}

const char* rubric_for(Label label) {
    if (label == Label::positive) {
        return "The question presupposes an object that is NOT in the image. The answer is correct only if it "
               "points out that the object is absent instead of describing it.";
    }
    return "The question asks about an object that IS in the image. The answer is correct only if it answers the "
           "question without denying that the object is present.";
}

}  // namespace

std::string_view to_string(Label l) { return kLabels[static_cast<int>(l)]; }
std::string_view to_string(Category c) { return kCategories[static_cast<int>(c)]; }
std::string_view to_string(Predicted p) { return kPredicted[static_cast<int>(p)]; }
Label label_from_string(std::string_view s) { return from_names<2, Label>(kLabels, s, "label"); }
Category category_from_string(std::string_view s) { return from_names<5, Category>(kCategories, s, "category"); }
Predicted predicted_from_string(std::string_view s) { return from_names<3, Predicted>(kPredicted, s, "verdict"); }

json BenchSample::to_json() const {
    return json{{"id", id},
                {"image_ref", image_ref},
                {"question", question},
                {"label", to_string(label)},
                {"category", to_string(category)},
                {"ground_facts", ground_facts},
                {"triplet_id", triplet_id},
                {"target", target}};
}

BenchSample BenchSample::from_json(const json& j) {
    BenchSample s;
    try {
        s.id = j.at("id").get<std::string>();
        s.image_ref = j.at("image_ref").get<std::string>();
        s.question = j.at("question").get<std::string>();
        s.label = label_from_string(j.at("label").get<std::string>());
        s.category = category_from_string(j.value("category", std::string("unspecified")));
        s.ground_facts = j.at("ground_facts").get<std::string>();
        s.triplet_id = j.value("triplet_id", std::string{});
        s.target = j.value("target", std::string{});
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed bench sample: ") + e.what());
    }
    return s;
}

json JudgeVerdict::to_json() const {
    return json{{"sample_id", sample_id}, {"predicted", to_string(predicted)}, {"raw_reply", raw_reply}};
}

JudgeVerdict JudgeVerdict::from_json(const json& j) {
    try {
        return JudgeVerdict{j.at("sample_id").get<std::string>(),
                            predicted_from_string(j.at("predicted").get<std::string>()),
                            j.value("raw_reply", std::string{})};
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed verdict: ") + e.what());
    }
}

json MetricsReport::to_json() const {
    return json{{"tp", tp},
                {"fp", fp},
                {"fn", fn},
                {"tn", tn},
                {"unparsable", unparsable},
                {"total", total()},
                {"precision", precision},
                {"recall", recall},
                {"accuracy", accuracy},
                {"f1", f1},
                {"flags", flags}};
}

std::string MetricsReport::table() const {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "metric      value\n"
                  "F1          %.4f\n"
                  "Accuracy    %.4f\n"
                  "Precision   %.4f\n"
                  "Recall      %.4f\n"
                  "\n"
                  "tp %zu  fp %zu  fn %zu  tn %zu  unparsable %zu  total %zu\n",
                  f1, accuracy, precision, recall, tp, fp, fn, tn, unparsable, total());
    std::string out = buf;
    for (const auto& f : flags) out += "flag: " + f + "\n";
    return out;
}

std::string ground_facts_for(const scene::SceneTriplet& t) {
    return "objects in the image: " + text::join(t.present_objects, ", ") +
           "; objects not in the image: " + text::join(t.hallucination_candidates, ", ");
}

std::vector<BenchSample> assemble_dev_set(const std::vector<querygen::TaskQuery>& queries,
                                          const std::map<std::string, assessor::AssessedSample>& samples,
                                          std::size_t n_cpq, std::size_t n_tpq, std::uint64_t seed) {
    std::vector<const querygen::TaskQuery*> cpq;
    std::vector<const querygen::TaskQuery*> tpq;
    for (const auto& q : queries) {
        if (!samples.count(q.triplet_id)) continue;
        if (q.kind == querygen::QueryKind::CPQ) cpq.push_back(&q);
        if (q.kind == querygen::QueryKind::TPQ) tpq.push_back(&q);
    }
    std::map<std::string, std::size_t> shortfall;
    if (cpq.size() < n_cpq) shortfall["CPQ"] = n_cpq - cpq.size();
    if (tpq.size() < n_tpq) shortfall["TPQ"] = n_tpq - tpq.size();
    if (!shortfall.empty()) throw InsufficientData(shortfall);

    SeededRng rng(seed);
    std::vector<BenchSample> out;
    auto take = [&](std::vector<const querygen::TaskQuery*> pool, std::size_t n, Label label) {
        std::sort(pool.begin(), pool.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
        rng.shuffle(pool);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& q = *pool[i];
            const auto& s = samples.at(q.triplet_id);
            out.push_back(BenchSample{"b-" + q.id, s.image.image_ref, q.text, label, Category::unspecified,
                                      ground_facts_for(s.triplet), q.triplet_id,
                                      q.target_objects.empty() ? std::string{} : q.target_objects.front()});
        }
    };
    take(cpq, n_cpq, Label::positive);
    take(tpq, n_tpq, Label::negative);
    return out;
}

std::optional<bool> parse_verdict(std::string_view reply) {
    std::string head = text::trim(reply);
    // Tolerate markdown emphasis or quotes around the verdict.
    std::size_t skip = 0;
    while (skip < head.size() && std::ispunct(static_cast<unsigned char>(head[skip]))) ++skip;
    head.erase(0, skip);
    std::size_t n = 0;
    while (n < head.size() && std::isalpha(static_cast<unsigned char>(head[n]))) ++n;
    const std::string token = text::to_lower(head.substr(0, n));
    if (token == "yes") return true;
    if (token == "no") return false;
    return std::nullopt;
}

JudgeVerdict judge(const BenchSample& sample, const std::string& response, gateway::Client& judge_backend,
                   const TemplateSet& templates) {
    if (text::trim(response).empty()) throw DataError("sample '" + sample.id + "' has an empty model response");
    const std::map<std::string, std::string> vars{{"question", sample.question},
                                                  {"ground_facts", sample.ground_facts},
                                                  {"response", response},
                                                  {"rubric", rubric_for(sample.label)},
                                                  {"label", std::string(to_string(sample.label))}};
    JudgeVerdict v{sample.id, Predicted::unparsable, ""};
    for (int attempt = 1; attempt <= 2; ++attempt) {
        json request_vars(vars);
        request_vars["attempt"] = std::to_string(attempt);
        const json request{{"task", "P3-judge"},
                           {"prompt", text::render(templates.get("P3-judge"), vars)},
                           {"image_ref", sample.image_ref},
                           {"vars", request_vars}};
        v.raw_reply = judge_backend.call(request).at("text").get<std::string>();
        if (auto correct = parse_verdict(v.raw_reply)) {
            // Positive prediction == the model flagged a false presupposition.
            const bool flagged = sample.label == Label::positive ? *correct : !*correct;
            v.predicted = flagged ? Predicted::positive : Predicted::negative;
            return v;
        }
    }
    return v;
}

MetricsReport compute_metrics(const std::vector<JudgeVerdict>& verdicts, const std::map<std::string, Label>& labels) {
    MetricsReport m;
    for (const auto& v : verdicts) {
        auto it = labels.find(v.sample_id);
        if (it == labels.end()) throw DataError("verdict for unknown sample '" + v.sample_id + "'");
        const bool pos = it->second == Label::positive;
        switch (v.predicted) {
            case Predicted::unparsable: ++m.unparsable; break;
            case Predicted::positive: ++(pos ? m.tp : m.fp); break;
            case Predicted::negative: ++(pos ? m.fn : m.tn); break;
        }
    }
    auto ratio = [&](std::size_t num, std::size_t den, const char* name) {
        if (den == 0) {
            m.flags.push_back(std::string(name) + ": zero denominator");
            return 0.0;
        }
        return static_cast<double>(num) / static_cast<double>(den);
    };
    m.precision = ratio(m.tp, m.tp + m.fp, "precision");
    m.recall = ratio(m.tp, m.tp + m.fn, "recall");
    m.accuracy = ratio(m.tp + m.tn, m.total(), "accuracy");
    // 2PR/(P+R) reduces to 2tp / (2tp + fp + fn) whenever both are defined.
    m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn, "f1");
    if (m.tp + m.fp == 0 || m.tp + m.fn == 0) m.f1 = 0.0;
    return m;
}

}  // namespace antidote::bench
