#include "antidote/querygen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <mutex>

#include "antidote/error.hpp"
#include "antidote/gateway.hpp"
#include "antidote/hash.hpp"
#include "antidote/text.hpp"

namespace antidote::querygen {

namespace {

constexpr std::string_view kKindNames[] = {"CPQ", "TPQ", "Existence", "Description"};
constexpr std::string_view kKindTasks[] = {"P2-cpq", "P2-tpq", "P2-exist", "P2-desc"};
constexpr std::string_view kKindSlugs[] = {"cpq", "tpq", "exist", "desc"};

bool is_plural(const std::string& label) {
    return label.size() > 1 && label.back() == 's' && label[label.size() - 2] != 's';
}

std::string with_article(const std::string& label) {
    const bool vowel = !label.empty() && std::string("aeiou").find(label[0]) != std::string::npos;
    return (vowel ? "an " : "a ") + label;
}

// Whole-word, case-insensitive containment.
bool mentions(const std::string& haystack, const std::string& label) {
    const std::string h = " " + text::normalize(haystack) + " ";
    const std::string l = text::normalize(label);
    if (l.empty()) return false;
    return h.find(" " + l + " ") != std::string::npos || h.find(" " + l + "s ") != std::string::npos;
}

std::string first_line(const std::string& reply) {
    for (const auto& raw : [&] {
             std::vector<std::string> lines;
             std::string cur;
             for (char c : reply) {
                 if (c == '\n') {
                     lines.push_back(cur);
                     cur.clear();
                 } else {
                     cur += c;
                 }
             }
             lines.push_back(cur);
             return lines;
         }()) {
        std::string line = text::trim(raw);
        // Strip list markers such as "1.", "-", "*" and surrounding quotes.
        std::size_t i = 0;
        while (i < line.size() && (std::isdigit(static_cast<unsigned char>(line[i])) || line[i] == '-' ||
                                   line[i] == '*' || (line[i] == '.' && i > 0) || line[i] == ')')) {
            ++i;
        }
        line = text::trim(line.substr(i));
        if (line.size() >= 2 && line.front() == '"' && line.back() == '"') line = line.substr(1, line.size() - 2);
        if (!line.empty()) return line;
    }
    return {};
}

}  // namespace

std::string_view to_string(QueryKind k) { return kKindNames[static_cast<int>(k)]; }

QueryKind kind_from_string(std::string_view s) {
    for (int i = 0; i < 4; ++i) {
        if (kKindNames[i] == s) return static_cast<QueryKind>(i);
    }
    throw DataError("unknown query kind '" + std::string(s) + "'");
}

json TaskQuery::to_json() const {
    return json{{"id", id},
                {"triplet_id", triplet_id},
                {"kind", to_string(kind)},
                {"text", text},
                {"target_objects", target_objects},
                {"factual_prior", factual_prior}};
}

TaskQuery TaskQuery::from_json(const json& j) {
    TaskQuery q;
    try {
        q.id = j.at("id").get<std::string>();
        q.triplet_id = j.at("triplet_id").get<std::string>();
        q.kind = kind_from_string(j.at("kind").get<std::string>());
        q.text = j.at("text").get<std::string>();
        q.target_objects = j.at("target_objects").get<std::vector<std::string>>();
        q.factual_prior = j.at("factual_prior").get<std::string>();
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed query record: ") + e.what());
    }
    return q;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DataError("cosine of vectors with different dimensions");
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

void MemoryBank::insert(const std::string& caption, std::vector<double> key,
                        const std::vector<std::string>& questions) {
    if (text::trim(caption).empty()) throw EmptyInput("memory bank caption is empty");
    double norm = 0.0;
    for (double x : key) norm += x * x;
    if (key.empty() || norm == 0.0) throw DataError("memory bank key must be a non-zero vector");
    norm = std::sqrt(norm);
    for (double& x : key) x /= norm;

    std::unique_lock lock(mutex_);
    if (dim_ == 0) dim_ = key.size();
    if (key.size() != dim_) {
        throw DataError("memory bank key has dimension " + std::to_string(key.size()) + ", expected " +
                        std::to_string(dim_));
    }
    if (auto it = by_caption_.find(caption); it != by_caption_.end()) {
        auto& qs = entries_[it->second].questions;
        for (const auto& q : questions) {
            if (std::find(qs.begin(), qs.end(), q) == qs.end()) qs.push_back(q);
        }
        return;
    }
    by_caption_.emplace(caption, entries_.size());
    entries_.push_back(MemoryEntry{std::move(key), caption, questions});
}

std::vector<std::pair<std::size_t, double>> MemoryBank::nearest(const std::vector<double>& key, std::size_t k,
                                                                double min_sim) const {
    if (k == 0) throw ConfigError("retrieval k must be >= 1");
    std::shared_lock lock(mutex_);
    std::vector<std::pair<std::size_t, double>> hits;
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        const double sim = cosine(entries_[i].key, key);
        if (sim >= min_sim) hits.emplace_back(i, sim);
    }
    std::stable_sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<std::string> MemoryBank::retrieve(const std::vector<double>& key, std::size_t k, double min_sim) const {
    const auto hits = nearest(key, k, min_sim);
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [idx, sim] : hits) {
        out.insert(out.end(), entries_[idx].questions.begin(), entries_[idx].questions.end());
    }
    return out;
}

std::size_t MemoryBank::size() const {
    std::shared_lock lock(mutex_);
    return entries_.size();
}

std::size_t MemoryBank::dimension() const {
    std::shared_lock lock(mutex_);
    return dim_;
}

std::vector<MemoryEntry> MemoryBank::entries() const {
    std::shared_lock lock(mutex_);
    return entries_;
}

std::vector<json> MemoryBank::to_records() const {
    std::shared_lock lock(mutex_);
    std::vector<json> out;
    for (const auto& e : entries_) {
        out.push_back(json{{"caption", e.caption}, {"key", e.key}, {"questions", e.questions}});
    }
    return out;
}

MemoryBank MemoryBank::from_records(const std::vector<json>& records) {
    MemoryBank bank;
    for (const auto& r : records) {
        bank.insert(r.at("caption").get<std::string>(), r.at("key").get<std::vector<double>>(),
                    r.at("questions").get<std::vector<std::string>>());
    }
    return bank;
}

std::vector<double> embed_text(gateway::Client& embed, const std::string& s) {
    const json response = embed.call(json{{"texts", json::array({s})}});
    return response.at("vectors").at(0).get<std::vector<double>>();
}

void memory_insert(MemoryBank& bank, const std::string& caption, const std::vector<std::string>& questions,
                   gateway::Client& embed) {
    if (text::trim(caption).empty()) throw EmptyInput("memory bank caption is empty");
    bank.insert(caption, embed_text(embed, caption), questions);
}

std::vector<std::string> memory_retrieve(const MemoryBank& bank, const std::string& caption, std::size_t k,
                                         double min_sim, gateway::Client& embed) {
    if (k == 0) throw ConfigError("retrieval k must be >= 1");
    if (bank.size() == 0) return {};
    return bank.retrieve(embed_text(embed, caption), k, min_sim);
}

std::string avoid_clause(const std::vector<std::string>& prior_questions) {
    if (prior_questions.empty()) return {};
    std::string out(kAvoidClausePrefix);
    for (const auto& q : prior_questions) out += "\n- " + q;
    return out;
}

std::string absent_fact(const std::string& label) {
    return is_plural(label) ? "there are no " + label : "there is no " + label;
}

std::string present_fact(const std::string& label) {
    return is_plural(label) ? "there are " + label : "there is " + with_article(label);
}

std::string existence_fact(const std::string& label, bool present) {
    if (present) return present_fact(label);
    return is_plural(label) ? "there aren't " + label : "there isn't " + with_article(label);
}

std::string description_prior(const scene::SceneTriplet& t) {
    return "the image caption: " + t.caption + ", the object(s) you can see: " + text::join(t.present_objects, ", ") +
           ", the object(s) you cannot see: " + text::join(t.hallucination_candidates, ", ");
}

bool validate_query(QueryKind kind, const std::string& q, const std::string& target, const scene::SceneTriplet& t,
                    std::size_t max_words) {
    const std::string s = text::trim(q);
    if (s.empty() || text::word_count(s) > max_words) return false;
    switch (kind) {
        case QueryKind::CPQ:
        case QueryKind::TPQ:
            return mentions(s, target);
        case QueryKind::Existence: {
            const auto& openers = existence_openers();
            if (std::none_of(openers.begin(), openers.end(),
                             [&](const std::string& o) { return text::starts_with_icase(s, o); })) {
                return false;
            }
            if (!mentions(s, target)) return false;
            auto other_mentioned = [&](const std::vector<std::string>& labels) {
                return std::any_of(labels.begin(), labels.end(),
                                   [&](const std::string& l) { return l != target && mentions(s, l); });
            };
            return !other_mentioned(t.present_objects) && !other_mentioned(t.hallucination_candidates);
        }
        case QueryKind::Description: {
            const auto& set = description_templates();
            return std::find(set.begin(), set.end(), s) != set.end();
        }
    }
    return false;
}

std::vector<TaskQuery> generate_queries(const assessor::AssessedSample& sample, QueryKind kind, MemoryBank& bank,
                                        gateway::Client& textgen, gateway::Client& embed,
                                        const TemplateSet& templates, const QueryGenConfig& cfg) {
    const auto& t = sample.triplet;
    if (t.status != scene::TripletStatus::assessed) {
        throw DataError("triplet '" + t.id + "' must be assessed before query generation");
    }
    const auto key = embed_text(embed, t.caption);
    const auto prior = bank.size() ? bank.retrieve(key, cfg.retrieve_k, cfg.min_sim) : std::vector<std::string>{};
    const std::string avoid = avoid_clause(prior);

    std::vector<std::string> candidates;
    if (kind == QueryKind::CPQ) candidates = t.hallucination_candidates;
    if (kind == QueryKind::TPQ) candidates = t.present_objects;
    if (kind == QueryKind::Existence) {
        candidates = t.present_objects;
        candidates.insert(candidates.end(), t.hallucination_candidates.begin(), t.hallucination_candidates.end());
    }
    const auto kidx = static_cast<std::size_t>(kind);
    const std::uint64_t pick_key = hash::mix(cfg.seed, hash::fnv1a64(t.id + "|" + std::string(kKindSlugs[kidx])));

    std::vector<TaskQuery> accepted;
    for (std::size_t i = 0; i < cfg.per_kind; ++i) {
        std::string target;
        if (!candidates.empty()) target = candidates[(pick_key + i) % candidates.size()];

        std::optional<std::string> question;
        for (std::size_t attempt = 1; attempt <= 2 && !question; ++attempt) {
            const std::map<std::string, std::string> vars{{"caption", t.caption},
                                                          {"present", text::join(t.present_objects, ", ")},
                                                          {"hallucination", text::join(t.hallucination_candidates, ", ")},
                                                          {"object", target},
                                                          {"avoid", avoid},
                                                          {"index", std::to_string(i)},
                                                          {"attempt", std::to_string(attempt)}};
            const json request{{"task", kKindTasks[kidx]},
                               {"prompt", text::render(templates.get(kKindTasks[kidx]), vars)},
                               {"vars", vars}};
            const std::string reply = textgen.call(request).at("text").get<std::string>();
            const std::string line = first_line(reply);
            if (line.empty()) throw ParseError("empty query reply for triplet '" + t.id + "'");
            if (validate_query(kind, line, target, t, cfg.max_words)) question = line;
        }
        if (!question) continue;

        TaskQuery q;
        q.id = t.id + "-" + std::string(kKindSlugs[kidx]) + "-" + std::to_string(i);
        q.triplet_id = t.id;
        q.kind = kind;
        q.text = *question;
        switch (kind) {
            case QueryKind::CPQ:
                q.target_objects = {target};
                q.factual_prior = absent_fact(target);
                break;
            case QueryKind::TPQ:
                q.target_objects = {target};
                q.factual_prior = present_fact(target);
                break;
            case QueryKind::Existence: {
                const bool present =
                    std::find(t.present_objects.begin(), t.present_objects.end(), target) != t.present_objects.end();
                q.target_objects = {target};
                q.factual_prior = existence_fact(target, present);
                break;
            }
            case QueryKind::Description:
                q.factual_prior = description_prior(t);
                break;
        }
        accepted.push_back(std::move(q));
    }

    if (!accepted.empty()) {
        std::vector<std::string> texts;
        for (const auto& q : accepted) texts.push_back(q.text);
        bank.insert(t.caption, key, texts);
    }
    return accepted;
}

}  // namespace antidote::querygen
