#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "antidote/assessor.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/querygen.hpp"
#include "antidote/templates.hpp"

namespace antidote::gateway {
class Client;
}

namespace antidote::bench {

// CPQ samples form the positive class, TPQ samples the negative class.
enum class Label { positive, negative };
enum class Category { item, knowledge, scene, activity, unspecified };
enum class Predicted { positive, negative, unparsable };

std::string_view to_string(Label l);
std::string_view to_string(Category c);
std::string_view to_string(Predicted p);
Label label_from_string(std::string_view s);
Category category_from_string(std::string_view s);
Predicted predicted_from_string(std::string_view s);

struct BenchSample {
    std::string id;
    std::string image_ref;
    std::string question;
    Label label = Label::positive;
    Category category = Category::unspecified;
    std::string ground_facts;
    std::string triplet_id;
    std::string target;  // object the question presupposes

    json to_json() const;
    static BenchSample from_json(const json& j);
};

struct JudgeVerdict {
    std::string sample_id;
    Predicted predicted = Predicted::unparsable;
    std::string raw_reply;

    json to_json() const;
    static JudgeVerdict from_json(const json& j);
};

struct MetricsReport {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0, unparsable = 0;
    double precision = 0.0, recall = 0.0, accuracy = 0.0, f1 = 0.0;
    std::vector<std::string> flags;  // zero-denominator notes

    std::size_t total() const { return tp + fp + fn + tn + unparsable; }
    json to_json() const;
    std::string table() const;
};

std::string ground_facts_for(const scene::SceneTriplet& t);

/// Seeded sampling of exactly n_cpq CPQ queries (positive) and n_tpq TPQ
/// queries (negative) whose triplet has an image. Positives come first, each
/// group in sampled order. Throws InsufficientData on shortfall.
std::vector<BenchSample> assemble_dev_set(const std::vector<querygen::TaskQuery>& queries,
                                          const std::map<std::string, assessor::AssessedSample>& samples,
                                          std::size_t n_cpq, std::size_t n_tpq, std::uint64_t seed);

// Leading YES/NO token of a judge reply.
std::optional<bool> parse_verdict(std::string_view reply);

/// Asks the judge whether the response handles the question's presupposition
/// correctly (one re-ask when the reply has no verdict token). A correct CPQ
/// answer predicts positive; an incorrect TPQ answer also predicts positive.
JudgeVerdict judge(const BenchSample& sample, const std::string& response, gateway::Client& judge_backend,
                   const TemplateSet& templates);

/// Confusion counts with CPQ as the positive class. Unparsable verdicts are
/// kept out of the confusion matrix and count as wrong for accuracy only.
/// Throws DataError for a verdict whose sample id has no label.
MetricsReport compute_metrics(const std::vector<JudgeVerdict>& verdicts, const std::map<std::string, Label>& labels);

}  // namespace antidote::bench
