#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "antidote/gateway.hpp"
#include "antidote/scene.hpp"
#include "antidote/stubs.hpp"

namespace antidote::assessor {

struct GeneratedImage {
    std::string triplet_id;
    std::string image_ref;
    std::string prompt;           // == triplet caption
    std::string negative_prompt;  // == comma-joined hallucination candidates
    std::int64_t seed = 0;

    json to_json() const;
    static GeneratedImage from_json(const json& j);
};

using Box = std::array<double, 4>;

struct DetectionResult {
    std::string label;
    bool detected = false;
    double max_confidence = 0.0;
    std::vector<Box> boxes;  // empty unless detected

    json to_json() const;
    static DetectionResult from_json(const json& j);
};

struct AssessedSample {
    scene::SceneTriplet triplet;  // status == assessed
    GeneratedImage image;
    std::vector<DetectionResult> detections;

    json to_json() const;
    static AssessedSample from_json(const json& j);
};

struct Discarded {
    std::string triplet_id;
    std::string reason;
};

struct AssessorConfig {
    double detection_threshold = gateway::kDefaultDetectionThreshold;
    std::size_t max_gen_retries = 2;
    std::int64_t image_size = 512;
};

/// Content-addressed image bytes under one directory; handles look like
/// "cas:<sha256>".
class ImageStore {
public:
    explicit ImageStore(std::filesystem::path dir);

    std::string put(const std::string& bytes);
    std::optional<std::string> get(const std::string& handle) const;
    std::filesystem::path path_for(const std::string& handle) const;
    gateway::ImageResolver resolver() const;

private:
    std::filesystem::path dir_;
    std::shared_ptr<std::mutex> write_mutex_ = std::make_shared<std::mutex>();
};

std::string negative_prompt_for(const scene::SceneTriplet& t);

// Per-triplet generator seed derived from the run seed.
std::int64_t image_seed(std::uint64_t run_seed, const std::string& triplet_id);

/// Requests an image with prompt = caption and negative prompt = the
/// hallucination candidates. Gateway-level failures are retried up to
/// max_gen_retries more times; the last BackendError propagates. When the
/// backend returns image bytes and a store is given, the bytes are stored
/// and the content handle replaces the backend's reference.
GeneratedImage generate_image(const scene::SceneTriplet& t, gateway::Client& imagegen, std::int64_t seed,
                              const AssessorConfig& cfg, ImageStore* store = nullptr);

DetectionResult detection_from_response(const std::string& label, const json& response, double threshold);

/// Factual Assessor: one detection request per label; drops undetected present
/// objects and detected hallucination candidates; discards the triplet when
/// either list ends up empty.
std::variant<AssessedSample, Discarded> assess(const scene::SceneTriplet& t, const GeneratedImage& image,
                                               gateway::Client& detect, const AssessorConfig& cfg);

}  // namespace antidote::assessor
