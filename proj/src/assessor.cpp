#include "antidote/assessor.hpp"

#include <fstream>
#include <iterator>

#include "antidote/error.hpp"
#include "antidote/hash.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/parallel.hpp"
#include "antidote/text.hpp"

namespace antidote::assessor {

namespace fs = std::filesystem;

json GeneratedImage::to_json() const {
    return json{{"triplet_id", triplet_id},
                {"image_ref", image_ref},
                {"prompt", prompt},
                {"negative_prompt", negative_prompt},
                {"seed", seed}};
}

GeneratedImage GeneratedImage::from_json(const json& j) {
    try {
        return GeneratedImage{j.at("triplet_id").get<std::string>(), j.at("image_ref").get<std::string>(),
                              j.at("prompt").get<std::string>(), j.at("negative_prompt").get<std::string>(),
                              j.at("seed").get<std::int64_t>()};
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed image record: ") + e.what());
    }
}

json DetectionResult::to_json() const {
    return json{{"label", label}, {"detected", detected}, {"max_confidence", max_confidence}, {"boxes", boxes}};
}

DetectionResult DetectionResult::from_json(const json& j) {
    DetectionResult d;
    d.label = j.at("label").get<std::string>();
    d.detected = j.at("detected").get<bool>();
    d.max_confidence = j.at("max_confidence").get<double>();
    d.boxes = j.at("boxes").get<std::vector<Box>>();
    return d;
}

json AssessedSample::to_json() const {
    json dets = json::array();
    for (const auto& d : detections) dets.push_back(d.to_json());
    return json{{"triplet", triplet.to_json()}, {"image", image.to_json()}, {"detections", dets}};
}

AssessedSample AssessedSample::from_json(const json& j) {
    AssessedSample s;
    try {
        s.triplet = scene::SceneTriplet::from_json(j.at("triplet"));
        s.image = GeneratedImage::from_json(j.at("image"));
        for (const auto& d : j.at("detections")) s.detections.push_back(DetectionResult::from_json(d));
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed assessed sample: ") + e.what());
    }
    return s;
}

ImageStore::ImageStore(fs::path dir) : dir_(std::move(dir)) {}

std::string ImageStore::put(const std::string& bytes) {
    const std::string digest = hash::sha256_hex(bytes);
    const std::string handle = "cas:" + digest;
    const fs::path path = path_for(handle);
    std::lock_guard lock(*write_mutex_);
    if (!fs::exists(path)) jsonl::write_text(path, bytes);
    return handle;
}

fs::path ImageStore::path_for(const std::string& handle) const {
    if (handle.rfind("cas:", 0) != 0) throw DataError("not a content handle: " + handle);
    return dir_ / (handle.substr(4) + ".pgm");
}

std::optional<std::string> ImageStore::get(const std::string& handle) const {
    if (handle.rfind("cas:", 0) != 0) return std::nullopt;
    std::ifstream in(path_for(handle), std::ios::binary);
    if (!in) return std::nullopt;
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

gateway::ImageResolver ImageStore::resolver() const {
    return [dir = dir_](const std::string& handle) { return ImageStore(dir).get(handle); };
}

std::string negative_prompt_for(const scene::SceneTriplet& t) {
    return text::join(t.hallucination_candidates, ", ");
}

std::int64_t image_seed(std::uint64_t run_seed, const std::string& triplet_id) {
    return static_cast<std::int64_t>(hash::mix(run_seed, hash::fnv1a64(triplet_id)) >> 33);
}

GeneratedImage generate_image(const scene::SceneTriplet& t, gateway::Client& imagegen, std::int64_t seed,
                              const AssessorConfig& cfg, ImageStore* store) {
    if (t.status != scene::TripletStatus::verified) {
        throw DataError("triplet '" + t.id + "' must be verified before image generation");
    }
    GeneratedImage img{t.id, "", t.caption, negative_prompt_for(t), seed};
    const json request{{"prompt", img.prompt},
                       {"negative_prompt", img.negative_prompt},
                       {"seed", seed},
                       {"size", cfg.image_size}};
    for (std::size_t round = 0;; ++round) {
        try {
            const json response = imagegen.call(request);
            img.image_ref = response.at("image_ref").get<std::string>();
            if (store && response.contains("image_b64")) {
                img.image_ref = store->put(hash::base64_decode(response["image_b64"].get<std::string>()));
            }
            return img;
        } catch (const BackendError&) {
            if (round >= cfg.max_gen_retries) throw;
        }
    }
}

DetectionResult detection_from_response(const std::string& label, const json& response, double threshold) {
    DetectionResult d;
    d.label = label;
    d.max_confidence = response.at("max_confidence").get<double>();
    d.detected = d.max_confidence >= threshold;
    if (d.detected) {
        for (const auto& b : response.at("boxes")) d.boxes.push_back(b.get<Box>());
    }
    return d;
}

std::variant<AssessedSample, Discarded> assess(const scene::SceneTriplet& t, const GeneratedImage& image,
                                               gateway::Client& detect, const AssessorConfig& cfg) {
    if (t.status != scene::TripletStatus::verified) {
        throw DataError("triplet '" + t.id + "' must be verified before assessment");
    }
    std::vector<std::string> labels = t.present_objects;
    labels.insert(labels.end(), t.hallucination_candidates.begin(), t.hallucination_candidates.end());

    std::vector<DetectionResult> results(labels.size());
    parallel_for(labels.size(), detect.endpoint().parallelism_budget, [&](std::size_t i) {
        const json response = detect.call(json{{"image_ref", image.image_ref}, {"label", labels[i]}});
        results[i] = detection_from_response(labels[i], response, cfg.detection_threshold);
    });

    AssessedSample sample;
    sample.triplet = t;
    sample.triplet.present_objects.clear();
    sample.triplet.hallucination_candidates.clear();
    const std::size_t n_present = t.present_objects.size();
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i < n_present && results[i].detected) sample.triplet.present_objects.push_back(labels[i]);
        if (i >= n_present && !results[i].detected) sample.triplet.hallucination_candidates.push_back(labels[i]);
    }
    if (sample.triplet.present_objects.empty()) return Discarded{t.id, "no_present_object_detected"};
    if (sample.triplet.hallucination_candidates.empty()) return Discarded{t.id, "all_candidates_detected"};
    sample.triplet.status = scene::TripletStatus::assessed;
    sample.image = image;
    sample.detections = std::move(results);
    return sample;
}

}  // namespace antidote::assessor
