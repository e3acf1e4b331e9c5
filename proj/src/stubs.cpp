#include "antidote/stubs.hpp"

#include <cmath>

#include "antidote/error.hpp"
#include "antidote/hash.hpp"
#include "antidote/http_backend.hpp"
#include "antidote/text.hpp"

namespace antidote::gateway {

namespace {

StubDefault behavior_from_string(const std::string& s) {
    if (s == "echo") return StubDefault::echo;
    if (s == "reject") return StubDefault::reject;
    if (s == "fixed") return StubDefault::fixed;
    if (s == "synthetic") return StubDefault::synthetic;
    throw ConfigError("unknown stub behavior '" + s + "'");
}

json detection_response(double confidence, std::uint64_t key) {
    json boxes = json::array();
    if (confidence >= kDefaultDetectionThreshold) {
        const double x0 = 0.05 + 0.4 * hash::unit_interval(hash::mix(key, 1));
        const double y0 = 0.05 + 0.4 * hash::unit_interval(hash::mix(key, 2));
        boxes.push_back({x0, y0, x0 + 0.3, y0 + 0.3});
    }
    return json{{"max_confidence", confidence}, {"boxes", boxes}};
}

}  // namespace

StubScript StubScript::from_json(const json& j) {
    StubScript s;
    try {
        s.role = role_from_string(j.at("role").get<std::string>());
        s.behavior = behavior_from_string(j.value("default", std::string("synthetic")));
        if (j.contains("responses")) {
            for (const auto& [fp, body] : j.at("responses").items()) s.responses.emplace(fp, body);
        }
        s.fixed = j.value("fixed", json());
        s.fail_first = j.value("fail_first", std::size_t{0});
        s.fail_always = j.value("fail_always", false);
        if (j.contains("detections")) {
            for (const auto& [key, conf] : j.at("detections").items()) {
                s.detections.emplace(key, conf.get<double>());
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("invalid stub script: ") + e.what());
    }
    if (s.behavior == StubDefault::fixed && s.fixed.is_null()) {
        throw ConfigError("stub script with default 'fixed' needs a 'fixed' response");
    }
    return s;
}

StubBackend::StubBackend(StubScript script, ImageResolver resolver)
    : script_(std::move(script)), resolver_(std::move(resolver)) {}

json StubBackend::invoke(Role role, const json& request) {
    const std::size_t n = calls_++;
    if (script_.fail_always || n < script_.fail_first) {
        throw TransportError("stub failure injected on call " + std::to_string(n + 1));
    }
    if (auto it = script_.responses.find(fingerprint(request)); it != script_.responses.end()) {
        return it->second;
    }
    return answer(role, request);
}

json StubBackend::answer(Role role, const json& request) const {
    const auto behavior = script_.behavior;
    if (behavior == StubDefault::fixed) return script_.fixed;
    switch (role) {
        case Role::textgen:
        case Role::judge: {
            if (behavior == StubDefault::reject) return json{{"text", "REJECT"}};
            if (behavior == StubDefault::echo) {
                const json vars = request.value("vars", json::object());
                if (vars.contains("caption")) return json{{"text", vars["caption"]}};
                return json{{"text", request.at("prompt")}};
            }
            return role == Role::judge ? synthetic::judge(request) : synthetic::textgen(request);
        }
        case Role::imagegen: {
            const std::string bytes = stub_image_bytes(
                request.at("prompt").get<std::string>(), request.at("negative_prompt").get<std::string>(),
                request.at("seed").get<std::int64_t>(), request.at("size").get<std::int64_t>());
            return json{{"image_ref", "cas:" + hash::sha256_hex(bytes)},
                        {"image_b64", hash::base64_encode(bytes)}};
        }
        case Role::detect: {
            const std::string image_ref = request.at("image_ref").get<std::string>();
            const std::string label = request.at("label").get<std::string>();
            const auto key = hash::fnv1a64(image_ref + "|" + label);
            if (auto it = script_.detections.find(image_ref + "|" + label); it != script_.detections.end()) {
                return detection_response(it->second, key);
            }
            if (behavior == StubDefault::synthetic) return synthetic::detect(request, resolver_);
            return detection_response(0.0, key);
        }
        case Role::embed: {
            json vectors = json::array();
            for (const auto& t : request.at("texts")) vectors.push_back(stub_embed(t.get<std::string>()));
            return json{{"vectors", vectors}};
        }
    }
    throw ContractError("unsupported role");
}

std::vector<double> stub_embed(std::string_view input, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    for (const auto& token : text::split_words(text::normalize(input))) {
        v[hash::fnv1a64(token) % dim] += 1.0;
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[0] = 1.0;
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

std::string stub_image_bytes(const std::string& prompt, const std::string& negative_prompt,
                             std::int64_t seed, std::int64_t size) {
    auto one_line = [](std::string s) {
        for (char& c : s) {
            if (c == '\n' || c == '\r') c = ' ';
        }
        return s;
    };
    std::string out = "P2\n# antidote-stub-image\n";
    out += "# prompt: " + one_line(prompt) + "\n";
    out += "# negative: " + one_line(negative_prompt) + "\n";
    out += "# seed: " + std::to_string(seed) + "\n";
    out += "# size: " + std::to_string(size) + "\n";
    out += "4 4\n255\n";
    std::uint64_t state = hash::mix(hash::fnv1a64(prompt), static_cast<std::uint64_t>(seed));
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            out += std::to_string(hash::splitmix64(state) % 256);
            out += c == 3 ? '\n' : ' ';
        }
    }
    return out;
}

std::shared_ptr<Transport> make_transport(const BackendEndpoint& endpoint, ImageResolver resolver) {
    const std::string& url = endpoint.base_url;
    if (url.rfind("http://", 0) == 0 || url.rfind("https://", 0) == 0) {
        return std::make_shared<HttpTransport>(endpoint);
    }
    if (url.rfind("stub://", 0) == 0) {
        StubScript script;
        script.role = endpoint.role;
        script.behavior = behavior_from_string(url.substr(7));
        if (script.behavior == StubDefault::fixed) {
            throw ConfigError("stub://fixed needs a script file; use stub:<path.json>");
        }
        return std::make_shared<StubBackend>(std::move(script), std::move(resolver));
    }
    if (url.rfind("stub:", 0) == 0) {
        json doc = jsonl::read_document(url.substr(5));
        if (!doc.contains("role")) doc["role"] = std::string(to_string(endpoint.role));
        auto script = StubScript::from_json(doc);
        if (script.role != endpoint.role) {
            throw ConfigError("stub script role does not match endpoint role");
        }
        return std::make_shared<StubBackend>(std::move(script), std::move(resolver));
    }
    throw ConfigError("unsupported endpoint base_url '" + url + "'");
}

}  // namespace antidote::gateway
