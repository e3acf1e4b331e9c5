#pragma once

#include <atomic>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "antidote/gateway.hpp"

namespace antidote::gateway {

/// What a stub answers when a request has no keyed response.
///  - echo: textgen/judge return vars.caption (or the prompt); detect reports 0.
///  - reject: textgen/judge return the REJECT sentinel; detect reports 0.
///  - fixed: return StubScript::fixed verbatim.
///  - synthetic: a small rule-based world that understands the pipeline's
///    task tags, so full runs work offline and deterministically.
/// imagegen always answers with a content-addressed placeholder image and
/// embed always with the token-hash embedder unless keyed or fixed.
enum class StubDefault { echo, reject, fixed, synthetic };

struct StubScript {
    Role role = Role::textgen;
    std::map<std::string, json> responses;  // request fingerprint -> response body
    StubDefault behavior = StubDefault::synthetic;
    json fixed;
    std::size_t fail_first = 0;  // first N calls raise TransportError
    bool fail_always = false;
    std::map<std::string, double> detections;  // "<image_ref>|<label>" -> max confidence

    static StubScript from_json(const json& j);
};

// Returns the stored bytes for an image handle, if known.
using ImageResolver = std::function<std::optional<std::string>(const std::string& image_ref)>;

class StubBackend : public Transport {
public:
    explicit StubBackend(StubScript script, ImageResolver resolver = {});

    json invoke(Role role, const json& request) override;

    std::size_t calls() const { return calls_.load(); }
    const StubScript& script() const { return script_; }

private:
    json answer(Role role, const json& request) const;

    StubScript script_;
    ImageResolver resolver_;
    std::atomic<std::size_t> calls_{0};
};

inline constexpr std::size_t kStubEmbeddingDim = 64;

/// Token-hash bag-of-words embedding, unit-normalized. Texts without tokens
/// map to the first basis vector.
std::vector<double> stub_embed(std::string_view text, std::size_t dim = kStubEmbeddingDim);

/// Placeholder image (ASCII PGM) whose header comments carry the prompt,
/// negative prompt and seed, so the synthetic detector can read them back.
std::string stub_image_bytes(const std::string& prompt, const std::string& negative_prompt,
                             std::int64_t seed, std::int64_t size);

/// Builds the transport for an endpoint from its base_url:
///   stub://synthetic | stub://echo | stub://reject   in-process stubs
///   stub:<path.json>                                  scripted stub (StubScript JSON)
///   http://host:port                                  HTTP transport
std::shared_ptr<Transport> make_transport(const BackendEndpoint& endpoint,
                                          ImageResolver resolver = {});

namespace synthetic {
json textgen(const json& request);
json judge(const json& request);
json detect(const json& request, const ImageResolver& resolver);
}  // namespace synthetic

}  // namespace antidote::gateway
