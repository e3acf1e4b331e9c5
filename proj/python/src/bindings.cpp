// Python bindings. Structured values cross the boundary as JSON text; the
// package's __init__ decodes them.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "antidote/bench.hpp"
#include "antidote/corpus.hpp"
#include "antidote/dpo.hpp"
#include "antidote/error.hpp"
#include "antidote/gateway.hpp"
#include "antidote/pipeline.hpp"
#include "antidote/stubs.hpp"

namespace py = pybind11;
using namespace antidote;

namespace {

std::vector<corpus::Caption> captions_from(const std::string& records) {
    std::vector<corpus::Caption> out;
    for (const auto& r : json::parse(records)) {
        out.push_back({r.at("id").get<std::string>(), r.at("text").get<std::string>(), std::nullopt, r.value("source", "")});
    }
    return out;
}

dpo::LogProbRecord record_from(const json& r) {
    return {r.at("policy_logprob_pos").get<double>(), r.at("policy_logprob_neg").get<double>(),
            r.at("ref_logprob_pos").get<double>(), r.at("ref_logprob_neg").get<double>()};
}

std::vector<dpo::TokenPair> pairs_from(const std::string& records) {
    std::vector<dpo::TokenPair> out;
    for (const auto& r : json::parse(records)) {
        out.push_back({r.at("chosen").get<dpo::Sequence>(), r.at("rejected").get<dpo::Sequence>()});
    }
    return out;
}

pipeline::RunConfig config_from(const std::filesystem::path& path, const std::optional<std::filesystem::path>& workdir,
                                const std::optional<std::uint64_t>& seed) {
    auto cfg = pipeline::RunConfig::load(path);
    if (workdir) cfg.workdir = *workdir;
    if (seed) cfg.seed = *seed;
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_antidote, m) {
    m.doc() = "Native core of the antidote preference-data pipeline";

    auto base = py::register_exception<Error>(m, "AntidoteError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<ContractError>(m, "ContractError", base.ptr());
    py::register_exception<BackendError>(m, "BackendError", base.ptr());
    py::register_exception<InsufficientData>(m, "InsufficientData", base.ptr());
    py::register_exception<StageOrderError>(m, "StageOrderError", base.ptr());
    py::register_exception<EmptyInput>(m, "EmptyInput", base.ptr());
    py::register_exception<IncompatibleSignatures>(m, "IncompatibleSignatures", base.ptr());
    py::register_exception<InvalidToken>(m, "InvalidToken", base.ptr());
    py::register_exception<Diverged>(m, "Diverged", base.ptr());

    // corpus
    m.def("shingles", [](const std::string& text, std::size_t k) { return corpus::normalize_and_shingle(text, k); },
          py::arg("text"), py::arg("k") = 3);
    m.def("minhash_signature",
          [](const std::set<std::string>& shingles, std::size_t num_hashes, std::uint64_t seed) {
              return corpus::minhash_signature(shingles, num_hashes, seed).values;
          },
          py::arg("shingles"), py::arg("num_hashes") = 128, py::arg("seed") = 0);
    m.def("jaccard_estimate",
          [](const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b, std::uint64_t seed) {
              return corpus::jaccard_estimate({seed, a}, {seed, b});
          },
          py::arg("a"), py::arg("b"), py::arg("seed") = 0);
    m.def("_deduplicate",
          [](const std::string& records, std::size_t bands, std::size_t rows, double threshold, std::uint64_t seed) {
              corpus::DedupConfig cfg;
              cfg.bands = bands;
              cfg.rows_per_band = rows;
              cfg.num_hashes = bands * rows;
              cfg.threshold = threshold;
              cfg.seed = seed;
              return corpus::deduplicate(captions_from(records), cfg).to_json().dump();
          });

    // dpo
    m.def("neg_log_sigmoid", &dpo::neg_log_sigmoid, py::arg("z"));
    m.def("_dpo_loss", [](const std::string& records, double beta) {
        std::vector<dpo::LogProbRecord> batch;
        for (const auto& r : json::parse(records)) batch.push_back(record_from(r));
        return dpo::dpo_loss(batch, beta);
    });
    m.def("_reward_margin", [](const std::string& record, double beta) { return dpo::reward_margin(record_from(json::parse(record)), beta); });
    m.def("_train_toy", [](const std::string& pairs, std::size_t vocab, std::size_t max_len, double beta, double lr,
                           std::size_t steps, std::uint64_t seed) {
        dpo::DpoConfig cfg{beta, lr, steps, seed};
        const auto r = dpo::train_toy(pairs_from(pairs), cfg, vocab, max_len);
        json traj = json::array();
        for (const auto& s : r.trajectory) traj.push_back(s.to_json());
        return json{{"trajectory", traj}, {"policy", r.policy.params()}, {"reference", r.reference.params()}}.dump();
    });

    // bench
    m.def("_compute_metrics", [](const std::string& verdicts, const std::string& labels) {
        std::vector<bench::JudgeVerdict> vs;
        for (const auto& v : json::parse(verdicts)) vs.push_back(bench::JudgeVerdict::from_json(v));
        std::map<std::string, bench::Label> ls;
        const json parsed = json::parse(labels);
        for (const auto& [id, l] : parsed.items()) ls[id] = bench::label_from_string(l.get<std::string>());
        return bench::compute_metrics(vs, ls).to_json().dump();
    });

    // gateway
    m.def("_conformance", [](const std::string& role, const std::string& url) {
        gateway::BackendEndpoint ep;
        ep.role = gateway::role_from_string(role);
        ep.base_url = url;
        auto transport = gateway::make_transport(ep);
        return gateway::conformance_suite(ep.role, *transport).to_json().dump();
    });
    m.def("_stub_embed", [](const std::string& text) { return gateway::stub_embed(text); });

    // pipeline
    m.def("stage_names", &pipeline::stage_names);
    m.def("_load_config", [](const std::filesystem::path& path) { return pipeline::RunConfig::load(path).to_json().dump(); });
    m.def("_run_stage",
          [](const std::string& stage, const std::filesystem::path& config, std::optional<std::filesystem::path> workdir,
             std::optional<std::uint64_t> seed, bool force) {
              const auto cfg = config_from(config, workdir, seed);
              py::gil_scoped_release release;
              const auto s = pipeline::run_stage(stage, cfg, force);
              return json{{"stage", s.stage}, {"skipped", s.skipped}, {"summary", s.summary}}.dump();
          },
          py::arg("stage"), py::arg("config"), py::arg("workdir") = py::none(), py::arg("seed") = py::none(),
          py::arg("force") = false);
    m.def("_manifest_digest", [](const std::filesystem::path& config, std::optional<std::filesystem::path> workdir) {
        return pipeline::manifest_digest(config_from(config, workdir, std::nullopt));
    });
}
