#include <CLI11.hpp>
#include <httplib.h>

#include <iostream>
#include <optional>
#include <string>

#include "antidote/corpus.hpp"
#include "antidote/error.hpp"
#include "antidote/gateway.hpp"
#include "antidote/http_backend.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/pipeline.hpp"
#include "antidote/stubs.hpp"

namespace fs = std::filesystem;
using namespace antidote;

namespace {

struct StageOptions {
    std::string config;
    bool force = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> workdir;
};

void add_stage_options(CLI::App* cmd, StageOptions& o) {
    cmd->add_option("-c,--config", o.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_flag("--force", o.force, "Re-run even if the stage is complete");
    cmd->add_option("--seed", o.seed, "Override the config seed");
    cmd->add_option("--workdir", o.workdir, "Override the config workdir");
}

pipeline::RunConfig load_config(const StageOptions& o) {
    auto cfg = pipeline::RunConfig::load(o.config);
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.dedup.seed = cfg.querygen.seed = cfg.composition.seed = cfg.train.dpo.seed = *o.seed;
    }
    if (o.workdir) cfg.workdir = *o.workdir;
    return cfg;
}

void print_summary(const pipeline::StageSummary& s) {
    std::cout << json{{"stage", s.stage}, {"skipped", s.skipped}, {"summary", s.summary}}.dump() << "\n";
}

gateway::BackendEndpoint endpoint_from_arg(const std::string& arg, gateway::Role role) {
    if (fs::exists(arg)) {
        json doc = jsonl::read_document(arg);
        if (!doc.contains("role")) doc["role"] = std::string(gateway::to_string(role));
        return gateway::BackendEndpoint::from_json(doc);
    }
    gateway::BackendEndpoint ep;
    ep.role = role;
    ep.base_url = arg;
    ep.validate();
    return ep;
}

int run(int argc, char** argv) {
    CLI::App app{"antidote: counterfactual preference data pipeline"};
    app.require_subcommand(1);

    // pool build (standalone, no config needed)
    auto* pool = app.add_subcommand("pool", "Caption pool");
    pool->require_subcommand(1);
    auto* pool_build = pool->add_subcommand("build", "Near-duplicate filtering of a caption file");
    std::string pool_in, pool_out;
    corpus::DedupConfig dedup;
    pool_build->add_option("--in", pool_in, "Caption records {id, text, source}")->required()->check(CLI::ExistingFile);
    pool_build->add_option("--out", pool_out, "Output directory")->required();
    pool_build->add_option("--k", dedup.shingle_size, "Shingle size in words")->capture_default_str();
    pool_build->add_option("--hashes", dedup.num_hashes, "MinHash width")->capture_default_str();
    pool_build->add_option("--bands", dedup.bands, "LSH bands")->capture_default_str();
    pool_build->add_option("--threshold", dedup.threshold, "Merge threshold")->capture_default_str();
    pool_build->add_option("--seed", dedup.seed, "Hash seed")->capture_default_str();

    // per-stage commands
    StageOptions so;
    std::string stage_to_run;
    auto stage_cmd = [&](CLI::App* parent, const std::string& name, const std::string& help,
                         const std::string& stage) {
        auto* cmd = parent->add_subcommand(name, help);
        add_stage_options(cmd, so);
        cmd->callback([&stage_to_run, stage] { stage_to_run = stage; });
        return cmd;
    };
    auto* scene = app.add_subcommand("scene", "Scene triplets");
    scene->require_subcommand(1);
    stage_cmd(scene, "run", "Rewrite, extract and verify triplets", "scene");
    auto* images = app.add_subcommand("images", "Image synthesis");
    images->require_subcommand(1);
    stage_cmd(images, "run", "Generate one image per verified triplet", "images");
    auto* assess = app.add_subcommand("assess", "Factual assessor");
    assess->require_subcommand(1);
    stage_cmd(assess, "run", "Detect labels and prune triplets", "assess");
    auto* queries = app.add_subcommand("queries", "Task queries");
    queries->require_subcommand(1);
    stage_cmd(queries, "run", "Generate the four query families", "queries");

    auto* correct = app.add_subcommand("correct", "Self-correction");
    correct->require_subcommand(1);
    stage_cmd(correct, "run", "Collect original/corrected answer pairs", "correct");
    std::optional<double> filter_threshold;
    stage_cmd(correct, "filter", "Drop pairs whose answers are too similar", "filter")
        ->add_option("--threshold", filter_threshold, "Cosine similarity cutoff");

    auto* dataset = app.add_subcommand("dataset", "Preference dataset");
    dataset->require_subcommand(1);
    std::optional<std::size_t> n_cpq, n_tpq, n_exist, n_desc;
    std::optional<std::uint64_t> compose_seed;
    auto* compose = stage_cmd(dataset, "compose", "Sample the final dataset per kind", "compose");
    compose->add_option("--cpq", n_cpq);
    compose->add_option("--tpq", n_tpq);
    compose->add_option("--exist", n_exist);
    compose->add_option("--desc", n_desc);
    compose->add_option("--compose-seed", compose_seed, "Sampling seed (defaults to the run seed)");

    auto* dpo_cmd = app.add_subcommand("dpo", "Toy preference training");
    dpo_cmd->require_subcommand(1);
    std::optional<std::size_t> steps;
    std::optional<double> lr, beta;
    auto* train = stage_cmd(dpo_cmd, "train-toy", "Train the toy policy on the dataset", "train");
    train->add_option("--steps", steps);
    train->add_option("--lr", lr);
    train->add_option("--beta", beta);

    auto* bench = app.add_subcommand("bench", "Benchmark harness");
    bench->require_subcommand(1);
    stage_cmd(bench, "assemble", "Build the dev set", "bench-assemble");
    std::optional<std::string> judge_endpoint;
    stage_cmd(bench, "judge", "Judge model responses", "bench-judge")
        ->add_option("--endpoint", judge_endpoint, "Judge endpoint: JSON file or base URL");
    stage_cmd(bench, "report", "Compute metrics", "bench-report");

    auto* run_cmd = app.add_subcommand("run", "Run pipeline stages");
    add_stage_options(run_cmd, so);
    bool run_all = false;
    std::string run_stage;
    auto* all_flag = run_cmd->add_flag("--all", run_all, "Run every stage in order");
    auto* stage_opt = run_cmd->add_option("--stage", run_stage, "Run one stage")
                          ->check(CLI::IsMember(pipeline::stage_names()));
    all_flag->excludes(stage_opt);

    // gateway tools
    auto* gw = app.add_subcommand("gateway", "Backend contract tools");
    gw->require_subcommand(1);
    auto* conf = gw->add_subcommand("conformance", "Run schema probes against an endpoint");
    std::string conf_role = "all", conf_url = "stub://synthetic";
    conf->add_option("--role", conf_role, "Role or 'all'")->capture_default_str();
    conf->add_option("--url", conf_url, "Endpoint base URL")->capture_default_str();

    auto* stub = app.add_subcommand("stub", "In-repo stub backends");
    stub->require_subcommand(1);
    auto* serve = stub->add_subcommand("serve", "Serve the synthetic stubs over HTTP");
    int port = 8080;
    std::string host = "127.0.0.1", behavior = "synthetic", image_dir;
    serve->add_option("--port", port)->capture_default_str();
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--behavior", behavior, "synthetic|echo|reject")->capture_default_str();
    serve->add_option("--images", image_dir, "Image store directory for the detector");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    if (pool_build->parsed()) {
        dedup.validate();
        const auto captions = corpus::read_captions(pool_in);
        const auto report = corpus::deduplicate(captions, dedup);
        std::vector<corpus::Caption> kept;
        for (const auto& c : captions) {
            if (std::binary_search(report.retained_ids.begin(), report.retained_ids.end(), c.id)) kept.push_back(c);
        }
        corpus::write_captions(fs::path(pool_out) / "captions.jsonl", kept);
        jsonl::write_document(fs::path(pool_out) / "dedup_report.json", report.to_json());
        std::cout << json{{"input", captions.size()}, {"retained", kept.size()},
                          {"candidate_pairs", report.candidate_pairs}}
                         .dump()
                  << "\n";
        return 0;
    }

    if (conf->parsed()) {
        bool ok = true;
        std::vector<gateway::Role> roles;
        if (conf_role == "all") {
            roles = {gateway::Role::textgen, gateway::Role::imagegen, gateway::Role::detect, gateway::Role::embed,
                     gateway::Role::judge};
        } else {
            roles = {gateway::role_from_string(conf_role)};
        }
        for (auto role : roles) {
            gateway::BackendEndpoint ep;
            ep.role = role;
            ep.base_url = conf_url;
            auto transport = gateway::make_transport(ep);
            const auto report = gateway::conformance_suite(role, *transport);
            ok = ok && report.passed();
            std::cout << report.to_json().dump() << "\n";
        }
        return ok ? 0 : 1;
    }

    if (serve->parsed()) {
        std::map<gateway::Role, std::shared_ptr<gateway::Transport>> backends;
        gateway::ImageResolver resolver;
        if (!image_dir.empty()) {
            resolver = [dir = fs::path(image_dir)](const std::string& ref) -> std::optional<std::string> {
                if (ref.rfind("cas:", 0) != 0) return std::nullopt;
                const auto path = dir / (ref.substr(4) + ".pgm");
                if (!fs::exists(path)) return std::nullopt;
                std::ifstream in(path, std::ios::binary);
                return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
            };
        }
        for (auto role : {gateway::Role::textgen, gateway::Role::imagegen, gateway::Role::detect, gateway::Role::embed,
                          gateway::Role::judge}) {
            gateway::BackendEndpoint ep;
            ep.role = role;
            ep.base_url = "stub://" + behavior;
            backends[role] = gateway::make_transport(ep, resolver);
        }
        httplib::Server server;
        gateway::mount_routes(server, backends);
        std::cerr << "stub backends listening on http://" << host << ":" << port << "\n";
        if (!server.listen(host, port)) throw ConfigError("cannot listen on " + host + ":" + std::to_string(port));
        return 0;
    }

    auto cfg = load_config(so);
    if (filter_threshold) cfg.sim_threshold = *filter_threshold;
    if (n_cpq) cfg.composition.counts[querygen::QueryKind::CPQ] = *n_cpq;
    if (n_tpq) cfg.composition.counts[querygen::QueryKind::TPQ] = *n_tpq;
    if (n_exist) cfg.composition.counts[querygen::QueryKind::Existence] = *n_exist;
    if (n_desc) cfg.composition.counts[querygen::QueryKind::Description] = *n_desc;
    if (compose_seed) cfg.composition.seed = *compose_seed;
    if (steps) cfg.train.dpo.steps = *steps;
    if (lr) cfg.train.dpo.learning_rate = *lr;
    if (beta) cfg.train.dpo.beta = *beta;
    if (judge_endpoint) cfg.endpoints["judge"] = endpoint_from_arg(*judge_endpoint, gateway::Role::judge);
    cfg.validate();

    if (run_cmd->parsed()) {
        if (run_all) {
            for (const auto& s : pipeline::run_all(cfg, so.force)) print_summary(s);
        } else if (!run_stage.empty()) {
            print_summary(pipeline::run_stage(run_stage, cfg, so.force));
        } else {
            throw ConfigError("run needs --all or --stage <name>");
        }
        std::cout << json{{"manifest_sha256", pipeline::manifest_digest(cfg)}}.dump() << "\n";
        return 0;
    }
    print_summary(pipeline::run_stage(stage_to_run, cfg, so.force));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code(e);
    }
}
