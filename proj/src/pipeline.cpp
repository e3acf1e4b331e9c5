#include "antidote/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <functional>
#include <set>

#include "antidote/bench.hpp"
#include "antidote/error.hpp"
#include "antidote/hash.hpp"
#include "antidote/jsonl.hpp"
#include "antidote/parallel.hpp"
#include "antidote/stubs.hpp"
#include "antidote/templates.hpp"

namespace antidote::pipeline {

namespace {

// ---- config parsing helpers ----

void check_keys(const json& block, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!block.is_object()) throw ConfigError("'" + where + "' must be an object");
    for (const auto& [key, value] : block.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; })) {
            throw ConfigError("unknown key '" + key + "' in " + where);
        }
    }
}

template <typename T>
void read_opt(const json& block, const char* key, T& out, const std::string& where) {
    if (!block.contains(key) || block[key].is_null()) return;
    try {
        out = block[key].get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(where + "." + key + ": " + e.what());
    }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
    if (p.empty() || p.is_absolute() || base.empty()) return p;
    return base / p;
}

std::string upper(std::string s) {
    for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return s;
}

// ---- stage plumbing ----

struct StageDef {
    std::string name;
    std::vector<std::string> prereqs;
};

const std::vector<StageDef>& stage_table() {
    static const std::vector<StageDef> table{
        {"pool", {}},
        {"scene", {"pool"}},
        {"images", {"scene"}},
        {"assess", {"scene", "images"}},
        {"queries", {"assess"}},
        {"correct", {"queries", "assess"}},
        {"filter", {"correct"}},
        {"compose", {"filter"}},
        {"train", {"compose"}},
        {"bench-assemble", {"queries", "assess"}},
        {"bench-judge", {"bench-assemble", "assess"}},
        {"bench-report", {"bench-judge", "bench-assemble"}},
    };
    return table;
}

const StageDef& stage_def(const std::string& name) {
    for (const auto& s : stage_table()) {
        if (s.name == name) return s;
    }
    throw ConfigError("unknown stage '" + name + "'");
}

struct Context {
    explicit Context(const RunConfig& c)
        : cfg(c),
          wd(c.workdir),
          templates(c.templates_dir ? TemplateSet::load(*c.templates_dir) : TemplateSet::builtin()),
          journal(std::make_shared<gateway::RunJournal>()),
          store(c.workdir / "images") {
        for (const auto& name : endpoint_names()) {
            const auto& ep = c.endpoints.at(name);
            clients[name] = std::make_unique<gateway::Client>(name, ep, gateway::make_transport(ep, store.resolver()),
                                                              journal);
        }
    }

    gateway::Client& client(const std::string& name) { return *clients.at(name); }

    const RunConfig& cfg;
    fs::path wd;
    TemplateSet templates;
    std::shared_ptr<gateway::RunJournal> journal;
    assessor::ImageStore store;
    std::map<std::string, std::unique_ptr<gateway::Client>> clients;
};

struct StageOutput {
    std::vector<std::string> files;  // relative to the workdir
    json summary = json::object();
};

template <typename T>
std::vector<json> to_records(const std::vector<T>& items) {
    std::vector<json> out;
    out.reserve(items.size());
    for (const auto& i : items) out.push_back(i.to_json());
    return out;
}

template <typename T>
std::vector<T> from_records(const fs::path& path) {
    std::vector<T> out;
    for (const auto& r : jsonl::read(path)) out.push_back(T::from_json(r));
    return out;
}

std::map<std::string, assessor::AssessedSample> load_assessed(const Context& ctx) {
    std::map<std::string, assessor::AssessedSample> out;
    for (auto& s : from_records<assessor::AssessedSample>(ctx.wd / "triplets/assessed.jsonl")) {
        out.emplace(s.triplet.id, std::move(s));
    }
    return out;
}

std::vector<scene::SceneTriplet> load_verified(const Context& ctx) {
    std::vector<scene::SceneTriplet> out;
    for (auto& t : from_records<scene::SceneTriplet>(ctx.wd / "triplets/triplets.jsonl")) {
        if (t.status == scene::TripletStatus::verified) out.push_back(std::move(t));
    }
    return out;
}

// ---- stages ----

StageOutput stage_pool(Context& ctx) {
    const auto captions = corpus::read_captions(ctx.cfg.input_captions);
    const auto report = corpus::deduplicate(captions, ctx.cfg.dedup);
    const std::set<std::string> keep(report.retained_ids.begin(), report.retained_ids.end());
    std::vector<corpus::Caption> retained;
    for (const auto& c : captions) {
        if (keep.count(c.id)) retained.push_back(c);
    }
    std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

    std::vector<std::string> rejected;
    if (ctx.cfg.recaption) {
        auto r = corpus::recaption(retained, ctx.client("textgen"), ctx.templates.get("P0-recaption"));
        retained = std::move(r.kept);
        rejected = std::move(r.rejected_ids);
    }
    corpus::write_captions(ctx.wd / "pool/captions.jsonl", retained);
    json doc = report.to_json();
    doc["recaption_rejected"] = rejected;
    jsonl::write_document(ctx.wd / "pool/dedup_report.json", doc);

    std::size_t merged = 0;
    for (const auto& c : report.clusters) merged += c.size() > 1 ? 1 : 0;
    return {{"pool/captions.jsonl", "pool/dedup_report.json"},
            {{"input", captions.size()},
             {"after_dedup", report.retained_ids.size()},
             {"duplicate_clusters", merged},
             {"recaption_rejected", rejected.size()},
             {"pool", retained.size()}}};
}

StageOutput stage_scene(Context& ctx) {
    const auto captions = corpus::read_captions(ctx.wd / "pool/captions.jsonl");
    const auto outcomes = scene::run_scene(captions, ctx.client("textgen"), ctx.templates, ctx.cfg.scene);
    std::vector<json> triplets;
    std::vector<json> journal;
    std::size_t verified = 0, discarded = 0, dropped = 0;
    for (const auto& o : outcomes) {
        if (!o.triplet) {
            ++dropped;
            journal.push_back({{"caption_id", o.caption_id}, {"dropped", o.dropped_reason}});
            continue;
        }
        triplets.push_back(o.triplet->to_json());
        const bool ok = o.triplet->status == scene::TripletStatus::verified;
        ++(ok ? verified : discarded);
        json entry{{"caption_id", o.caption_id},
                   {"triplet_id", o.triplet->id},
                   {"from", "proposed"},
                   {"to", scene::to_string(o.triplet->status)}};
        if (o.report) entry["validation"] = o.report->to_json();
        journal.push_back(std::move(entry));
    }
    jsonl::write(ctx.wd / "triplets/triplets.jsonl", triplets);
    jsonl::write(ctx.wd / "triplets/journal.jsonl", journal);
    return {{"triplets/triplets.jsonl", "triplets/journal.jsonl"},
            {{"captions", captions.size()}, {"verified", verified}, {"discarded", discarded}, {"dropped", dropped}}};
}

StageOutput stage_images(Context& ctx) {
    const auto triplets = load_verified(ctx);
    auto& imagegen = ctx.client("imagegen");
    std::vector<std::optional<assessor::GeneratedImage>> images(triplets.size());
    std::vector<std::string> errors(triplets.size());
    parallel_for(triplets.size(), imagegen.endpoint().parallelism_budget, [&](std::size_t i) {
        try {
            images[i] = assessor::generate_image(triplets[i], imagegen,
                                                 assessor::image_seed(ctx.cfg.seed, triplets[i].id), ctx.cfg.assessor,
                                                 &ctx.store);
        } catch (const BackendError& e) {
            errors[i] = e.what();
        }
    });
    std::vector<json> ok;
    std::vector<json> failed;
    std::set<std::string> files;
    for (std::size_t i = 0; i < triplets.size(); ++i) {
        if (images[i]) {
            ok.push_back(images[i]->to_json());
            if (images[i]->image_ref.rfind("cas:", 0) == 0 && fs::exists(ctx.store.path_for(images[i]->image_ref))) {
                files.insert("images/" + images[i]->image_ref.substr(4) + ".pgm");
            }
        } else {
            failed.push_back({{"triplet_id", triplets[i].id}, {"reason", "gen_failed"}, {"detail", errors[i]}});
        }
    }
    jsonl::write(ctx.wd / "images/images.jsonl", ok);
    jsonl::write(ctx.wd / "images/failed.jsonl", failed);
    StageOutput out{{"images/images.jsonl", "images/failed.jsonl"},
                    {{"requested", triplets.size()}, {"generated", ok.size()}, {"gen_failed", failed.size()}}};
    out.files.insert(out.files.end(), files.begin(), files.end());
    return out;
}

StageOutput stage_assess(Context& ctx) {
    const auto triplets = load_verified(ctx);
    std::map<std::string, assessor::GeneratedImage> by_id;
    for (auto& img : from_records<assessor::GeneratedImage>(ctx.wd / "images/images.jsonl")) {
        by_id.emplace(img.triplet_id, std::move(img));
    }
    std::vector<const scene::SceneTriplet*> todo;
    for (const auto& t : triplets) {
        if (by_id.count(t.id)) todo.push_back(&t);
    }
    auto& detect = ctx.client("detect");
    std::vector<std::variant<assessor::AssessedSample, assessor::Discarded>> results(todo.size());
    parallel_for(todo.size(), detect.endpoint().parallelism_budget, [&](std::size_t i) {
        results[i] = assessor::assess(*todo[i], by_id.at(todo[i]->id), detect, ctx.cfg.assessor);
    });
    std::vector<json> kept;
    std::vector<json> journal;
    std::map<std::string, std::size_t> reasons;
    for (std::size_t i = 0; i < todo.size(); ++i) {
        if (auto* s = std::get_if<assessor::AssessedSample>(&results[i])) {
            kept.push_back(s->to_json());
            journal.push_back({{"triplet_id", s->triplet.id}, {"from", "verified"}, {"to", "assessed"}});
        } else {
            const auto& d = std::get<assessor::Discarded>(results[i]);
            ++reasons[d.reason];
            journal.push_back(
                {{"triplet_id", d.triplet_id}, {"from", "verified"}, {"to", "discarded"}, {"reason", d.reason}});
        }
    }
    jsonl::write(ctx.wd / "triplets/assessed.jsonl", kept);
    jsonl::write(ctx.wd / "triplets/assess_journal.jsonl", journal);
    return {{"triplets/assessed.jsonl", "triplets/assess_journal.jsonl"},
            {{"with_image", todo.size()}, {"assessed", kept.size()}, {"discarded", reasons}}};
}

StageOutput stage_queries(Context& ctx) {
    const auto samples = from_records<assessor::AssessedSample>(ctx.wd / "triplets/assessed.jsonl");
    querygen::MemoryBank bank;
    querygen::QueryGenConfig qcfg = ctx.cfg.querygen;
    std::vector<json> queries;
    std::vector<json> skipped;
    std::map<std::string, std::size_t> per_kind;
    // Sequential: the bank contents feed later prompts, so order must be fixed.
    for (const auto& s : samples) {
        for (auto kind : querygen::kAllKinds) {
            try {
                for (const auto& q : querygen::generate_queries(s, kind, bank, ctx.client("textgen"),
                                                                ctx.client("embed"), ctx.templates, qcfg)) {
                    queries.push_back(q.to_json());
                    ++per_kind[std::string(querygen::to_string(kind))];
                }
            } catch (const ParseError& e) {
                skipped.push_back({{"triplet_id", s.triplet.id}, {"kind", querygen::to_string(kind)}, {"reason", e.what()}});
            }
        }
    }
    jsonl::write(ctx.wd / "queries/queries.jsonl", queries);
    jsonl::write(ctx.wd / "queries/memory_bank.jsonl", bank.to_records());
    jsonl::write(ctx.wd / "queries/skipped.jsonl", skipped);
    return {{"queries/queries.jsonl", "queries/memory_bank.jsonl", "queries/skipped.jsonl"},
            {{"samples", samples.size()},
             {"queries", queries.size()},
             {"per_kind", per_kind},
             {"memory_entries", bank.size()},
             {"skipped", skipped.size()}}};
}

StageOutput stage_correct(Context& ctx) {
    const auto queries = from_records<querygen::TaskQuery>(ctx.wd / "queries/queries.jsonl");
    const auto samples = load_assessed(ctx);
    auto& policy = ctx.client("policy");
    std::vector<std::optional<correction::ResponsePair>> pairs(queries.size());
    std::vector<std::string> errors(queries.size());
    parallel_for(queries.size(), policy.endpoint().parallelism_budget, [&](std::size_t i) {
        auto it = samples.find(queries[i].triplet_id);
        if (it == samples.end()) {
            errors[i] = "no assessed sample";
            return;
        }
        try {
            pairs[i] = correction::collect_pair(queries[i], it->second, policy);
        } catch (const BackendError& e) {
            errors[i] = e.what();
        } catch (const DataError& e) {
            errors[i] = e.what();
        }
    });
    std::vector<json> ok;
    std::vector<json> skipped;
    for (std::size_t i = 0; i < queries.size(); ++i) {
        if (pairs[i]) {
            ok.push_back(pairs[i]->to_json());
        } else {
            skipped.push_back({{"query_id", queries[i].id}, {"reason", errors[i]}});
        }
    }
    jsonl::write(ctx.wd / "pairs/pairs.jsonl", ok);
    jsonl::write(ctx.wd / "pairs/skipped.jsonl", skipped);
    return {{"pairs/pairs.jsonl", "pairs/skipped.jsonl"},
            {{"queries", queries.size()}, {"pairs", ok.size()}, {"skipped", skipped.size()}}};
}

StageOutput stage_filter(Context& ctx) {
    const auto pairs = from_records<correction::ResponsePair>(ctx.wd / "pairs/pairs.jsonl");
    const auto result = correction::filter_pairs(pairs, ctx.client("embed"), ctx.cfg.sim_threshold);
    jsonl::write(ctx.wd / "pairs/kept.jsonl", to_records(result.kept));
    jsonl::write_document(ctx.wd / "pairs/filter_report.json", result.report.to_json());
    return {{"pairs/kept.jsonl", "pairs/filter_report.json"}, result.report.to_json()};
}

StageOutput stage_compose(Context& ctx) {
    const auto kept = from_records<correction::ResponsePair>(ctx.wd / "pairs/kept.jsonl");
    const auto dataset = correction::compose_dataset(kept, ctx.cfg.composition);
    jsonl::write(ctx.wd / "dataset/preference.jsonl", to_records(dataset));
    jsonl::write_document(ctx.wd / "dataset/recipe.json",
                          dpo::recipe_metadata(ctx.cfg.train.dpo.beta, ctx.cfg.composition.to_json()));
    std::map<std::string, std::size_t> per_kind;
    for (const auto& p : dataset) ++per_kind[std::string(querygen::to_string(p.kind))];
    return {{"dataset/preference.jsonl", "dataset/recipe.json"}, {{"pairs", dataset.size()}, {"per_kind", per_kind}}};
}

StageOutput stage_train(Context& ctx) {
    const auto dataset = from_records<correction::PreferencePair>(ctx.wd / "dataset/preference.jsonl");
    std::map<std::string, std::size_t> vocab;
    if (ctx.cfg.train.token_map) {
        vocab = jsonl::read_document(*ctx.cfg.train.token_map).get<std::map<std::string, std::size_t>>();
    } else {
        std::vector<std::string> texts;
        for (const auto& p : dataset) {
            texts.push_back(p.chosen);
            texts.push_back(p.rejected);
        }
        vocab = dpo::build_vocab(texts);
    }
    std::size_t vocab_size = 1;
    for (const auto& [w, id] : vocab) vocab_size = std::max(vocab_size, id + 1);
    const std::size_t max_len = ctx.cfg.train.max_len;
    std::vector<dpo::TokenPair> pairs;
    for (const auto& p : dataset) {
        pairs.push_back({dpo::tokenize(p.chosen, vocab, max_len), dpo::tokenize(p.rejected, vocab, max_len)});
    }
    const auto result = dpo::train_toy(pairs, ctx.cfg.train.dpo, vocab_size, max_len);
    jsonl::write(ctx.wd / "dataset/toy_trajectory.jsonl", to_records(result.trajectory));
    jsonl::write_document(ctx.wd / "dataset/token_map.json", json(vocab));
    const auto& first = result.trajectory.front();
    const auto& last = result.trajectory.back();
    return {{"dataset/toy_trajectory.jsonl", "dataset/token_map.json"},
            {{"pairs", pairs.size()},
             {"vocab_size", vocab_size},
             {"steps", ctx.cfg.train.dpo.steps},
             {"initial_loss", first.loss},
             {"final_loss", last.loss},
             {"final_mean_margin", last.mean_margin}}};
}

StageOutput stage_bench_assemble(Context& ctx) {
    const auto queries = from_records<querygen::TaskQuery>(ctx.wd / "queries/queries.jsonl");
    const auto samples = load_assessed(ctx);
    const auto dev =
        bench::assemble_dev_set(queries, samples, ctx.cfg.bench.n_cpq, ctx.cfg.bench.n_tpq, ctx.cfg.seed);
    jsonl::write(ctx.wd / "bench/dev_set.jsonl", to_records(dev));
    return {{"bench/dev_set.jsonl"}, {{"samples", dev.size()}, {"positive", ctx.cfg.bench.n_cpq},
                                      {"negative", ctx.cfg.bench.n_tpq}}};
}

StageOutput stage_bench_judge(Context& ctx) {
    const auto dev = from_records<bench::BenchSample>(ctx.wd / "bench/dev_set.jsonl");
    std::map<std::string, std::string> given;
    if (ctx.cfg.bench.responses) {
        for (const auto& r : jsonl::read(*ctx.cfg.bench.responses)) {
            given[r.at("id").get<std::string>()] = r.at("response").get<std::string>();
        }
    }
    const auto samples = load_assessed(ctx);
    auto& policy = ctx.client("policy");
    auto& judge = ctx.client("judge");
    std::vector<std::string> responses(dev.size());
    std::vector<bench::JudgeVerdict> verdicts(dev.size());
    parallel_for(dev.size(), judge.endpoint().parallelism_budget, [&](std::size_t i) {
        const auto& s = dev[i];
        if (auto it = given.find(s.id); it != given.end()) {
            responses[i] = it->second;
        } else if (ctx.cfg.bench.responses) {
            throw DataError("responses file has no entry for sample '" + s.id + "'");
        } else {
            const auto kind = s.label == bench::Label::positive ? querygen::QueryKind::CPQ : querygen::QueryKind::TPQ;
            responses[i] = correction::policy_answer(policy, kind, s.target, s.question, s.question,
                                                     samples.at(s.triplet_id), false);
        }
        verdicts[i] = bench::judge(s, responses[i], judge, ctx.templates);
    });
    std::vector<json> resp_records;
    for (std::size_t i = 0; i < dev.size(); ++i) resp_records.push_back({{"id", dev[i].id}, {"response", responses[i]}});
    jsonl::write(ctx.wd / "bench/responses.jsonl", resp_records);
    jsonl::write(ctx.wd / "bench/verdicts.jsonl", to_records(verdicts));
    std::size_t unparsable = 0;
    for (const auto& v : verdicts) unparsable += v.predicted == bench::Predicted::unparsable;
    return {{"bench/responses.jsonl", "bench/verdicts.jsonl"},
            {{"samples", dev.size()}, {"unparsable", unparsable}}};
}

StageOutput stage_bench_report(Context& ctx) {
    const auto dev = from_records<bench::BenchSample>(ctx.wd / "bench/dev_set.jsonl");
    const auto verdicts = from_records<bench::JudgeVerdict>(ctx.wd / "bench/verdicts.jsonl");
    std::map<std::string, bench::Label> labels;
    for (const auto& s : dev) labels[s.id] = s.label;
    const auto report = bench::compute_metrics(verdicts, labels);
    jsonl::write_document(ctx.wd / "bench/report.json", report.to_json());
    jsonl::write_text(ctx.wd / "bench/report.txt", report.table());
    return {{"bench/report.json", "bench/report.txt"}, report.to_json()};
}

using StageFn = StageOutput (*)(Context&);

StageFn stage_fn(const std::string& name) {
    static const std::map<std::string, StageFn> fns{
        {"pool", stage_pool},
        {"scene", stage_scene},
        {"images", stage_images},
        {"assess", stage_assess},
        {"queries", stage_queries},
        {"correct", stage_correct},
        {"filter", stage_filter},
        {"compose", stage_compose},
        {"train", stage_train},
        {"bench-assemble", stage_bench_assemble},
        {"bench-judge", stage_bench_judge},
        {"bench-report", stage_bench_report},
    };
    return fns.at(name);
}

// ---- manifest ----

json load_manifest(const RunConfig& cfg) {
    const fs::path p = manifest_path(cfg);
    if (!fs::exists(p)) return json{{"seed", cfg.seed}, {"stages", json::object()}};
    return jsonl::read_document(p);
}

std::string outputs_digest(const json& stage_record) { return hash::sha256_hex(stage_record.at("outputs").dump()); }

std::string external_input_digest(const RunConfig& cfg, const std::string& stage) {
    if (stage == "pool") return hash::file_sha256_hex(cfg.input_captions);
    if (stage == "bench-judge" && cfg.bench.responses) return hash::file_sha256_hex(*cfg.bench.responses);
    if (stage == "train" && cfg.train.token_map) return hash::file_sha256_hex(*cfg.train.token_map);
    return {};
}

bool stage_complete(const json& manifest, const RunConfig& cfg, const std::string& name) {
    const json& stages = manifest.at("stages");
    if (!stages.contains(name)) return false;
    const json& rec = stages[name];
    for (const auto& [rel, digest] : rec.at("outputs").items()) {
        const fs::path p = cfg.workdir / rel;
        if (!fs::exists(p) || hash::file_sha256_hex(p) != digest.get<std::string>()) return false;
    }
    const json& inputs = rec.at("inputs");
    for (const auto& pre : stage_def(name).prereqs) {
        if (!stage_complete(manifest, cfg, pre)) return false;
        if (!inputs.contains(pre) || inputs[pre] != outputs_digest(stages[pre])) return false;
    }
    const std::string ext = external_input_digest(cfg, name);
    if (!ext.empty() && inputs.value("external", std::string{}) != ext) return false;
    return true;
}

}  // namespace

// ---- RunConfig ----

RunConfig RunConfig::from_json(const json& j, const fs::path& base_dir) {
    check_keys(j, "config",
               {"seed", "workdir", "input_captions", "templates_dir", "dedup", "recaption", "scene", "assessor",
                "querygen", "correction", "composition", "dpo", "bench", "endpoints"});
    RunConfig c;
    if (!j.contains("seed") || !j["seed"].is_number_integer()) throw ConfigError("config needs an integer 'seed'");
    c.seed = j["seed"].get<std::uint64_t>();
    std::string s;
    read_opt(j, "workdir", s, "config");
    if (!s.empty()) c.workdir = resolve(base_dir, s);
    s.clear();
    read_opt(j, "input_captions", s, "config");
    if (!s.empty()) c.input_captions = resolve(base_dir, s);
    s.clear();
    read_opt(j, "templates_dir", s, "config");
    if (!s.empty()) c.templates_dir = resolve(base_dir, s);
    read_opt(j, "recaption", c.recaption, "config");

    c.dedup.seed = c.seed;
    if (j.contains("dedup")) {
        const json& b = j["dedup"];
        check_keys(b, "dedup", {"shingle_size", "num_hashes", "bands", "rows_per_band", "threshold", "seed"});
        read_opt(b, "shingle_size", c.dedup.shingle_size, "dedup");
        read_opt(b, "num_hashes", c.dedup.num_hashes, "dedup");
        read_opt(b, "bands", c.dedup.bands, "dedup");
        read_opt(b, "rows_per_band", c.dedup.rows_per_band, "dedup");
        read_opt(b, "threshold", c.dedup.threshold, "dedup");
        read_opt(b, "seed", c.dedup.seed, "dedup");
    }
    if (j.contains("scene")) {
        const json& b = j["scene"];
        check_keys(b, "scene", {"max_objects", "max_prompt_words", "max_rewrite_attempts", "max_parse_retries"});
        read_opt(b, "max_objects", c.scene.max_objects, "scene");
        read_opt(b, "max_prompt_words", c.scene.max_prompt_words, "scene");
        read_opt(b, "max_rewrite_attempts", c.scene.max_rewrite_attempts, "scene");
        read_opt(b, "max_parse_retries", c.scene.max_parse_retries, "scene");
    }
    if (j.contains("assessor")) {
        const json& b = j["assessor"];
        check_keys(b, "assessor", {"detection_threshold", "max_gen_retries", "image_size"});
        read_opt(b, "detection_threshold", c.assessor.detection_threshold, "assessor");
        read_opt(b, "max_gen_retries", c.assessor.max_gen_retries, "assessor");
        read_opt(b, "image_size", c.assessor.image_size, "assessor");
    }
    c.querygen.seed = c.seed;
    if (j.contains("querygen")) {
        const json& b = j["querygen"];
        check_keys(b, "querygen", {"retrieve_k", "min_sim", "per_kind", "max_words"});
        read_opt(b, "retrieve_k", c.querygen.retrieve_k, "querygen");
        read_opt(b, "min_sim", c.querygen.min_sim, "querygen");
        read_opt(b, "per_kind", c.querygen.per_kind, "querygen");
        read_opt(b, "max_words", c.querygen.max_words, "querygen");
    }
    if (j.contains("correction")) {
        check_keys(j["correction"], "correction", {"sim_threshold"});
        read_opt(j["correction"], "sim_threshold", c.sim_threshold, "correction");
    }
    c.composition.seed = c.seed;
    if (j.contains("composition")) {
        const json& b = j["composition"];
        check_keys(b, "composition", {"CPQ", "TPQ", "Existence", "Description", "seed"});
        for (auto kind : querygen::kAllKinds) {
            const std::string key(querygen::to_string(kind));
            if (!b.contains(key)) continue;
            if (!b[key].is_number_integer() || b[key].get<std::int64_t>() < 0) {
                throw ConfigError("composition." + key + " must be a non-negative integer");
            }
            c.composition.counts[kind] = b[key].get<std::size_t>();
        }
        read_opt(b, "seed", c.composition.seed, "composition");
    }
    c.train.dpo.seed = c.seed;
    if (j.contains("dpo")) {
        const json& b = j["dpo"];
        check_keys(b, "dpo", {"beta", "learning_rate", "steps", "max_len", "token_map", "seed"});
        read_opt(b, "beta", c.train.dpo.beta, "dpo");
        read_opt(b, "learning_rate", c.train.dpo.learning_rate, "dpo");
        read_opt(b, "steps", c.train.dpo.steps, "dpo");
        read_opt(b, "max_len", c.train.max_len, "dpo");
        read_opt(b, "seed", c.train.dpo.seed, "dpo");
        std::string tm;
        read_opt(b, "token_map", tm, "dpo");
        if (!tm.empty()) c.train.token_map = resolve(base_dir, tm);
    }
    if (j.contains("bench")) {
        const json& b = j["bench"];
        check_keys(b, "bench", {"n_cpq", "n_tpq", "responses"});
        read_opt(b, "n_cpq", c.bench.n_cpq, "bench");
        read_opt(b, "n_tpq", c.bench.n_tpq, "bench");
        std::string r;
        read_opt(b, "responses", r, "bench");
        if (!r.empty()) c.bench.responses = resolve(base_dir, r);
    }

    const std::map<std::string, gateway::Role> default_roles{
        {"textgen", gateway::Role::textgen}, {"imagegen", gateway::Role::imagegen}, {"detect", gateway::Role::detect},
        {"embed", gateway::Role::embed},     {"judge", gateway::Role::judge},       {"policy", gateway::Role::textgen}};
    for (const auto& [name, role] : default_roles) {
        gateway::BackendEndpoint ep;
        ep.role = role;
        c.endpoints[name] = ep;
    }
    if (j.contains("endpoints")) {
        const json& eps = j["endpoints"];
        if (!eps.is_object()) throw ConfigError("'endpoints' must be an object");
        for (const auto& [name, body] : eps.items()) {
            if (!default_roles.count(name)) throw ConfigError("unknown endpoint '" + name + "'");
            json b = body;
            if (!b.contains("role")) b["role"] = std::string(gateway::to_string(default_roles.at(name)));
            auto ep = gateway::BackendEndpoint::from_json(b);
            // Scripted stub paths are relative to the config file.
            if (ep.base_url.rfind("stub:", 0) == 0 && ep.base_url.rfind("stub://", 0) != 0) {
                ep.base_url = "stub:" + resolve(base_dir, ep.base_url.substr(5)).string();
            }
            c.endpoints[name] = ep;
        }
    }
    c.validate();
    return c;
}

RunConfig RunConfig::load(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    json doc;
    try {
        doc = jsonl::read_document(path);
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    }
    RunConfig c = from_json(doc, path.parent_path());
    c.apply_env_overrides();
    c.validate();
    return c;
}

void RunConfig::apply_env_overrides() {
    for (auto& [name, ep] : endpoints) {
        const std::string prefix = "ANTIDOTE_ENDPOINT_" + upper(name);
        if (const char* url = std::getenv((prefix + "_URL").c_str()); url && *url) ep.base_url = url;
        if (const char* tok = std::getenv((prefix + "_TOKEN").c_str()); tok && *tok) ep.bearer_token = tok;
    }
}

void RunConfig::validate() const {
    dedup.validate();
    train.dpo.validate();
    if (!(sim_threshold >= 0.0 && sim_threshold <= 1.0)) throw ConfigError("sim_threshold must be in [0,1]");
    if (!(assessor.detection_threshold >= 0.0 && assessor.detection_threshold <= 1.0)) {
        throw ConfigError("detection_threshold must be in [0,1]");
    }
    if (querygen.retrieve_k == 0) throw ConfigError("querygen.retrieve_k must be >= 1");
    if (scene.max_objects == 0) throw ConfigError("scene.max_objects must be >= 1");
    if (train.max_len == 0) throw ConfigError("dpo.max_len must be >= 1");
    if (templates_dir) TemplateSet::load(*templates_dir);
    for (const auto& name : endpoint_names()) {
        auto it = endpoints.find(name);
        if (it == endpoints.end()) throw ConfigError("missing endpoint '" + name + "'");
        it->second.validate();
    }
    if (endpoints.at("policy").role != gateway::Role::textgen) throw ConfigError("policy endpoint must be textgen");
}

json RunConfig::to_json() const {
    json eps = json::object();
    for (const auto& [name, ep] : endpoints) eps[name] = ep.to_json();
    json comp = json::object();
    for (const auto& [kind, n] : composition.counts) comp[std::string(querygen::to_string(kind))] = n;
    comp["seed"] = composition.seed;
    return json{{"seed", seed},
                {"workdir", workdir.string()},
                {"input_captions", input_captions.string()},
                {"templates_dir", templates_dir ? json(templates_dir->string()) : json(nullptr)},
                {"recaption", recaption},
                {"dedup",
                 {{"shingle_size", dedup.shingle_size},
                  {"num_hashes", dedup.num_hashes},
                  {"bands", dedup.bands},
                  {"rows_per_band", dedup.rows_per_band},
                  {"threshold", dedup.threshold},
                  {"seed", dedup.seed}}},
                {"scene",
                 {{"max_objects", scene.max_objects},
                  {"max_prompt_words", scene.max_prompt_words},
                  {"max_rewrite_attempts", scene.max_rewrite_attempts},
                  {"max_parse_retries", scene.max_parse_retries}}},
                {"assessor",
                 {{"detection_threshold", assessor.detection_threshold},
                  {"max_gen_retries", assessor.max_gen_retries},
                  {"image_size", assessor.image_size}}},
                {"querygen",
                 {{"retrieve_k", querygen.retrieve_k},
                  {"min_sim", querygen.min_sim},
                  {"per_kind", querygen.per_kind},
                  {"max_words", querygen.max_words}}},
                {"correction", {{"sim_threshold", sim_threshold}}},
                {"composition", comp},
                {"dpo",
                 {{"beta", train.dpo.beta},
                  {"learning_rate", train.dpo.learning_rate},
                  {"steps", train.dpo.steps},
                  {"seed", train.dpo.seed},
                  {"max_len", train.max_len},
                  {"token_map", train.token_map ? json(train.token_map->string()) : json(nullptr)}}},
                {"bench",
                 {{"n_cpq", bench.n_cpq},
                  {"n_tpq", bench.n_tpq},
                  {"responses", bench.responses ? json(bench.responses->string()) : json(nullptr)}}},
                {"endpoints", eps}};
}

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& s : stage_table()) n.push_back(s.name);
        return n;
    }();
    return names;
}

const std::vector<std::string>& endpoint_names() {
    static const std::vector<std::string> names{"textgen", "imagegen", "detect", "embed", "judge", "policy"};
    return names;
}

fs::path manifest_path(const RunConfig& cfg) { return cfg.workdir / "manifest.json"; }

std::string manifest_digest(const RunConfig& cfg) { return hash::file_sha256_hex(manifest_path(cfg)); }

StageSummary run_stage(const std::string& stage, const RunConfig& cfg, bool force) {
    const StageDef& def = stage_def(stage);
    json manifest = load_manifest(cfg);
    if (!force && stage_complete(manifest, cfg, stage)) {
        return StageSummary{stage, true, manifest["stages"][stage].at("summary")};
    }
    json inputs = json::object();
    for (const auto& pre : def.prereqs) {
        if (!stage_complete(manifest, cfg, pre)) {
            throw StageOrderError("stage '" + stage + "' needs completed stage '" + pre + "'");
        }
        inputs[pre] = outputs_digest(manifest["stages"][pre]);
    }
    if (stage == "pool" && cfg.input_captions.empty()) throw ConfigError("config has no input_captions");
    const std::string ext = external_input_digest(cfg, stage);
    if (!ext.empty()) inputs["external"] = ext;

    Context ctx(cfg);
    ctx.journal->set_stage(stage);
    StageOutput out = stage_fn(stage)(ctx);

    json outputs = json::object();
    for (const auto& rel : out.files) outputs[rel] = hash::file_sha256_hex(cfg.workdir / rel);
    manifest["seed"] = cfg.seed;
    manifest["stages"][stage] = json{{"inputs", inputs},
                                     {"outputs", outputs},
                                     {"summary", out.summary},
                                     {"calls", gateway::RunJournal::to_json(ctx.journal->take_stage(stage))}};
    jsonl::write_document(manifest_path(cfg), manifest);
    return StageSummary{stage, false, out.summary};
}

std::vector<StageSummary> run_all(const RunConfig& cfg, bool force) {
    std::vector<StageSummary> out;
    for (const auto& name : stage_names()) out.push_back(run_stage(name, cfg, force));
    return out;
}

}  // namespace antidote::pipeline
