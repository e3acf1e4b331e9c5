#include "antidote/corpus.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "antidote/error.hpp"
#include "antidote/gateway.hpp"
#include "antidote/hash.hpp"
#include "antidote/parallel.hpp"
#include "antidote/text.hpp"

namespace antidote::corpus {

ShingleSet normalize_and_shingle(std::string_view input, std::size_t k) {
    if (k == 0) throw ConfigError("shingle size must be >= 1");
    const auto words = text::split_words(text::normalize(input));
    if (words.empty()) throw EmptyInput("text is empty after normalization");
    ShingleSet shingles;
    if (words.size() < k) {
        shingles.insert(text::join(words, " "));
        return shingles;
    }
    for (std::size_t i = 0; i + k <= words.size(); ++i) {
        std::string s = words[i];
        for (std::size_t j = 1; j < k; ++j) {
            s += ' ';
            s += words[i + j];
        }
        shingles.insert(std::move(s));
    }
    return shingles;
}

MinHasher::MinHasher(std::size_t num_hashes, std::uint64_t seed) : seed_(seed) {
    if (num_hashes == 0) throw ConfigError("num_hashes must be positive");
    std::uint64_t state = seed;
    a_.reserve(num_hashes);
    b_.reserve(num_hashes);
    for (std::size_t i = 0; i < num_hashes; ++i) {
        unsigned __int128 a = (static_cast<unsigned __int128>(hash::splitmix64(state)) << 64) |
                              hash::splitmix64(state);
        unsigned __int128 b = (static_cast<unsigned __int128>(hash::splitmix64(state)) << 64) |
                              hash::splitmix64(state);
        a_.push_back(a | 1U);
        b_.push_back(b);
    }
}

MinHashSignature MinHasher::sign(const ShingleSet& shingles) const {
    if (shingles.empty()) throw EmptyInput("cannot sign an empty shingle set");
    MinHashSignature sig;
    sig.seed = seed_;
    sig.values.assign(a_.size(), UINT64_MAX);
    for (const auto& s : shingles) {
        const unsigned __int128 x = hash::fnv1a64(s);
        for (std::size_t i = 0; i < a_.size(); ++i) {
            const auto h = static_cast<std::uint64_t>((a_[i] * x + b_[i]) >> 64);
            sig.values[i] = std::min(sig.values[i], h);
        }
    }
    return sig;
}

MinHashSignature minhash_signature(const ShingleSet& shingles, std::size_t num_hashes,
                                   std::uint64_t seed) {
    return MinHasher(num_hashes, seed).sign(shingles);
}

double jaccard_estimate(const MinHashSignature& a, const MinHashSignature& b) {
    if (a.num_hashes() != b.num_hashes() || a.seed != b.seed) {
        throw IncompatibleSignatures("signatures differ in width or seed");
    }
    if (a.values.empty()) throw EmptyInput("empty signatures");
    std::size_t matches = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) matches += a.values[i] == b.values[i];
    return static_cast<double>(matches) / static_cast<double>(a.values.size());
}

void DedupConfig::validate() const {
    if (shingle_size == 0) throw ConfigError("shingle size must be >= 1");
    if (num_hashes == 0) throw ConfigError("num_hashes must be positive");
    if (bands == 0 || rows_per_band == 0 || bands * rows_per_band != num_hashes) {
        throw ConfigError("bands x rows_per_band must equal num_hashes (" + std::to_string(bands) +
                          " x " + std::to_string(rows_per_band) + " != " +
                          std::to_string(num_hashes) + ")");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) throw ConfigError("threshold must lie in [0, 1]");
}

json DedupReport::to_json() const {
    return json{{"retained_ids", retained_ids},
                {"clusters", clusters},
                {"threshold", threshold},
                {"candidate_pairs", candidate_pairs}};
}

namespace {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

    std::size_t find(std::size_t x) {
        while (parent_[x] != x) {
            parent_[x] = parent_[parent_[x]];
            x = parent_[x];
        }
        return x;
    }

    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

DedupReport deduplicate(const std::vector<Caption>& captions, const DedupConfig& cfg) {
    cfg.validate();

    // Work in id order so every derived structure is independent of input order.
    std::vector<std::size_t> order(captions.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t l, std::size_t r) { return captions[l].id < captions[r].id; });
    for (std::size_t i = 1; i < order.size(); ++i) {
        if (captions[order[i]].id == captions[order[i - 1]].id) {
            throw DataError("duplicate caption id '" + captions[order[i]].id + "'");
        }
    }

    const MinHasher hasher(cfg.num_hashes, cfg.seed);
    std::vector<MinHashSignature> sigs(order.size());
    parallel_for(order.size(), std::thread::hardware_concurrency(), [&](std::size_t i) {
        const auto& c = captions[order[i]];
        try {
            sigs[i] = hasher.sign(normalize_and_shingle(c.effective_text(), cfg.shingle_size));
        } catch (const EmptyInput&) {
            throw EmptyInput("caption '" + c.id + "' is empty after normalization");
        }
    });

    std::vector<std::pair<std::size_t, std::size_t>> candidates;
    for (std::size_t band = 0; band < cfg.bands; ++band) {
        std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets;
        for (std::size_t i = 0; i < sigs.size(); ++i) {
            std::uint64_t key = band;
            for (std::size_t r = 0; r < cfg.rows_per_band; ++r) {
                key = hash::mix(key, sigs[i].values[band * cfg.rows_per_band + r]);
            }
            buckets[key].push_back(i);
        }
        for (const auto& [key, members] : buckets) {
            for (std::size_t x = 0; x < members.size(); ++x) {
                for (std::size_t y = x + 1; y < members.size(); ++y) {
                    candidates.emplace_back(members[x], members[y]);
                }
            }
        }
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    UnionFind uf(sigs.size());
    for (const auto& [i, j] : candidates) {
        if (jaccard_estimate(sigs[i], sigs[j]) >= cfg.threshold) uf.unite(i, j);
    }

    // Roots are the smallest sorted index, i.e. the lexicographically smallest id.
    std::map<std::size_t, std::vector<std::string>> groups;
    for (std::size_t i = 0; i < sigs.size(); ++i) groups[uf.find(i)].push_back(captions[order[i]].id);

    DedupReport report;
    report.threshold = cfg.threshold;
    report.candidate_pairs = candidates.size();
    for (auto& [root, ids] : groups) {
        report.retained_ids.push_back(ids.front());
        if (ids.size() >= 2) report.clusters.push_back(std::move(ids));
    }
    return report;
}

RecaptionResult recaption(const std::vector<Caption>& captions, gateway::Client& textgen,
                          const std::string& prompt_template) {
    std::vector<std::optional<std::string>> replies(captions.size());
    parallel_for(captions.size(), textgen.endpoint().parallelism_budget, [&](std::size_t i) {
        const std::map<std::string, std::string> vars{{"caption", captions[i].raw_text}};
        json request{{"task", "P0-recaption"},
                     {"prompt", text::render(prompt_template, vars)},
                     {"vars", vars}};
        const std::string reply = text::trim(textgen.call(request).at("text").get<std::string>());
        if (reply.empty() || reply == "REJECT") return;
        replies[i] = reply;
    });

    RecaptionResult result;
    for (std::size_t i = 0; i < captions.size(); ++i) {
        if (!replies[i]) {
            result.rejected_ids.push_back(captions[i].id);
            continue;
        }
        Caption c = captions[i];
        c.rewritten_text = *replies[i];
        result.kept.push_back(std::move(c));
    }
    return result;
}

std::vector<Caption> read_captions(const std::filesystem::path& path) {
    std::vector<Caption> out;
    std::unordered_set<std::string> seen;
    for (const auto& rec : jsonl::read(path)) {
        if (!rec.is_object() || !rec.contains("id") || !rec.contains("text")) {
            throw DataError(path.string() + ": caption record needs 'id' and 'text'");
        }
        Caption c;
        c.id = rec.at("id").is_string() ? rec.at("id").get<std::string>() : rec.at("id").dump();
        c.source_tag = rec.value("source", std::string{});
        if (rec.contains("raw_text")) {
            c.raw_text = rec.at("raw_text").get<std::string>();
            c.rewritten_text = rec.at("text").get<std::string>();
        } else {
            c.raw_text = rec.at("text").get<std::string>();
        }
        if (!seen.insert(c.id).second) throw DataError("duplicate caption id '" + c.id + "'");
        out.push_back(std::move(c));
    }
    return out;
}

void write_captions(const std::filesystem::path& path, const std::vector<Caption>& captions) {
    std::vector<json> records;
    records.reserve(captions.size());
    for (const auto& c : captions) {
        json r{{"id", c.id}, {"text", c.effective_text()}, {"source", c.source_tag}};
        if (c.rewritten_text) r["raw_text"] = c.raw_text;
        records.push_back(std::move(r));
    }
    jsonl::write(path, records);
}

}  // namespace antidote::corpus
