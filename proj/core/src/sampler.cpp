#include "ideaforge/sampler.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>

namespace ideaforge::sampler {

using nlohmann::json;

void SamplerConfig::validate() const {
    if (n_candidates < 1) throw ValidationError("sampler: n_candidates must be >= 1");
    if (seq_length < 1) throw ValidationError("sampler: seq_length must be >= 1");
    if (temperature < 0) throw ValidationError("sampler: temperature must be >= 0");
    if (rrf_k <= 0) throw ValidationError("sampler: rrf_k must be > 0");
    if (top_k < 1) throw ValidationError("sampler: top_k must be >= 1");
    if (top_k > n_candidates)
        throw ValidationError("sampler: top_k must not exceed n_candidates");
}

double rrf_score(double k, int rank_c, int rank_a) {
    return 1.0 / (k + rank_c) + 1.0 / (k + rank_a);
}

std::vector<Candidate> dedup_candidates(std::vector<Candidate> candidates) {
    std::map<std::vector<int>, Candidate> by_set;
    for (auto& cand : candidates) {
        std::vector<int> key = cand.atom_ids;
        std::sort(key.begin(), key.end());
        auto it = by_set.find(key);
        if (it == by_set.end()) {
            by_set.emplace(std::move(key), std::move(cand));
        } else if (cand.c_score > it->second.c_score ||
                   (cand.c_score == it->second.c_score &&
                    cand.atom_ids < it->second.atom_ids)) {
            it->second = std::move(cand);
        }
    }
    std::vector<Candidate> out;
    out.reserve(by_set.size());
    for (auto& [_, cand] : by_set) out.push_back(std::move(cand));
    return out;
}

std::vector<Candidate> generate_candidates(const lm::AtomLM& coherence_lm,
                                           const SamplerConfig& cfg) {
    cfg.validate();
    if (coherence_lm.atom_count() < cfg.seq_length && !cfg.allow_repeats)
        throw ValidationError("generate_candidates: vocabulary smaller than seq_length");

    const auto draws = coherence_lm.sample(cfg.n_candidates, cfg.seq_length, cfg.temperature,
                                           cfg.seed, cfg.allow_repeats);
    std::vector<Candidate> candidates;
    candidates.reserve(draws.size());
    for (const auto& seq : draws) {
        Candidate cand;
        cand.atom_ids = seq;
        cand.c_score = coherence_lm.score(seq).score;
        candidates.push_back(std::move(cand));
    }
    auto out = dedup_candidates(std::move(candidates));
    log::info("generate_candidates: " + std::to_string(cfg.n_candidates) + " draws, " +
              std::to_string(out.size()) + " distinct atom sets");
    return out;
}

namespace {

double availability_score(const lm::AtomLM& availability_lm, const std::vector<int>& seq,
                          bool order_averaged) {
    if (!order_averaged) return availability_lm.score(seq).score;
    std::vector<int> perm = seq;
    std::sort(perm.begin(), perm.end());
    double total = 0.0;
    int count = 0;
    do {
        total += availability_lm.score(perm).score;
        ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
    return total / count;
}

} // namespace

std::vector<Candidate> fuse_scored(std::vector<Candidate> candidates, double rrf_k) {
    if (candidates.empty()) throw ValidationError("fuse_scored: no candidates");
    if (rrf_k <= 0) throw ValidationError("fuse_scored: rrf_k must be > 0");

    std::vector<std::size_t> order(candidates.size());

    // Coherence rank: most coherent first.
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (candidates[a].c_score != candidates[b].c_score)
            return candidates[a].c_score > candidates[b].c_score;
        return candidates[a].atom_ids < candidates[b].atom_ids;
    });
    for (std::size_t r = 0; r < order.size(); ++r)
        candidates[order[r]].rank_c = static_cast<int>(r + 1);

    // Availability rank: least available (most alien) first.
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (candidates[a].a_score != candidates[b].a_score)
            return candidates[a].a_score < candidates[b].a_score;
        return candidates[a].atom_ids < candidates[b].atom_ids;
    });
    for (std::size_t r = 0; r < order.size(); ++r)
        candidates[order[r]].rank_a = static_cast<int>(r + 1);

    for (auto& cand : candidates) cand.rrf = rrf_score(rrf_k, cand.rank_c, cand.rank_a);

    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.rrf != b.rrf) return a.rrf > b.rrf;
        return a.atom_ids < b.atom_ids;
    });
    return candidates;
}

std::vector<Candidate> rank_and_fuse(std::vector<Candidate> candidates,
                                     const lm::AtomLM& coherence_lm,
                                     const lm::AtomLM& availability_lm,
                                     const SamplerConfig& cfg) {
    if (candidates.empty()) throw ValidationError("rank_and_fuse: no candidates");

    parallel_for(candidates.size(), 4, [&](std::size_t i) {
        Candidate& cand = candidates[i];
        cand.c_score = coherence_lm.score(cand.atom_ids).score;
        cand.a_score =
            availability_score(availability_lm, cand.atom_ids, cfg.availability_order_averaged);
    });
    return fuse_scored(std::move(candidates), cfg.rrf_k);
}

std::vector<Candidate> select_top(const std::vector<Candidate>& ranked, int top_k) {
    if (top_k < 1) throw ValidationError("select_top: top_k must be >= 1");
    if (static_cast<std::size_t>(top_k) >= ranked.size()) {
        if (static_cast<std::size_t>(top_k) > ranked.size()) {
            log::warn("select_top: only " + std::to_string(ranked.size()) +
                      " candidates available, top_k=" + std::to_string(top_k));
        }
        return ranked;
    }
    return std::vector<Candidate>(ranked.begin(), ranked.begin() + top_k);
}

std::vector<std::vector<int>> random_baseline(int atom_count, int n, int length, uint64_t seed) {
    if (length < 1) throw ValidationError("random_baseline: length must be >= 1");
    if (atom_count < length)
        throw ValidationError("random_baseline: vocabulary smaller than draw length");
    if (n < 0) throw ValidationError("random_baseline: n must be >= 0");

    std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
    Rng rng(mix_seed(seed, 0xba5e));
    std::vector<int> pool(static_cast<std::size_t>(atom_count));
    for (int i = 0; i < n; ++i) {
        std::iota(pool.begin(), pool.end(), 0);
        // Partial Fisher-Yates: first `length` entries are a uniform sample
        // of distinct atoms.
        for (int k = 0; k < length; ++k) {
            const std::size_t j =
                static_cast<std::size_t>(k) + rng.below(pool.size() - static_cast<std::size_t>(k));
            std::swap(pool[static_cast<std::size_t>(k)], pool[j]);
        }
        out[static_cast<std::size_t>(i)].assign(pool.begin(), pool.begin() + length);
    }
    return out;
}

void save_candidates(const std::vector<Candidate>& candidates,
                     const atoms::AtomVocabulary& vocabulary,
                     const std::filesystem::path& path) {
    std::ostringstream out;
    for (const auto& cand : candidates) {
        json j;
        j["atoms"] = cand.atom_ids;
        json texts = json::array();
        for (int id : cand.atom_ids) texts.push_back(vocabulary.atom(id).canonical_text);
        j["atom_texts"] = std::move(texts);
        j["c_score"] = cand.c_score;
        j["a_score"] = cand.a_score;
        j["rank_c"] = cand.rank_c;
        j["rank_a"] = cand.rank_a;
        j["rrf"] = cand.rrf;
        out << j.dump() << "\n";
    }
    write_text_file_atomic(path, out.str());
}

std::vector<Candidate> load_candidates(const std::filesystem::path& path) {
    std::vector<Candidate> out;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        try {
            json j = json::parse(line);
            Candidate cand;
            cand.atom_ids = j.at("atoms").get<std::vector<int>>();
            cand.c_score = j.at("c_score").get<double>();
            cand.a_score = j.at("a_score").get<double>();
            cand.rank_c = j.at("rank_c").get<int>();
            cand.rank_a = j.at("rank_a").get<int>();
            cand.rrf = j.at("rrf").get<double>();
            out.push_back(std::move(cand));
        } catch (const json::exception& e) {
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
    });
    return out;
}

} // namespace ideaforge::sampler
