#include "ideaforge/seqmodel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ideaforge::lm {

using nlohmann::json;

namespace {
constexpr int kMaxOrder = 4;      // context packing: 4 x 16-bit fields
constexpr int kMaxToken = 65533;  // fits (token + 1) in 16 bits
} // namespace

void LmParams::validate() const {
    if (order < 1 || order > kMaxOrder)
        throw ValidationError("lm order must be in 1.." + std::to_string(kMaxOrder));
    if (!(alpha > 0)) throw ValidationError("lm alpha must be > 0");
    if (static_cast<int>(weights.size()) != order)
        throw ValidationError("lm weights must have one entry per context length 0..order-1");
    double sum = 0;
    for (double w : weights) {
        if (w < 0) throw ValidationError("lm weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("lm weights must sum to 1");
}

AtomLM::AtomLM(int atom_count, LmParams params)
    : atom_count_(atom_count), params_(std::move(params)) {
    params_.validate();
    if (atom_count < 1) throw ValidationError("AtomLM: need at least one atom");
    if (atom_count + 2 > kMaxToken) throw ValidationError("AtomLM: vocabulary too large");
    tables_.resize(static_cast<std::size_t>(params_.order));
}

uint64_t AtomLM::pack_context(std::span<const int> context) {
    uint64_t key = 0;
    for (std::size_t i = 0; i < context.size(); ++i) {
        key |= static_cast<uint64_t>(context[i] + 1) << (16 * i);
    }
    return key;
}

void AtomLM::check_tokens(std::span<const int> seq) const {
    for (int t : seq) {
        if (t < 0 || t >= atom_count_)
            throw ValidationError("token out of range: " + std::to_string(t));
    }
}

void AtomLM::count_ngram(int context_len, std::span<const int> context, int token) {
    Row& row = tables_[static_cast<std::size_t>(context_len)][pack_context(context)];
    ++row.counts[token];
    ++row.total;
}

AtomLM AtomLM::train(const std::vector<std::vector<int>>& sequences, int atom_count,
                     const LmParams& params) {
    AtomLM model(atom_count, params);
    const int order = model.params_.order;
    for (const auto& seq : sequences) {
        if (seq.empty()) throw ValidationError("train: empty sequence");
        model.check_tokens(seq);
        std::vector<int> padded;
        padded.reserve(seq.size() + static_cast<std::size_t>(order));
        for (int i = 0; i < order - 1; ++i) padded.push_back(model.bos());
        padded.insert(padded.end(), seq.begin(), seq.end());
        padded.push_back(model.eos());

        for (std::size_t pos = static_cast<std::size_t>(order - 1); pos < padded.size(); ++pos) {
            const int target = padded[pos];
            for (int len = 0; len < order; ++len) {
                if (len == 0 && target == model.eos()) continue; // unigram counts atoms only
                model.count_ngram(len,
                                  std::span<const int>(padded.data() + pos -
                                                           static_cast<std::size_t>(len),
                                                       static_cast<std::size_t>(len)),
                                  target);
            }
        }
    }
    return model;
}

double AtomLM::component_prob(int context_len, uint64_t key, int token) const {
    const double v = static_cast<double>(vocab_size());
    const auto& table = tables_[static_cast<std::size_t>(context_len)];
    auto it = table.find(key);
    if (it == table.end()) return 1.0 / v;
    const Row& row = it->second;
    auto ct = row.counts.find(token);
    const double c = ct == row.counts.end() ? 0.0 : static_cast<double>(ct->second);
    return (c + params_.alpha) / (static_cast<double>(row.total) + params_.alpha * v);
}

std::vector<int> AtomLM::padded_context(std::span<const int> context) const {
    // Exactly order-1 tokens: BOS padding on the left, then the most recent
    // caller tokens.
    const int need = params_.order - 1;
    std::vector<int> out(static_cast<std::size_t>(need), bos());
    const int take = std::min<int>(need, static_cast<int>(context.size()));
    for (int i = 0; i < take; ++i) {
        out[static_cast<std::size_t>(need - 1 - i)] = context[context.size() - 1 -
                                                             static_cast<std::size_t>(i)];
    }
    return out;
}

double AtomLM::prob(int token, std::span<const int> context) const {
    if (token < 0 || token >= vocab_size())
        throw ValidationError("prob: token out of range: " + std::to_string(token));
    for (int t : context) {
        if (t < 0 || t >= vocab_size())
            throw ValidationError("prob: context token out of range: " + std::to_string(t));
    }
    const std::vector<int> ctx = padded_context(context);
    double p = 0.0;
    for (int len = 0; len < params_.order; ++len) {
        const double w = params_.weights[static_cast<std::size_t>(len)];
        if (w == 0) continue;
        const std::span<const int> tail(ctx.data() + ctx.size() - static_cast<std::size_t>(len),
                                        static_cast<std::size_t>(len));
        p += w * component_prob(len, pack_context(tail), token);
    }
    return p;
}

std::vector<double> AtomLM::next_dist(std::span<const int> context) const {
    for (int t : context) {
        if (t < 0 || t >= vocab_size())
            throw ValidationError("next_dist: context token out of range: " + std::to_string(t));
    }
    const std::vector<int> ctx = padded_context(context);
    const double v = static_cast<double>(vocab_size());
    std::vector<double> dist(static_cast<std::size_t>(vocab_size()), 0.0);

    for (int len = 0; len < params_.order; ++len) {
        const double w = params_.weights[static_cast<std::size_t>(len)];
        if (w == 0) continue;
        const std::span<const int> tail(ctx.data() + ctx.size() - static_cast<std::size_t>(len),
                                        static_cast<std::size_t>(len));
        const uint64_t key = pack_context(tail);
        const auto& table = tables_[static_cast<std::size_t>(len)];
        auto it = table.find(key);
        if (it == table.end()) {
            const double uniform = w / v;
            for (double& d : dist) d += uniform;
            continue;
        }
        const Row& row = it->second;
        const double denom = static_cast<double>(row.total) + params_.alpha * v;
        const double floor = w * params_.alpha / denom;
        for (double& d : dist) d += floor;
        for (const auto& [token, count] : row.counts) {
            dist[static_cast<std::size_t>(token)] += w * static_cast<double>(count) / denom;
        }
    }
    return dist;
}

ScoredSequence AtomLM::score(const std::vector<int>& seq) const {
    if (seq.empty()) throw ValidationError("score: sequence must be non-empty");
    check_tokens(seq);
    double total = 0.0;
    for (std::size_t t = 0; t < seq.size(); ++t) {
        const std::span<const int> context(seq.data(), t);
        total += std::log(prob(seq[t], context));
    }
    ScoredSequence out;
    out.atom_ids = seq;
    out.score = total / static_cast<double>(seq.size());
    if (!std::isfinite(out.score) || out.score > 0)
        throw ValidationError("score: smoothing guarantees a finite, non-positive score");
    return out;
}

std::vector<std::vector<int>> AtomLM::sample(int n, int length, double temperature,
                                             uint64_t seed, bool allow_repeats) const {
    if (temperature < 0) throw ValidationError("sample: temperature must be >= 0");
    if (length < 1) throw ValidationError("sample: length must be >= 1");
    if (n < 0) throw ValidationError("sample: n must be >= 0");
    if (!allow_repeats && atom_count_ < length)
        throw ValidationError("sample: vocabulary smaller than sequence length, "
                              "distinct atoms impossible");

    std::vector<std::vector<int>> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        // Per-sequence generator: results do not depend on worker count.
        Rng rng(mix_seed(seed, static_cast<uint64_t>(i)));
        std::vector<int>& seq = out[static_cast<std::size_t>(i)];
        seq.reserve(static_cast<std::size_t>(length));
        std::vector<char> used(static_cast<std::size_t>(atom_count_), 0);
        for (int pos = 0; pos < length; ++pos) {
            const std::vector<double> dist = next_dist(seq);
            int pick = -1;
            if (temperature == 0) {
                double best = -1.0;
                for (int t = 0; t < atom_count_; ++t) {
                    if (!allow_repeats && used[static_cast<std::size_t>(t)]) continue;
                    if (dist[static_cast<std::size_t>(t)] > best) {
                        best = dist[static_cast<std::size_t>(t)];
                        pick = t;
                    }
                }
            } else {
                // Tempered weights in log space for stability.
                std::vector<double> w(static_cast<std::size_t>(atom_count_), 0.0);
                double max_l = -std::numeric_limits<double>::infinity();
                for (int t = 0; t < atom_count_; ++t) {
                    if (!allow_repeats && used[static_cast<std::size_t>(t)]) continue;
                    const double l = std::log(dist[static_cast<std::size_t>(t)]) / temperature;
                    w[static_cast<std::size_t>(t)] = l;
                    max_l = std::max(max_l, l);
                }
                double total = 0.0;
                for (int t = 0; t < atom_count_; ++t) {
                    if (!allow_repeats && used[static_cast<std::size_t>(t)]) {
                        w[static_cast<std::size_t>(t)] = 0.0;
                        continue;
                    }
                    w[static_cast<std::size_t>(t)] = std::exp(w[static_cast<std::size_t>(t)] - max_l);
                    total += w[static_cast<std::size_t>(t)];
                }
                const double r = rng.next_double() * total;
                double cum = 0.0;
                for (int t = 0; t < atom_count_; ++t) {
                    cum += w[static_cast<std::size_t>(t)];
                    if (cum > r) {
                        pick = t;
                        break;
                    }
                }
                if (pick < 0) { // numeric edge: take the last eligible token
                    for (int t = atom_count_ - 1; t >= 0; --t) {
                        if (allow_repeats || !used[static_cast<std::size_t>(t)]) {
                            pick = t;
                            break;
                        }
                    }
                }
            }
            seq.push_back(pick);
            if (!allow_repeats) used[static_cast<std::size_t>(pick)] = 1;
        }
    }
    return out;
}

double AtomLM::perplexity(const std::vector<std::vector<int>>& heldout) const {
    if (heldout.empty()) throw ValidationError("perplexity: held-out set must be non-empty");
    double total_nll = 0.0;
    std::size_t tokens = 0;
    for (const auto& seq : heldout) {
        const ScoredSequence s = score(seq);
        total_nll += -s.score * static_cast<double>(seq.size());
        tokens += seq.size();
    }
    return std::exp(total_nll / static_cast<double>(tokens));
}

// =============================================================================
// Serialization: versioned JSON with sparse count tables
// =============================================================================

void AtomLM::save(const std::filesystem::path& path) const {
    json j;
    j["format"] = "ideaforge-atomlm/1";
    j["atom_count"] = atom_count_;
    j["order"] = params_.order;
    j["alpha"] = params_.alpha;
    j["weights"] = params_.weights;
    j["tables"] = json::array();
    for (int len = 0; len < params_.order; ++len) {
        json rows = json::array();
        const auto& table = tables_[static_cast<std::size_t>(len)];
        std::vector<uint64_t> keys;
        keys.reserve(table.size());
        for (const auto& [key, _] : table) keys.push_back(key);
        std::sort(keys.begin(), keys.end());
        for (uint64_t key : keys) {
            const Row& row = table.at(key);
            std::vector<int> ctx(static_cast<std::size_t>(len));
            for (int i = 0; i < len; ++i) {
                ctx[static_cast<std::size_t>(i)] =
                    static_cast<int>((key >> (16 * i)) & 0xFFFFu) - 1;
            }
            std::vector<std::pair<int, uint64_t>> counts(row.counts.begin(), row.counts.end());
            std::sort(counts.begin(), counts.end());
            json jrow;
            jrow["ctx"] = ctx;
            jrow["counts"] = json::array();
            for (const auto& [token, count] : counts) {
                jrow["counts"].push_back({token, count});
            }
            rows.push_back(std::move(jrow));
        }
        j["tables"].push_back({{"len", len}, {"rows", std::move(rows)}});
    }
    write_text_file_atomic(path, j.dump() + "\n");
}

AtomLM AtomLM::load(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ParseError("model " + path.string() + ": " + e.what());
    }
    try {
        if (j.at("format").get<std::string>() != "ideaforge-atomlm/1")
            throw ParseError("model " + path.string() + ": unknown format tag");
        LmParams params;
        params.order = j.at("order").get<int>();
        params.alpha = j.at("alpha").get<double>();
        params.weights = j.at("weights").get<std::vector<double>>();
        AtomLM model(j.at("atom_count").get<int>(), params);
        for (const auto& table : j.at("tables")) {
            const int len = table.at("len").get<int>();
            for (const auto& jrow : table.at("rows")) {
                const auto ctx = jrow.at("ctx").get<std::vector<int>>();
                Row& row = model.tables_[static_cast<std::size_t>(len)][pack_context(ctx)];
                for (const auto& pair : jrow.at("counts")) {
                    const int token = pair.at(0).get<int>();
                    const uint64_t count = pair.at(1).get<uint64_t>();
                    row.counts[token] = count;
                    row.total += count;
                }
            }
        }
        return model;
    } catch (const json::exception& e) {
        throw ParseError("model " + path.string() + ": " + e.what());
    }
}

} // namespace ideaforge::lm
