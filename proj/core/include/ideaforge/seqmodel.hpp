#pragma once

#include "ideaforge/common.hpp"

#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

namespace ideaforge::lm {

// =============================================================================
// Autoregressive categorical model over atom tokens.
//
// Interpolated additively-smoothed n-gram (default order 3). Trained and
// sampled sequences in this pipeline have length ~3, so the n-gram realizes
// the same probabilistic contract a small causal transformer would; the
// interface is architecture-agnostic.
//
// Token layout: atoms are 0..A-1, BOS = A, EOS = A+1; vocab_size = A + 2.
// Sequences passed in and out hold atom ids only — BOS padding and the
// terminal EOS are internal to training and scoring.
// =============================================================================

struct LmParams {
    int order = 3;
    double alpha = 0.1;
    /// weights[L] applies to the context-length-L component; must sum to 1.
    /// Defaults: 0.2 unigram, 0.3 bigram, 0.5 trigram.
    std::vector<double> weights = {0.2, 0.3, 0.5};

    void validate() const;
};

struct ScoredSequence {
    std::vector<int> atom_ids;
    double score = 0.0; // mean log-probability (nats); <= 0 under smoothing
};

class AtomLM {
public:
    /// Untrained model: every next-token distribution is uniform 1/V.
    AtomLM(int atom_count, LmParams params = {});

    /// Accumulate n-gram counts with BOS padding and a terminal EOS.
    /// The context-length-0 table counts atom occurrences only.
    static AtomLM train(const std::vector<std::vector<int>>& sequences, int atom_count,
                        const LmParams& params = {});

    int atom_count() const { return atom_count_; }
    int vocab_size() const { return atom_count_ + 2; }
    int bos() const { return atom_count_; }
    int eos() const { return atom_count_ + 1; }
    const LmParams& params() const { return params_; }

    /// Full next-token distribution over vocab_size(); sums to 1 within 1e-9,
    /// every entry >= the smoothing floor. Contexts longer than order-1 use
    /// only their most recent tokens.
    std::vector<double> next_dist(std::span<const int> context) const;

    /// Single-token probability under the same interpolation.
    double prob(int token, std::span<const int> context) const;

    /// Mean log-probability over the atoms of `seq` with BOS-padded
    /// contexts. The terminal EOS is trained but not scored.
    ScoredSequence score(const std::vector<int>& seq) const;

    /// Autoregressive temperature sampling. T=0 is argmax (ties to the
    /// lowest id). BOS/EOS are never emitted; by default atoms within one
    /// sequence are distinct (repeats rejected and redrawn).
    std::vector<std::vector<int>> sample(int n, int length, double temperature, uint64_t seed,
                                         bool allow_repeats = false) const;

    /// exp(mean NLL per scored token) over held-out sequences.
    double perplexity(const std::vector<std::vector<int>>& heldout) const;

    void save(const std::filesystem::path& path) const;
    static AtomLM load(const std::filesystem::path& path);

private:
    struct Row {
        std::unordered_map<int, uint64_t> counts;
        uint64_t total = 0;
    };

    static uint64_t pack_context(std::span<const int> context);
    void count_ngram(int context_len, std::span<const int> context, int token);
    /// Smoothed component probability for one context length.
    double component_prob(int context_len, uint64_t key, int token) const;
    std::vector<int> padded_context(std::span<const int> context) const;
    void check_tokens(std::span<const int> seq) const;

    int atom_count_ = 0;
    LmParams params_;
    std::vector<std::unordered_map<uint64_t, Row>> tables_; // index = context length
};

} // namespace ideaforge::lm
