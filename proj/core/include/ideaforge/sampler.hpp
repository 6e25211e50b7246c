#pragma once

#include "ideaforge/atomizer.hpp"
#include "ideaforge/common.hpp"
#include "ideaforge/seqmodel.hpp"

#include <filesystem>
#include <vector>

namespace ideaforge::sampler {

// =============================================================================
// Sample candidates from the coherence model, score under both models, rank,
// fuse with reciprocal rank fusion, and keep the top of the fused list.
// =============================================================================

struct SamplerConfig {
    int n_candidates = 10000;
    int seq_length = 3;
    double temperature = 1.0;
    double rrf_k = 60.0;
    int top_k = 300;
    uint64_t seed = 0;
    bool allow_repeats = false;
    /// Average availability over all orderings of a candidate instead of the
    /// sampled ordering.
    bool availability_order_averaged = false;

    void validate() const;
};

struct Candidate {
    std::vector<int> atom_ids;
    double c_score = 0.0; // coherence: mean log-prob under the paper model
    double a_score = 0.0; // availability: mean log-prob under the author model
    int rank_c = 0;       // 1-based, most coherent first
    int rank_a = 0;       // 1-based, least available first
    double rrf = 0.0;     // 1/(k + rank_c) + 1/(k + rank_a)
};

double rrf_score(double k, int rank_c, int rank_a);

/// Deduplicate by unordered atom set, keeping the ordering with the highest
/// c_score (ties: lexicographically smallest id sequence). Idempotent.
std::vector<Candidate> dedup_candidates(std::vector<Candidate> candidates);

/// Rank already-scored candidates and fuse: rank_c sorts c_score descending,
/// rank_a sorts a_score ascending (least available first), ties by
/// lexicographic atom ids. Returns candidates sorted by rrf descending.
std::vector<Candidate> fuse_scored(std::vector<Candidate> candidates, double rrf_k);

/// Draw n_candidates sequences and deduplicate by unordered atom set,
/// keeping the ordering with the highest c_score (ties: lexicographically
/// smallest id sequence). a_score and ranks stay unset.
std::vector<Candidate> generate_candidates(const lm::AtomLM& coherence_lm,
                                           const SamplerConfig& cfg);

/// Fill scores, both rank columns and the fused score; returns candidates
/// sorted by rrf descending (ties: lexicographic atom ids).
std::vector<Candidate> rank_and_fuse(std::vector<Candidate> candidates,
                                     const lm::AtomLM& coherence_lm,
                                     const lm::AtomLM& availability_lm,
                                     const SamplerConfig& cfg);

/// Stable prefix of the fused ranking; warns when fewer than top_k exist.
std::vector<Candidate> select_top(const std::vector<Candidate>& ranked, int top_k);

/// Uniform draws of `length` distinct atoms, n times, independent.
std::vector<std::vector<int>> random_baseline(int atom_count, int n, int length, uint64_t seed);

// Candidate JSONL: {atoms, atom_texts, c_score, a_score, rank_c, rank_a, rrf}.
void save_candidates(const std::vector<Candidate>& candidates,
                     const atoms::AtomVocabulary& vocabulary,
                     const std::filesystem::path& path);
std::vector<Candidate> load_candidates(const std::filesystem::path& path);

} // namespace ideaforge::sampler
