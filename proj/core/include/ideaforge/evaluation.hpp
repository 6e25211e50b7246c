#pragma once

#include "ideaforge/atomizer.hpp"
#include "ideaforge/common.hpp"
#include "ideaforge/corpus.hpp"
#include "ideaforge/embedding.hpp"
#include "ideaforge/providers.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ideaforge::eval {

// =============================================================================
// Diversity
// =============================================================================

struct SelectionCounts {
    std::map<int, long long> counts; // atom id -> times selected
    long long total_selections = 0;
    int vocab_size = 0;

    static SelectionCounts from_selections(const std::vector<std::vector<int>>& selections,
                                           int vocab_size);
};

struct DiversityReport {
    long long unique_atoms = 0;
    long long total_selections = 0;
    double coverage = 0.0;        // unique / vocab_size
    double gini = 0.0;            // over atoms with >= 1 selection
    double mean_repetition = 0.0; // total / unique
    double top10_share = 0.0;     // 10 most-selected atoms' share of all selections
};

/// Gini over the counts vector exactly as given (zeros included if present):
/// G = sum_ij |x_i - x_j| / (2 n^2 mean).
double gini(const std::vector<double>& counts);

DiversityReport diversity(const std::vector<std::vector<int>>& selections, int vocab_size);

// =============================================================================
// Coherence overlap
// =============================================================================

struct OverlapDetail {
    long long max_int = 0;
    double max_jac = 0.0;
};

struct CoherenceOverlapReport {
    double max_int_mean = 0.0;
    double max_jac_mean = 0.0;
    std::vector<OverlapDetail> per_candidate;
};

/// Per candidate: maximum atom intersection and maximum Jaccard similarity
/// against any corpus set (the maximizers may differ).
CoherenceOverlapReport coherence_overlap(const std::vector<std::vector<int>>& candidates,
                                         const std::vector<std::vector<int>>& corpus_sets);

// =============================================================================
// Novelty
// =============================================================================

/// Per candidate: 1 - max cosine similarity to any corpus embedding.
/// Inputs are provider-normalized, so cosine is the dot product.
std::vector<double> novelty(const std::vector<EmbeddingVector>& candidate_embeddings,
                            const std::vector<EmbeddingVector>& corpus_embeddings);

// =============================================================================
// Mann-Whitney U
// =============================================================================

struct MannWhitneyResult {
    double u = 0.0; // U statistic of the first sample
    double p = 0.0; // two-sided
    double r = 0.0; // rank-biserial magnitude |1 - 2U/(n1 n2)|
    std::size_t n1 = 0;
    std::size_t n2 = 0;
    std::size_t tie_groups = 0; // pooled value groups with >= 2 members
    bool exact = false;         // exact permutation distribution used
};

/// Midranks for ties; exact permutation p when n1*n2 <= 400, otherwise
/// normal approximation with tie and continuity corrections.
MannWhitneyResult mann_whitney(const std::vector<double>& sample_a,
                               const std::vector<double>& sample_b);

/// Effect size |1 - 2U/(n1 n2)| from a U statistic.
double rank_biserial(double u, std::size_t n1, std::size_t n2);

// =============================================================================
// Provider-backed harnesses
// =============================================================================

enum class Representation { units, atoms, atoms_plus_noise };

struct ReconstructionReport {
    std::array<long long, 5> histogram{}; // ratings 1..5
    double mean_rating = 0.0;
    std::size_t rated_papers = 0;
    std::size_t failures = 0; // per-paper provider failures, not fatal
};

struct ReconstructionInputs {
    const corpus::Corpus* corpus = nullptr;
    const std::vector<corpus::ConceptualUnit>* units = nullptr;
    const atoms::AtomVocabulary* vocabulary = nullptr;
    const std::vector<atoms::PaperAtomSeq>* paper_seqs = nullptr;
};

/// Reconstruct each paper from the chosen representation, judge against its
/// blog, and histogram the 1..5 ratings.
ReconstructionReport reconstruction_eval(const ReconstructionInputs& inputs,
                                         Representation representation,
                                         providers::ProviderClient& provider);

/// For each atom combo: m reconstructions, embed them, mean pairwise cosine
/// similarity. m >= 2.
std::vector<double> stability_eval(const std::vector<std::vector<std::string>>& combos,
                                   providers::ProviderClient& provider, int m = 5);

// =============================================================================
// Report emission
// =============================================================================

struct MethodEval {
    std::string name;
    std::vector<std::vector<int>> selections;
    DiversityReport diversity;
    CoherenceOverlapReport overlap;
    std::vector<double> novelty_distances;
    std::vector<EmbeddingVector> embeddings; // for the projection CSV
};

struct Comparison {
    std::string metric;
    std::string method_a;
    std::string method_b;
    MannWhitneyResult mw;
};

struct EvaluationReport {
    int vocab_size = 0;
    uint64_t seed = 0;
    std::vector<MethodEval> methods;
    std::vector<Comparison> comparisons;
};

/// Writes diversity.csv, coherence.csv, novelty.csv, summary.json and
/// embeddings.csv into `dir`.
void emit_report(const EvaluationReport& report, const std::filesystem::path& dir);

} // namespace ideaforge::eval
