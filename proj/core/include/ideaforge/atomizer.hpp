#pragma once

#include "ideaforge/clustering.hpp"
#include "ideaforge/common.hpp"
#include "ideaforge/corpus.hpp"
#include "ideaforge/embedding.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace ideaforge::atoms {

// =============================================================================
// Atom vocabulary: each non-noise cluster of conceptual units becomes one
// discrete token with a canonical description.
// =============================================================================

struct Atom {
    int id = 0; // dense token id, 0..V-1
    std::string canonical_text;
    std::vector<std::string> member_unit_ids;
    EmbeddingVector centroid; // normalized mean of member embeddings
};

class AtomVocabulary {
public:
    AtomVocabulary() = default;
    AtomVocabulary(std::vector<Atom> atoms, std::vector<std::string> noise_unit_ids);

    int size() const { return static_cast<int>(atoms_.size()); }
    int bos() const { return size(); }
    int eos() const { return size() + 1; }

    const std::vector<Atom>& atoms() const { return atoms_; }
    const Atom& atom(int id) const;
    const std::vector<std::string>& noise_unit_ids() const { return noise_unit_ids_; }

    /// Atom id owning a unit, or nullopt for noise/unknown units.
    std::optional<int> atom_for_unit(const std::string& unit_id) const;

    /// (id, canonical text) pairs, handy for prompting.
    std::vector<std::pair<int, std::string>> id_text_pairs() const;

private:
    std::vector<Atom> atoms_;
    std::vector<std::string> noise_unit_ids_;
    std::unordered_map<std::string, int> unit_to_atom_;
};

/// Produces the canonical description for a cluster's member texts
/// (providers::ProviderClient::canonicalize_atom in production).
using Canonicalizer = std::function<std::string(const std::vector<std::string>&)>;

/// Cluster unit embeddings and build the vocabulary. Label -1 points become
/// noise units; cluster k becomes atom k.
AtomVocabulary build_vocabulary(const std::vector<corpus::ConceptualUnit>& units,
                                const std::vector<EmbeddingVector>& embeddings,
                                const clustering::ClusterParams& params,
                                const Canonicalizer& canonicalize);

/// Same, from precomputed cluster labels (the pipeline's cluster stage).
AtomVocabulary build_vocabulary_from_labels(const std::vector<corpus::ConceptualUnit>& units,
                                            const std::vector<EmbeddingVector>& embeddings,
                                            const clustering::ClusterLabels& labels,
                                            const Canonicalizer& canonicalize);

// =============================================================================
// Linearized sequences
// =============================================================================

struct PaperAtomSeq {
    std::string paper_id;
    std::vector<int> atom_ids; // ordered by earliest member-unit ordinal
};

struct ResearcherAtomSeq {
    std::string researcher_id;
    std::vector<int> atom_ids;
};

/// Researcher sequences keep at most this many most-recent tokens.
inline constexpr std::size_t kResearcherSeqMaxLen = 64;

/// One sequence per paper (possibly empty when every unit was noise).
/// Within a paper, repeated atoms collapse to their first occurrence.
std::vector<PaperAtomSeq> map_papers(const corpus::Corpus& corpus,
                                     const std::vector<corpus::ConceptualUnit>& units,
                                     const AtomVocabulary& vocabulary);

/// Concatenate each researcher's paper sequences in (year, id) order,
/// truncated to the most recent kResearcherSeqMaxLen tokens. Researchers
/// with no surviving atoms are dropped.
std::vector<ResearcherAtomSeq> build_researcher_sequences(
    const std::vector<corpus::ResearcherProfile>& profiles,
    const std::vector<PaperAtomSeq>& paper_seqs);

struct VocabStats {
    int atom_count = 0;
    std::size_t unit_count = 0;
    std::size_t noise_unit_count = 0;
    double noise_fraction = 0.0;
    double mean_atoms_per_paper = 0.0;
};

VocabStats vocab_stats(const AtomVocabulary& vocabulary,
                       const std::vector<PaperAtomSeq>& paper_seqs);

// =============================================================================
// Serialization
//
// Vocabulary JSON: {atoms:[{id, text, members:[unit ids]}], noise:[unit ids]}.
// Sequences: JSONL of id + token-id array. Centroids are not part of the wire
// format; rebuild them from the unit embeddings artifact when needed.
// =============================================================================

void save_vocabulary(const AtomVocabulary& vocabulary, const std::filesystem::path& path);
AtomVocabulary load_vocabulary(const std::filesystem::path& path);

/// Recompute atom centroids from unit embeddings (after load_vocabulary).
AtomVocabulary with_centroids(AtomVocabulary vocabulary,
                              const std::vector<corpus::ConceptualUnit>& units,
                              const std::vector<EmbeddingVector>& embeddings);

void save_paper_seqs(const std::vector<PaperAtomSeq>& seqs, const std::filesystem::path& path);
std::vector<PaperAtomSeq> load_paper_seqs(const std::filesystem::path& path);

void save_researcher_seqs(const std::vector<ResearcherAtomSeq>& seqs,
                          const std::filesystem::path& path);
std::vector<ResearcherAtomSeq> load_researcher_seqs(const std::filesystem::path& path);

} // namespace ideaforge::atoms
