#include "ideaforge/atomizer.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace ideaforge::atoms {

using nlohmann::json;

AtomVocabulary::AtomVocabulary(std::vector<Atom> atoms, std::vector<std::string> noise_unit_ids)
    : atoms_(std::move(atoms)), noise_unit_ids_(std::move(noise_unit_ids)) {
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
        if (atoms_[i].id != static_cast<int>(i))
            throw ValidationError("vocabulary: atom ids must be dense 0..V-1");
        for (const auto& uid : atoms_[i].member_unit_ids) {
            if (!unit_to_atom_.emplace(uid, atoms_[i].id).second)
                throw ValidationError("vocabulary: unit '" + uid + "' in more than one atom");
        }
    }
    for (const auto& uid : noise_unit_ids_) {
        if (unit_to_atom_.count(uid))
            throw ValidationError("vocabulary: noise unit '" + uid + "' also in an atom");
    }
}

const Atom& AtomVocabulary::atom(int id) const {
    if (id < 0 || id >= size()) throw ValidationError("unknown atom id " + std::to_string(id));
    return atoms_[static_cast<std::size_t>(id)];
}

std::optional<int> AtomVocabulary::atom_for_unit(const std::string& unit_id) const {
    auto it = unit_to_atom_.find(unit_id);
    if (it == unit_to_atom_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::pair<int, std::string>> AtomVocabulary::id_text_pairs() const {
    std::vector<std::pair<int, std::string>> out;
    out.reserve(atoms_.size());
    for (const auto& a : atoms_) out.emplace_back(a.id, a.canonical_text);
    return out;
}

AtomVocabulary build_vocabulary(const std::vector<corpus::ConceptualUnit>& units,
                                const std::vector<EmbeddingVector>& embeddings,
                                const clustering::ClusterParams& params,
                                const Canonicalizer& canonicalize) {
    if (units.size() != embeddings.size())
        throw ValidationError("build_vocabulary: unit/embedding count mismatch");
    if (units.empty()) return AtomVocabulary({}, {});

    clustering::ClusterLabels labels;
    if (static_cast<int>(units.size()) < params.min_cluster_size) {
        // Too few units to form any cluster; everything is noise.
        labels.labels.assign(units.size(), -1);
        labels.cluster_count = 0;
    } else {
        labels = clustering::hdbscan(embeddings, params);
    }
    return build_vocabulary_from_labels(units, embeddings, labels, canonicalize);
}

AtomVocabulary build_vocabulary_from_labels(const std::vector<corpus::ConceptualUnit>& units,
                                            const std::vector<EmbeddingVector>& embeddings,
                                            const clustering::ClusterLabels& labels,
                                            const Canonicalizer& canonicalize) {
    if (units.size() != embeddings.size())
        throw ValidationError("build_vocabulary: unit/embedding count mismatch");
    if (labels.labels.size() != units.size())
        throw ValidationError("build_vocabulary: label/unit count mismatch");

    std::vector<Atom> atom_list(static_cast<std::size_t>(labels.cluster_count));
    std::vector<std::vector<EmbeddingVector>> member_embs(
        static_cast<std::size_t>(labels.cluster_count));
    std::vector<std::vector<std::string>> member_texts(
        static_cast<std::size_t>(labels.cluster_count));
    std::vector<std::string> noise_ids;

    for (std::size_t i = 0; i < units.size(); ++i) {
        const int label = labels.labels[i];
        if (label < 0) {
            noise_ids.push_back(units[i].id);
            continue;
        }
        auto& atom = atom_list[static_cast<std::size_t>(label)];
        atom.id = label;
        atom.member_unit_ids.push_back(units[i].id);
        member_embs[static_cast<std::size_t>(label)].push_back(embeddings[i]);
        member_texts[static_cast<std::size_t>(label)].push_back(units[i].text);
    }

    for (int k = 0; k < labels.cluster_count; ++k) {
        auto& atom = atom_list[static_cast<std::size_t>(k)];
        atom.centroid = normalized_mean(member_embs[static_cast<std::size_t>(k)]);
        atom.canonical_text = canonicalize(member_texts[static_cast<std::size_t>(k)]);
        if (trim(atom.canonical_text).empty())
            throw ValidationError("build_vocabulary: empty canonical text for atom " +
                                  std::to_string(k));
    }
    return AtomVocabulary(std::move(atom_list), std::move(noise_ids));
}

std::vector<PaperAtomSeq> map_papers(const corpus::Corpus& corpus,
                                     const std::vector<corpus::ConceptualUnit>& units,
                                     const AtomVocabulary& vocabulary) {
    // Units grouped by paper, walked in ordinal order.
    std::map<std::string, std::vector<const corpus::ConceptualUnit*>> by_paper;
    for (const auto& u : units) {
        if (!corpus.find(u.paper_id))
            throw ValidationError("map_papers: unit '" + u.id + "' references unknown paper '" +
                                  u.paper_id + "'");
        by_paper[u.paper_id].push_back(&u);
    }

    std::vector<PaperAtomSeq> seqs;
    seqs.reserve(corpus.size());
    int all_noise = 0;
    for (const auto& paper : corpus.papers()) {
        PaperAtomSeq seq;
        seq.paper_id = paper.id;
        auto it = by_paper.find(paper.id);
        if (it != by_paper.end()) {
            auto& paper_units = it->second;
            std::sort(paper_units.begin(), paper_units.end(),
                      [](const corpus::ConceptualUnit* a, const corpus::ConceptualUnit* b) {
                          return a->ordinal < b->ordinal;
                      });
            std::set<int> seen;
            for (const auto* u : paper_units) {
                const auto atom_id = vocabulary.atom_for_unit(u->id);
                if (!atom_id) continue; // noise
                if (seen.insert(*atom_id).second) seq.atom_ids.push_back(*atom_id);
            }
        }
        if (seq.atom_ids.empty()) ++all_noise;
        seqs.push_back(std::move(seq));
    }
    if (all_noise > 0) {
        log::warn("map_papers: " + std::to_string(all_noise) +
                  " paper(s) have no clustered units and are excluded from training");
    }
    return seqs;
}

std::vector<ResearcherAtomSeq> build_researcher_sequences(
    const std::vector<corpus::ResearcherProfile>& profiles,
    const std::vector<PaperAtomSeq>& paper_seqs) {
    std::unordered_map<std::string, const PaperAtomSeq*> by_id;
    for (const auto& s : paper_seqs) by_id[s.paper_id] = &s;

    std::vector<ResearcherAtomSeq> out;
    for (const auto& profile : profiles) {
        ResearcherAtomSeq seq;
        seq.researcher_id = profile.id;
        for (const auto& pid : profile.paper_ids) {
            auto it = by_id.find(pid);
            if (it == by_id.end())
                throw ValidationError("build_researcher_sequences: profile '" + profile.id +
                                      "' references paper '" + pid + "' with no atom sequence");
            const auto& ids = it->second->atom_ids;
            seq.atom_ids.insert(seq.atom_ids.end(), ids.begin(), ids.end());
        }
        if (seq.atom_ids.empty()) continue; // no surviving atoms
        if (seq.atom_ids.size() > kResearcherSeqMaxLen) {
            // Keep the most recent tokens.
            seq.atom_ids.erase(seq.atom_ids.begin(),
                               seq.atom_ids.end() - static_cast<long>(kResearcherSeqMaxLen));
        }
        out.push_back(std::move(seq));
    }
    return out;
}

VocabStats vocab_stats(const AtomVocabulary& vocabulary,
                       const std::vector<PaperAtomSeq>& paper_seqs) {
    VocabStats stats;
    stats.atom_count = vocabulary.size();
    stats.noise_unit_count = vocabulary.noise_unit_ids().size();
    std::size_t clustered = 0;
    for (const auto& a : vocabulary.atoms()) clustered += a.member_unit_ids.size();
    stats.unit_count = clustered + stats.noise_unit_count;
    stats.noise_fraction =
        stats.unit_count == 0
            ? 0.0
            : static_cast<double>(stats.noise_unit_count) / static_cast<double>(stats.unit_count);
    std::size_t total_atoms = 0;
    for (const auto& s : paper_seqs) total_atoms += s.atom_ids.size();
    stats.mean_atoms_per_paper =
        paper_seqs.empty()
            ? 0.0
            : static_cast<double>(total_atoms) / static_cast<double>(paper_seqs.size());
    return stats;
}

// =============================================================================
// Serialization
// =============================================================================

void save_vocabulary(const AtomVocabulary& vocabulary, const std::filesystem::path& path) {
    json j;
    j["atoms"] = json::array();
    for (const auto& a : vocabulary.atoms()) {
        j["atoms"].push_back(
            {{"id", a.id}, {"text", a.canonical_text}, {"members", a.member_unit_ids}});
    }
    j["noise"] = vocabulary.noise_unit_ids();
    write_text_file_atomic(path, j.dump(2) + "\n");
}

AtomVocabulary load_vocabulary(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw ParseError("vocabulary " + path.string() + ": " + e.what());
    }
    std::vector<Atom> atoms;
    try {
        for (const auto& item : j.at("atoms")) {
            Atom a;
            a.id = item.at("id").get<int>();
            a.canonical_text = item.at("text").get<std::string>();
            a.member_unit_ids = item.at("members").get<std::vector<std::string>>();
            atoms.push_back(std::move(a));
        }
        std::sort(atoms.begin(), atoms.end(),
                  [](const Atom& x, const Atom& y) { return x.id < y.id; });
        return AtomVocabulary(std::move(atoms), j.at("noise").get<std::vector<std::string>>());
    } catch (const json::exception& e) {
        throw ParseError("vocabulary " + path.string() + ": " + e.what());
    }
}

AtomVocabulary with_centroids(AtomVocabulary vocabulary,
                              const std::vector<corpus::ConceptualUnit>& units,
                              const std::vector<EmbeddingVector>& embeddings) {
    if (units.size() != embeddings.size())
        throw ValidationError("with_centroids: unit/embedding count mismatch");
    std::unordered_map<std::string, const EmbeddingVector*> by_unit;
    for (std::size_t i = 0; i < units.size(); ++i) by_unit[units[i].id] = &embeddings[i];

    std::vector<Atom> atoms = vocabulary.atoms();
    for (auto& a : atoms) {
        std::vector<EmbeddingVector> member_embs;
        member_embs.reserve(a.member_unit_ids.size());
        for (const auto& uid : a.member_unit_ids) {
            auto it = by_unit.find(uid);
            if (it == by_unit.end())
                throw ValidationError("with_centroids: no embedding for unit '" + uid + "'");
            member_embs.push_back(*it->second);
        }
        a.centroid = normalized_mean(member_embs);
    }
    return AtomVocabulary(std::move(atoms), vocabulary.noise_unit_ids());
}

namespace {

template <typename Seq>
void save_seqs(const std::vector<Seq>& seqs, const std::filesystem::path& path,
               const char* id_key) {
    std::ostringstream out;
    for (const auto& s : seqs) {
        json j;
        if constexpr (std::is_same_v<Seq, PaperAtomSeq>) {
            j[id_key] = s.paper_id;
        } else {
            j[id_key] = s.researcher_id;
        }
        j["atoms"] = s.atom_ids;
        out << j.dump() << "\n";
    }
    write_text_file_atomic(path, out.str());
}

} // namespace

void save_paper_seqs(const std::vector<PaperAtomSeq>& seqs, const std::filesystem::path& path) {
    save_seqs(seqs, path, "paper_id");
}

std::vector<PaperAtomSeq> load_paper_seqs(const std::filesystem::path& path) {
    std::vector<PaperAtomSeq> out;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        try {
            json j = json::parse(line);
            PaperAtomSeq s;
            s.paper_id = j.at("paper_id").get<std::string>();
            s.atom_ids = j.at("atoms").get<std::vector<int>>();
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
    });
    return out;
}

void save_researcher_seqs(const std::vector<ResearcherAtomSeq>& seqs,
                          const std::filesystem::path& path) {
    save_seqs(seqs, path, "researcher_id");
}

std::vector<ResearcherAtomSeq> load_researcher_seqs(const std::filesystem::path& path) {
    std::vector<ResearcherAtomSeq> out;
    for_each_jsonl_line(path, [&](std::size_t lineno, const std::string& line) {
        try {
            json j = json::parse(line);
            ResearcherAtomSeq s;
            s.researcher_id = j.at("researcher_id").get<std::string>();
            s.atom_ids = j.at("atoms").get<std::vector<int>>();
            out.push_back(std::move(s));
        } catch (const json::exception& e) {
            throw ParseError(path.filename().string() + ":" + std::to_string(lineno) + ": " +
                             e.what());
        }
    });
    return out;
}

} // namespace ideaforge::atoms
