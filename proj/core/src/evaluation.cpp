#include "ideaforge/evaluation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>

namespace ideaforge::eval {

using nlohmann::json;

// =============================================================================
// Diversity
// =============================================================================

SelectionCounts SelectionCounts::from_selections(const std::vector<std::vector<int>>& selections,
                                                 int vocab_size) {
    SelectionCounts sc;
    sc.vocab_size = vocab_size;
    for (const auto& sel : selections) {
        for (int id : sel) {
            if (id < 0 || id >= vocab_size)
                throw ValidationError("selection names atom id " + std::to_string(id) +
                                      " outside vocabulary of " + std::to_string(vocab_size));
            ++sc.counts[id];
            ++sc.total_selections;
        }
    }
    return sc;
}

double gini(const std::vector<double>& counts) {
    const std::size_t n = counts.size();
    if (n == 0) return 0.0;
    std::vector<double> sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    double weighted = 0.0; // sum of (1-based rank) * value
    for (std::size_t i = 0; i < n; ++i) {
        sum += sorted[i];
        weighted += static_cast<double>(i + 1) * sorted[i];
    }
    if (sum <= 0.0) return 0.0;
    // Equivalent to sum_ij |x_i - x_j| / (2 n^2 mean).
    return (2.0 * weighted - (static_cast<double>(n) + 1.0) * sum) /
           (static_cast<double>(n) * sum);
}

DiversityReport diversity(const std::vector<std::vector<int>>& selections, int vocab_size) {
    if (selections.empty()) throw ValidationError("diversity: no selections");
    if (vocab_size <= 0) throw ValidationError("diversity: vocab_size must be positive");
    const SelectionCounts sc = SelectionCounts::from_selections(selections, vocab_size);

    DiversityReport report;
    report.total_selections = sc.total_selections;
    report.unique_atoms = static_cast<long long>(sc.counts.size());
    report.coverage =
        static_cast<double>(report.unique_atoms) / static_cast<double>(vocab_size);

    std::vector<double> positive;
    positive.reserve(sc.counts.size());
    for (const auto& [_, c] : sc.counts) positive.push_back(static_cast<double>(c));
    report.gini = gini(positive);
    report.mean_repetition =
        report.unique_atoms == 0
            ? 0.0
            : static_cast<double>(sc.total_selections) / static_cast<double>(report.unique_atoms);

    // Top-10 atoms by count, ties to the lower atom id (map iteration is
    // already id-ascending).
    std::vector<std::pair<int, long long>> by_count(sc.counts.begin(), sc.counts.end());
    std::stable_sort(by_count.begin(), by_count.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    long long top = 0;
    for (std::size_t i = 0; i < by_count.size() && i < 10; ++i) top += by_count[i].second;
    report.top10_share = sc.total_selections == 0
                             ? 0.0
                             : static_cast<double>(top) / static_cast<double>(sc.total_selections);
    return report;
}

// =============================================================================
// Coherence overlap
// =============================================================================

CoherenceOverlapReport coherence_overlap(const std::vector<std::vector<int>>& candidates,
                                         const std::vector<std::vector<int>>& corpus_sets) {
    if (corpus_sets.empty()) throw ValidationError("coherence_overlap: empty corpus");
    std::vector<std::set<int>> corpus;
    corpus.reserve(corpus_sets.size());
    for (const auto& s : corpus_sets) corpus.emplace_back(s.begin(), s.end());

    CoherenceOverlapReport report;
    report.per_candidate.reserve(candidates.size());
    double int_sum = 0.0;
    double jac_sum = 0.0;
    for (const auto& cand_list : candidates) {
        if (cand_list.empty()) throw ValidationError("coherence_overlap: empty candidate");
        const std::set<int> cand(cand_list.begin(), cand_list.end());
        OverlapDetail detail;
        for (const auto& paper : corpus) {
            long long inter = 0;
            for (int id : cand) inter += paper.count(id);
            const std::size_t uni = cand.size() + paper.size() - static_cast<std::size_t>(inter);
            const double jac =
                uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
            detail.max_int = std::max(detail.max_int, inter);
            detail.max_jac = std::max(detail.max_jac, jac);
        }
        int_sum += static_cast<double>(detail.max_int);
        jac_sum += detail.max_jac;
        report.per_candidate.push_back(detail);
    }
    if (!candidates.empty()) {
        report.max_int_mean = int_sum / static_cast<double>(candidates.size());
        report.max_jac_mean = jac_sum / static_cast<double>(candidates.size());
    }
    return report;
}

// =============================================================================
// Novelty
// =============================================================================

std::vector<double> novelty(const std::vector<EmbeddingVector>& candidate_embeddings,
                            const std::vector<EmbeddingVector>& corpus_embeddings) {
    if (corpus_embeddings.empty()) throw ValidationError("novelty: empty corpus embeddings");
    const std::size_t d = corpus_embeddings.front().dim();
    for (const auto& v : corpus_embeddings) {
        if (v.dim() != d) throw ValidationError("novelty: corpus dimension mismatch");
    }
    std::vector<double> out;
    out.reserve(candidate_embeddings.size());
    for (const auto& cand : candidate_embeddings) {
        if (cand.dim() != d) throw ValidationError("novelty: candidate dimension mismatch");
        double best = -1.0;
        for (const auto& ref : corpus_embeddings) best = std::max(best, dot(cand, ref));
        out.push_back(1.0 - best);
    }
    return out;
}

// =============================================================================
// Mann-Whitney U
// =============================================================================

namespace {

double normal_sf(double z) {
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

/// Exact permutation distribution of the smaller group's rank sum via
/// subset-sum DP over doubled midranks (integers even under ties).
/// Returns P(rank-sum-statistic U_small <= u) and P(U_small >= u).
std::pair<double, double> exact_tail_probs(const std::vector<long long>& doubled_ranks,
                                           std::size_t m, long long u_small_doubled) {
    const std::size_t n_total = doubled_ranks.size();
    long long max_sum = 0;
    for (long long r : doubled_ranks) max_sum += r;

    // dp[k][s] = number of k-subsets of the pooled doubled ranks with sum s.
    std::vector<std::vector<double>> dp(m + 1,
                                        std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    dp[0][0] = 1.0;
    for (std::size_t i = 0; i < n_total; ++i) {
        const long long r = doubled_ranks[i];
        for (std::size_t k = std::min(m, i + 1); k >= 1; --k) {
            for (long long s = max_sum; s >= r; --s) {
                const double ways = dp[k - 1][static_cast<std::size_t>(s - r)];
                if (ways != 0.0) dp[k][static_cast<std::size_t>(s)] += ways;
            }
        }
    }

    const long long min_rank_sum_doubled = static_cast<long long>(m * (m + 1)); // 2 * m(m+1)/2
    double total = 0.0, low = 0.0, high = 0.0;
    for (long long s = 0; s <= max_sum; ++s) {
        const double ways = dp[m][static_cast<std::size_t>(s)];
        if (ways == 0.0) continue;
        total += ways;
        const long long u2 = s - min_rank_sum_doubled; // doubled U for this rank sum
        if (u2 <= u_small_doubled) low += ways;
        if (u2 >= u_small_doubled) high += ways;
    }
    return {low / total, high / total};
}

} // namespace

double rank_biserial(double u, std::size_t n1, std::size_t n2) {
    if (n1 == 0 || n2 == 0) throw ValidationError("rank_biserial: empty sample size");
    return std::abs(1.0 - 2.0 * u / (static_cast<double>(n1) * static_cast<double>(n2)));
}

MannWhitneyResult mann_whitney(const std::vector<double>& sample_a,
                               const std::vector<double>& sample_b) {
    if (sample_a.empty() || sample_b.empty())
        throw ValidationError("mann_whitney: both samples need at least one element");

    const std::size_t n1 = sample_a.size();
    const std::size_t n2 = sample_b.size();
    const std::size_t n_total = n1 + n2;

    struct Entry {
        double value;
        int group;
    };
    std::vector<Entry> pooled;
    pooled.reserve(n_total);
    for (double v : sample_a) pooled.push_back({v, 0});
    for (double v : sample_b) pooled.push_back({v, 1});
    std::sort(pooled.begin(), pooled.end(),
              [](const Entry& x, const Entry& y) { return x.value < y.value; });

    // Midranks, doubled so ties stay integral.
    std::vector<long long> doubled_rank(n_total, 0);
    std::size_t tie_groups = 0;
    double tie_correction = 0.0; // sum of t^3 - t
    std::size_t i = 0;
    while (i < n_total) {
        std::size_t j = i;
        while (j < n_total && pooled[j].value == pooled[i].value) ++j;
        const std::size_t t = j - i;
        // ranks i+1 .. j (1-based); doubled midrank = (i+1 + j)
        const long long dr = static_cast<long long>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) doubled_rank[k] = dr;
        if (t >= 2) {
            ++tie_groups;
            tie_correction += static_cast<double>(t) * t * t - static_cast<double>(t);
        }
        i = j;
    }

    long long r1_doubled = 0;
    for (std::size_t k = 0; k < n_total; ++k) {
        if (pooled[k].group == 0) r1_doubled += doubled_rank[k];
    }
    const double u1 = static_cast<double>(r1_doubled) / 2.0 -
                      static_cast<double>(n1) * (static_cast<double>(n1) + 1.0) / 2.0;

    MannWhitneyResult result;
    result.n1 = n1;
    result.n2 = n2;
    result.tie_groups = tie_groups;
    result.u = u1;
    const double prod = static_cast<double>(n1) * static_cast<double>(n2);
    result.r = rank_biserial(u1, n1, n2);

    if (prod <= 400.0) {
        result.exact = true;
        // DP over the smaller group; tail probabilities of U are what the
        // two-sided p needs and they are symmetric under group swap.
        const bool a_small = n1 <= n2;
        const std::size_t m = a_small ? n1 : n2;
        long long r_small_doubled = 0;
        for (std::size_t k = 0; k < n_total; ++k) {
            if ((pooled[k].group == 0) == a_small) r_small_doubled += doubled_rank[k];
        }
        const long long u_small_doubled =
            r_small_doubled - static_cast<long long>(m * (m + 1));
        std::vector<long long> ranks(doubled_rank.begin(), doubled_rank.end());
        auto [p_low, p_high] = exact_tail_probs(ranks, m, u_small_doubled);
        result.p = std::min(1.0, 2.0 * std::min(p_low, p_high));
    } else {
        result.exact = false;
        const double n_tot = static_cast<double>(n_total);
        const double mean = prod / 2.0;
        double var = prod / 12.0 *
                     ((n_tot + 1.0) - tie_correction / (n_tot * (n_tot - 1.0)));
        if (var <= 0.0) {
            result.p = 1.0;
        } else {
            double diff = u1 - mean;
            // Continuity correction toward the mean.
            if (diff > 0.5) {
                diff -= 0.5;
            } else if (diff < -0.5) {
                diff += 0.5;
            } else {
                diff = 0.0;
            }
            const double z = diff / std::sqrt(var);
            result.p = std::min(1.0, 2.0 * normal_sf(std::abs(z)));
        }
    }
    return result;
}

// =============================================================================
// Provider-backed harnesses
// =============================================================================

ReconstructionReport reconstruction_eval(const ReconstructionInputs& inputs,
                                         Representation representation,
                                         providers::ProviderClient& provider) {
    if (!inputs.corpus || !inputs.units || !inputs.vocabulary || !inputs.paper_seqs)
        throw ValidationError("reconstruction_eval: missing inputs");

    std::map<std::string, std::vector<const corpus::ConceptualUnit*>> units_by_paper;
    for (const auto& u : *inputs.units) units_by_paper[u.paper_id].push_back(&u);
    for (auto& [_, list] : units_by_paper) {
        std::sort(list.begin(), list.end(),
                  [](const corpus::ConceptualUnit* a, const corpus::ConceptualUnit* b) {
                      return a->ordinal < b->ordinal;
                  });
    }
    std::map<std::string, const atoms::PaperAtomSeq*> seq_by_paper;
    for (const auto& s : *inputs.paper_seqs) seq_by_paper[s.paper_id] = &s;

    ReconstructionReport report;
    double rating_sum = 0.0;
    for (const auto& paper : inputs.corpus->papers()) {
        if (!paper.blog) continue;
        std::vector<std::string> texts;
        const auto unit_it = units_by_paper.find(paper.id);
        const auto seq_it = seq_by_paper.find(paper.id);

        if (representation == Representation::units) {
            if (unit_it != units_by_paper.end()) {
                for (const auto* u : unit_it->second) texts.push_back(u->text);
            }
        } else {
            if (seq_it != seq_by_paper.end()) {
                for (int atom_id : seq_it->second->atom_ids) {
                    texts.push_back(inputs.vocabulary->atom(atom_id).canonical_text);
                }
            }
            if (representation == Representation::atoms_plus_noise &&
                unit_it != units_by_paper.end()) {
                for (const auto* u : unit_it->second) {
                    if (!inputs.vocabulary->atom_for_unit(u->id)) texts.push_back(u->text);
                }
            }
        }
        if (texts.empty()) {
            ++report.failures;
            continue;
        }
        try {
            const std::string reconstruction = provider.reconstruct_idea(texts);
            const providers::JudgeRating rating =
                provider.judge_reconstruction(*paper.blog, reconstruction);
            ++report.histogram[static_cast<std::size_t>(rating.score - 1)];
            rating_sum += rating.score;
            ++report.rated_papers;
        } catch (const Error& e) {
            ++report.failures;
            log::warn("reconstruction_eval: paper '" + paper.id + "': " + e.what());
        }
    }
    if (report.rated_papers == 0)
        throw ValidationError("reconstruction_eval: no paper produced a rating");
    report.mean_rating = rating_sum / static_cast<double>(report.rated_papers);
    return report;
}

std::vector<double> stability_eval(const std::vector<std::vector<std::string>>& combos,
                                   providers::ProviderClient& provider, int m) {
    if (m < 2) throw ValidationError("stability_eval: m must be >= 2");
    std::vector<double> out;
    out.reserve(combos.size());
    for (const auto& combo : combos) {
        std::vector<std::string> reconstructions;
        reconstructions.reserve(static_cast<std::size_t>(m));
        for (int k = 0; k < m; ++k) {
            reconstructions.push_back(provider.reconstruct_idea(combo));
        }
        const auto embeddings = provider.embed_texts(reconstructions);
        double sum = 0.0;
        int pairs = 0;
        for (std::size_t a = 0; a < embeddings.size(); ++a) {
            for (std::size_t b = a + 1; b < embeddings.size(); ++b) {
                sum += dot(embeddings[a], embeddings[b]);
                ++pairs;
            }
        }
        out.push_back(sum / pairs);
    }
    return out;
}

// =============================================================================
// Report emission
// =============================================================================

namespace {

json mw_to_json(const MannWhitneyResult& mw) {
    return json{{"U", mw.u},   {"p", mw.p},           {"r", mw.r},         {"n1", mw.n1},
                {"n2", mw.n2}, {"ties", mw.tie_groups}, {"exact", mw.exact}};
}

} // namespace

void emit_report(const EvaluationReport& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);

    { // diversity.csv
        std::ostringstream out;
        out << "method,total_selections,unique_atoms,coverage,gini,mean_repetition,top10_share\n";
        for (const auto& m : report.methods) {
            out << m.name << "," << m.diversity.total_selections << ","
                << m.diversity.unique_atoms << "," << format_double(m.diversity.coverage) << ","
                << format_double(m.diversity.gini) << ","
                << format_double(m.diversity.mean_repetition) << ","
                << format_double(m.diversity.top10_share) << "\n";
        }
        write_text_file_atomic(dir / "diversity.csv", out.str());
    }
    { // coherence.csv
        std::ostringstream out;
        out << "method,candidate,max_int,max_jac\n";
        for (const auto& m : report.methods) {
            for (std::size_t i = 0; i < m.overlap.per_candidate.size(); ++i) {
                const auto& d = m.overlap.per_candidate[i];
                out << m.name << "," << i << "," << d.max_int << ","
                    << format_double(d.max_jac) << "\n";
            }
        }
        write_text_file_atomic(dir / "coherence.csv", out.str());
    }
    { // novelty.csv
        std::ostringstream out;
        out << "method,candidate,distance\n";
        for (const auto& m : report.methods) {
            for (std::size_t i = 0; i < m.novelty_distances.size(); ++i) {
                out << m.name << "," << i << "," << format_double(m.novelty_distances[i])
                    << "\n";
            }
        }
        write_text_file_atomic(dir / "novelty.csv", out.str());
    }
    { // embeddings.csv — id + vector, for external projection
        std::ostringstream out;
        std::size_t dim = 0;
        for (const auto& m : report.methods) {
            if (!m.embeddings.empty()) {
                dim = m.embeddings.front().dim();
                break;
            }
        }
        out << "id";
        for (std::size_t d = 0; d < dim; ++d) out << ",v" << d;
        out << "\n";
        for (const auto& m : report.methods) {
            for (std::size_t i = 0; i < m.embeddings.size(); ++i) {
                out << m.name << "-" << i;
                for (double v : m.embeddings[i].values) out << "," << format_double(v);
                out << "\n";
            }
        }
        write_text_file_atomic(dir / "embeddings.csv", out.str());
    }
    { // summary.json
        json j;
        j["schema"] = "ideaforge-report/1";
        j["seed"] = report.seed;
        j["vocab_size"] = report.vocab_size;
        j["methods"] = json::object();
        for (const auto& m : report.methods) {
            double novelty_mean = 0.0;
            for (double d : m.novelty_distances) novelty_mean += d;
            if (!m.novelty_distances.empty())
                novelty_mean /= static_cast<double>(m.novelty_distances.size());
            j["methods"][m.name] = {
                {"candidates", m.selections.size()},
                {"diversity",
                 {{"total_selections", m.diversity.total_selections},
                  {"unique_atoms", m.diversity.unique_atoms},
                  {"coverage", m.diversity.coverage},
                  {"gini", m.diversity.gini},
                  {"mean_repetition", m.diversity.mean_repetition},
                  {"top10_share", m.diversity.top10_share}}},
                {"max_int_mean", m.overlap.max_int_mean},
                {"max_jac_mean", m.overlap.max_jac_mean},
                {"novelty_mean", novelty_mean}};
        }
        j["comparisons"] = json::array();
        for (const auto& c : report.comparisons) {
            j["comparisons"].push_back({{"metric", c.metric},
                                        {"method_a", c.method_a},
                                        {"method_b", c.method_b},
                                        {"mann_whitney", mw_to_json(c.mw)}});
        }
        write_text_file_atomic(dir / "summary.json", j.dump(2) + "\n");
    }
}

} // namespace ideaforge::eval
