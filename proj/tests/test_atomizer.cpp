#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ideaforge/atomizer.hpp"
#include "support/testutil.hpp"

#include <algorithm>
#include <set>

using namespace ideaforge;
using namespace ideaforge::atoms;
using corpus::ConceptualUnit;

namespace {

std::string first_member(const std::vector<std::string>& members) { return members.front(); }

ConceptualUnit unit(std::string id, std::string paper, int ordinal, std::string text = "") {
    ConceptualUnit u;
    u.id = std::move(id);
    u.paper_id = std::move(paper);
    u.ordinal = ordinal;
    u.text = text.empty() ? "text of " + u.id : std::move(text);
    return u;
}

/// Three tight planted clusters of 6 units each plus two far outliers.
struct PlantedFixture {
    std::vector<ConceptualUnit> units;
    std::vector<EmbeddingVector> embeddings;
    std::vector<int> truth; // planted cluster per unit, -1 outlier
};

PlantedFixture planted_fixture() {
    PlantedFixture fx;
    Rng rng(1312);
    int id = 0;
    for (int cluster = 0; cluster < 3; ++cluster) {
        const auto blob = testutil::gaussian_blob(
            testutil::axis_center(6, static_cast<std::size_t>(cluster), 25.0), 0.2, 6, rng);
        for (const auto& point : blob) {
            fx.units.push_back(unit("u" + std::to_string(id), "p0", id));
            fx.embeddings.push_back(point);
            fx.truth.push_back(cluster);
            ++id;
        }
    }
    for (int outlier = 0; outlier < 2; ++outlier) {
        fx.units.push_back(unit("u" + std::to_string(id), "p0", id));
        std::vector<double> v(6, -40.0 - 30.0 * outlier);
        v[4 + static_cast<std::size_t>(outlier)] = 60.0;
        fx.embeddings.emplace_back(std::move(v));
        fx.truth.push_back(-1);
        ++id;
    }
    return fx;
}

} // namespace

TEST_CASE("build_vocabulary recovers planted clusters and noise") {
    const auto fx = planted_fixture();
    const auto vocab = build_vocabulary(fx.units, fx.embeddings, clustering::ClusterParams{},
                                        first_member);
    CHECK(vocab.size() == 3);
    CHECK(vocab.noise_unit_ids().size() == 2);
    CHECK(vocab.noise_unit_ids() == std::vector<std::string>{"u18", "u19"});

    // Partition: every unit in exactly one atom or in noise.
    std::set<std::string> seen;
    for (const auto& a : vocab.atoms()) {
        CHECK(a.member_unit_ids.size() == 6);
        for (const auto& uid : a.member_unit_ids) CHECK(seen.insert(uid).second);
        CHECK(std::abs(norm(a.centroid) - 1.0) <= 1e-9);
    }
    for (const auto& uid : vocab.noise_unit_ids()) CHECK(seen.insert(uid).second);
    CHECK(seen.size() == fx.units.size());

    // Token ids dense, members map back.
    for (int i = 0; i < vocab.size(); ++i) CHECK(vocab.atom(i).id == i);
    CHECK(vocab.atom_for_unit("u0").has_value());
    CHECK_FALSE(vocab.atom_for_unit("u18").has_value());
    CHECK_FALSE(vocab.atom_for_unit("nope").has_value());
}

TEST_CASE("all units mutually distant yield an empty vocabulary") {
    std::vector<ConceptualUnit> units;
    std::vector<EmbeddingVector> embeddings;
    for (int i = 0; i < 8; ++i) {
        units.push_back(unit("u" + std::to_string(i), "p0", i));
        std::vector<double> v(3, 0.0);
        v[0] = std::pow(2.0, i);
        v[1] = i * i;
        embeddings.emplace_back(std::move(v));
    }
    clustering::ClusterParams params;
    params.min_cluster_size = 3;
    params.min_samples = 1;
    const auto vocab = build_vocabulary(units, embeddings, params, first_member);
    CHECK(vocab.size() == 0);
    CHECK(vocab.noise_unit_ids().size() == 8);
}

TEST_CASE("duplicate unit texts cluster into one atom") {
    std::vector<ConceptualUnit> units;
    std::vector<EmbeddingVector> embeddings;
    for (int i = 0; i < 5; ++i) {
        units.push_back(unit("u" + std::to_string(i), "p0", i, "identical statement"));
        embeddings.push_back(EmbeddingVector({0.6, 0.8}));
    }
    const auto vocab =
        build_vocabulary(units, embeddings, clustering::ClusterParams{}, first_member);
    CHECK(vocab.size() == 1);
    CHECK(vocab.atom(0).member_unit_ids.size() == 5);
    CHECK(vocab.atom(0).canonical_text == "identical statement");
    CHECK(vocab.noise_unit_ids().empty());
}

namespace {

/// Hand-built vocabulary: atom 0 over {a0, a1}, atom 1 over {b0}, one noise
/// unit n0.
AtomVocabulary hand_vocab() {
    Atom atom_a;
    atom_a.id = 0;
    atom_a.canonical_text = "atom A";
    atom_a.member_unit_ids = {"a0", "a1"};
    atom_a.centroid = EmbeddingVector({1.0, 0.0});
    Atom atom_b;
    atom_b.id = 1;
    atom_b.canonical_text = "atom B";
    atom_b.member_unit_ids = {"b0"};
    atom_b.centroid = EmbeddingVector({0.0, 1.0});
    return AtomVocabulary({atom_a, atom_b}, {"n0"});
}

} // namespace

TEST_CASE("map_papers orders atoms by earliest ordinal, skips noise, dedups") {
    const auto vocab = hand_vocab();

    std::vector<corpus::Paper> papers = {testutil::make_paper("p0", 2021, {"A"}),
                                         testutil::make_paper("p1", 2021, {"B"}),
                                         testutil::make_paper("p2", 2021, {"C"})};
    const auto c = corpus::Corpus::from_papers(papers);

    // p0: a0 -> atom0, n0 -> noise, b1 -> atom1   =>  [0, 1]
    // p1: b0 -> atom1, then atom0 twice (a1, a2)  =>  [1, 0]
    // p2: all noise                               =>  []
    std::vector<ConceptualUnit> units = {
        unit("a0", "p0", 0), unit("n0", "p0", 1), unit("b1", "p0", 2),
        unit("b0", "p1", 0), unit("a1", "p1", 1), unit("a2", "p1", 2),
        unit("n1", "p2", 0),
    };
    Atom atom_a;
    atom_a.id = 0;
    atom_a.canonical_text = "atom A";
    atom_a.member_unit_ids = {"a0", "a1", "a2"};
    Atom atom_b;
    atom_b.id = 1;
    atom_b.canonical_text = "atom B";
    atom_b.member_unit_ids = {"b0", "b1"};
    const AtomVocabulary vocab2({atom_a, atom_b}, {"n0", "n1"});

    const auto seqs = map_papers(c, units, vocab2);
    REQUIRE(seqs.size() == 3);
    CHECK(seqs[0].paper_id == "p0");
    CHECK(seqs[0].atom_ids == std::vector<int>{0, 1});
    CHECK(seqs[1].atom_ids == std::vector<int>{1, 0}); // dedup keeps first occurrence
    CHECK(seqs[2].atom_ids.empty());

    std::vector<ConceptualUnit> bad = {unit("a0", "ghost", 0)};
    CHECK_THROWS_AS(map_papers(c, bad, vocab), ValidationError);
}

TEST_CASE("researcher sequences concatenate in profile order and truncate") {
    std::vector<PaperAtomSeq> seqs = {{"p0", {0, 1}}, {"p1", {2}}, {"p2", {}}};
    corpus::ResearcherProfile r;
    r.id = "r0000";
    r.name_key = "a";
    r.paper_ids = {"p0", "p1"};
    corpus::ResearcherProfile all_noise;
    all_noise.id = "r0001";
    all_noise.name_key = "b";
    all_noise.paper_ids = {"p2"};

    const auto out = build_researcher_sequences({r, all_noise}, seqs);
    REQUIRE(out.size() == 1); // all-noise researcher dropped
    CHECK(out[0].researcher_id == "r0000");
    CHECK(out[0].atom_ids == std::vector<int>{0, 1, 2});

    // 70 tokens, the most recent 64 survive.
    std::vector<PaperAtomSeq> long_seqs;
    corpus::ResearcherProfile prolific;
    prolific.id = "r0002";
    prolific.name_key = "c";
    for (int p = 0; p < 7; ++p) {
        PaperAtomSeq s;
        s.paper_id = "q" + std::to_string(p);
        for (int k = 0; k < 10; ++k) s.atom_ids.push_back(p * 10 + k);
        long_seqs.push_back(s);
        prolific.paper_ids.push_back(s.paper_id);
    }
    const auto truncated = build_researcher_sequences({prolific}, long_seqs);
    REQUIRE(truncated.size() == 1);
    REQUIRE(truncated[0].atom_ids.size() == kResearcherSeqMaxLen);
    CHECK(truncated[0].atom_ids.front() == 6);  // first six tokens dropped
    CHECK(truncated[0].atom_ids.back() == 69);
}

TEST_CASE("vocab_stats reports V, noise fraction and exact mean atoms per paper") {
    const auto fx = planted_fixture();
    const auto vocab = build_vocabulary(fx.units, fx.embeddings, clustering::ClusterParams{},
                                        first_member);
    const std::vector<PaperAtomSeq> seqs = {{"p0", {0, 1}}, {"p1", {2}}, {"p2", {}}};
    const auto stats = vocab_stats(vocab, seqs);
    CHECK(stats.atom_count == 3);
    CHECK(stats.unit_count == 20);
    CHECK(stats.noise_fraction == doctest::Approx(2.0 / 20.0));
    CHECK(stats.mean_atoms_per_paper == doctest::Approx(3.0 / 3.0));

    double total = 0;
    for (const auto& s : seqs) total += static_cast<double>(s.atom_ids.size());
    CHECK(stats.mean_atoms_per_paper == total / static_cast<double>(seqs.size()));

    const auto empty_stats = vocab_stats(AtomVocabulary({}, {}), {});
    CHECK(empty_stats.atom_count == 0);
    CHECK(empty_stats.unit_count == 0);
    CHECK(empty_stats.mean_atoms_per_paper == 0.0);
}

TEST_CASE("vocabulary JSON round-trips with stable token ids") {
    testutil::TempDir dir;
    const auto fx = planted_fixture();
    const auto vocab = build_vocabulary(fx.units, fx.embeddings, clustering::ClusterParams{},
                                        first_member);
    save_vocabulary(vocab, dir / "vocab.json");
    const auto loaded = load_vocabulary(dir / "vocab.json");

    REQUIRE(loaded.size() == vocab.size());
    for (int i = 0; i < vocab.size(); ++i) {
        CHECK(loaded.atom(i).id == vocab.atom(i).id);
        CHECK(loaded.atom(i).canonical_text == vocab.atom(i).canonical_text);
        CHECK(loaded.atom(i).member_unit_ids == vocab.atom(i).member_unit_ids);
    }
    CHECK(loaded.noise_unit_ids() == vocab.noise_unit_ids());
    CHECK(loaded.bos() == vocab.size());
    CHECK(loaded.eos() == vocab.size() + 1);

    // Centroids are rebuilt from the embeddings artifact.
    const auto with = with_centroids(loaded, fx.units, fx.embeddings);
    for (int i = 0; i < vocab.size(); ++i) {
        CHECK(with.atom(i).centroid.values == vocab.atom(i).centroid.values);
    }
}

TEST_CASE("sequence files round-trip") {
    testutil::TempDir dir;
    const std::vector<PaperAtomSeq> paper_seqs = {{"p0", {0, 1, 2}}, {"p1", {}}};
    save_paper_seqs(paper_seqs, dir / "ps.jsonl");
    const auto loaded = load_paper_seqs(dir / "ps.jsonl");
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].paper_id == "p0");
    CHECK(loaded[0].atom_ids == std::vector<int>{0, 1, 2});
    CHECK(loaded[1].atom_ids.empty());

    const std::vector<ResearcherAtomSeq> r_seqs = {{"r0000", {5, 6}}};
    save_researcher_seqs(r_seqs, dir / "rs.jsonl");
    const auto r_loaded = load_researcher_seqs(dir / "rs.jsonl");
    REQUIRE(r_loaded.size() == 1);
    CHECK(r_loaded[0].researcher_id == "r0000");
    CHECK(r_loaded[0].atom_ids == std::vector<int>{5, 6});
}

TEST_CASE("vocabulary construction rejects inconsistent inputs") {
    Atom a;
    a.id = 1; // not dense
    CHECK_THROWS_AS(AtomVocabulary({a}, {}), ValidationError);

    Atom b;
    b.id = 0;
    b.member_unit_ids = {"u0"};
    CHECK_THROWS_AS(AtomVocabulary({b}, {"u0"}), ValidationError); // unit in atom and noise

    Atom c;
    c.id = 0;
    c.member_unit_ids = {"u0", "u0"};
    CHECK_THROWS_AS(AtomVocabulary({c}, {}), ValidationError); // duplicate membership
}
