#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ideaforge/seqmodel.hpp"
#include "support/testutil.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

using namespace ideaforge;
using namespace ideaforge::lm;

namespace {

LmParams unigram_only() {
    LmParams params;
    params.order = 3;
    params.alpha = 0.1;
    params.weights = {1.0, 0.0, 0.0};
    return params;
}

std::vector<std::vector<int>> random_corpus(int n_seqs, int atom_count, uint64_t seed) {
    Rng rng(seed);
    std::vector<std::vector<int>> seqs(static_cast<std::size_t>(n_seqs));
    for (auto& s : seqs) {
        const std::size_t len = 1 + rng.below(4);
        for (std::size_t k = 0; k < len; ++k) {
            s.push_back(static_cast<int>(rng.below(static_cast<std::size_t>(atom_count))));
        }
    }
    return seqs;
}

/// Naive interpolation oracle: independent n-gram counting over padded
/// sequences, additive smoothing per component, weighted mixture.
struct NaiveLm {
    int atom_count;
    LmParams params;
    std::map<std::vector<int>, std::map<int, int>> tables; // key = ctx tokens

    NaiveLm(const std::vector<std::vector<int>>& seqs, int atoms, LmParams p)
        : atom_count(atoms), params(std::move(p)) {
        const int bos = atom_count;
        const int eos = atom_count + 1;
        for (const auto& seq : seqs) {
            std::vector<int> padded(static_cast<std::size_t>(params.order - 1), bos);
            padded.insert(padded.end(), seq.begin(), seq.end());
            padded.push_back(eos);
            for (std::size_t pos = static_cast<std::size_t>(params.order - 1);
                 pos < padded.size(); ++pos) {
                for (int len = 0; len < params.order; ++len) {
                    if (len == 0 && padded[pos] == eos) continue;
                    std::vector<int> ctx(padded.begin() + static_cast<long>(pos) - len,
                                         padded.begin() + static_cast<long>(pos));
                    ++tables[ctx][padded[pos]];
                }
            }
        }
    }

    double prob(int token, std::vector<int> context) const {
        const int bos = atom_count;
        const double v = atom_count + 2;
        while (static_cast<int>(context.size()) < params.order - 1)
            context.insert(context.begin(), bos);
        if (static_cast<int>(context.size()) > params.order - 1) {
            context.erase(context.begin(),
                          context.end() - (params.order - 1));
        }
        double p = 0;
        for (int len = 0; len < params.order; ++len) {
            const double w = params.weights[static_cast<std::size_t>(len)];
            if (w == 0) continue;
            const std::vector<int> ctx(context.end() - len, context.end());
            double count = 0, total = 0;
            auto it = tables.find(ctx);
            if (it != tables.end()) {
                for (const auto& [tok, c] : it->second) {
                    total += c;
                    if (tok == token) count = c;
                }
            }
            p += w * (count + params.alpha) / (total + params.alpha * v);
        }
        return p;
    }
};

} // namespace

TEST_CASE("untrained model is uniform over the full vocabulary") {
    const AtomLM model(4); // V = 6
    const auto dist = model.next_dist(std::vector<int>{});
    REQUIRE(dist.size() == 6);
    for (double p : dist) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    const auto dist2 = model.next_dist(std::vector<int>{2, 3});
    for (double p : dist2) CHECK(p == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("unigram closed form: p(B|any) = (2 + a) / (4 + aV)") {
    // Two [A, B] sequences; atoms A=0, B=1 over 3 atoms, so V = 5.
    const auto model = AtomLM::train({{0, 1}, {0, 1}}, 3, unigram_only());
    const double alpha = 0.1;
    const double v = 5.0;
    const double expected = (2.0 + alpha) / (4.0 + alpha * v);
    CHECK(model.prob(1, std::vector<int>{}) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(model.prob(1, std::vector<int>{0}) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(model.prob(1, std::vector<int>{1, 1}) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("training beats the uniform baseline on its own corpus") {
    const auto corpus = random_corpus(200, 12, 31);
    const auto model = AtomLM::train(corpus, 12);
    double nll = 0;
    std::size_t tokens = 0;
    for (const auto& seq : corpus) {
        nll += -model.score(seq).score * static_cast<double>(seq.size());
        tokens += seq.size();
    }
    CHECK(nll / static_cast<double>(tokens) <= std::log(model.vocab_size()) + 1e-12);
}

TEST_CASE("contexts longer than order-1 use only the most recent tokens") {
    const auto model = AtomLM::train(random_corpus(50, 8, 5), 8);
    const std::vector<int> long_ctx = {1, 2, 3, 4, 5};
    const std::vector<int> tail_ctx = {4, 5};
    CHECK(model.next_dist(long_ctx) == model.next_dist(tail_ctx));
}

TEST_CASE("interpolated probabilities match the naive counting oracle") {
    const std::vector<std::vector<int>> corpus = {{0, 1, 2}, {0, 1}, {3, 1, 0}};
    const LmParams params; // defaults: order 3, alpha 0.1, (0.2, 0.3, 0.5)
    const auto model = AtomLM::train(corpus, 5, params);
    const NaiveLm oracle(corpus, 5, params);

    const std::vector<std::vector<int>> contexts = {{}, {0}, {1}, {0, 1}, {3, 1}, {4, 4}, {2}};
    for (const auto& ctx : contexts) {
        for (int token = 0; token < model.vocab_size(); ++token) {
            CHECK(model.prob(token, ctx) ==
                  doctest::Approx(oracle.prob(token, ctx)).epsilon(1e-12));
        }
    }
}

TEST_CASE("next_dist sums to one over 1000 random contexts") {
    const auto model = AtomLM::train(random_corpus(300, 20, 77), 20);
    Rng rng(78);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<int> ctx;
        const std::size_t len = rng.below(4);
        for (std::size_t i = 0; i < len; ++i) {
            ctx.push_back(static_cast<int>(rng.below(20)));
        }
        const auto dist = model.next_dist(ctx);
        const double sum = std::accumulate(dist.begin(), dist.end(), 0.0);
        CHECK(std::abs(sum - 1.0) <= 1e-9);
        for (double p : dist) CHECK(p > 0.0);
    }
}

TEST_CASE("scores: uniform case, best trigram path, single token") {
    const AtomLM uniform(8); // V = 10
    const auto scored = uniform.score({1, 2, 3});
    CHECK(scored.score == doctest::Approx(-std::log(10.0)).epsilon(1e-12));

    // A corpus dominated by one trigram: its ordering must score best among
    // all distinct triples (exhaustive scoring oracle over a 10-token vocab).
    std::vector<std::vector<int>> corpus(30, std::vector<int>{4, 7, 2});
    corpus.push_back({0, 1, 2});
    corpus.push_back({5, 6});
    const auto model = AtomLM::train(corpus, 8);
    const double best = model.score({4, 7, 2}).score;
    for (int a = 0; a < 8; ++a) {
        for (int b = 0; b < 8; ++b) {
            for (int c = 0; c < 8; ++c) {
                if (a == b || b == c || a == c) continue;
                CHECK(model.score({a, b, c}).score <= best + 1e-12);
            }
        }
    }

    //|seq| = 1 is the BOS-padded single-token log-probability.
    CHECK(model.score({4}).score ==
          doctest::Approx(std::log(model.prob(4, std::vector<int>{}))).epsilon(1e-12));
}

TEST_CASE("score rejects invalid tokens and empty sequences") {
    const auto model = AtomLM::train({{0, 1}}, 3);
    CHECK_THROWS_AS(model.score({}), ValidationError);
    CHECK_THROWS_AS(model.score({3}), ValidationError); // BOS id
    CHECK_THROWS_AS((void)AtomLM::train({{0, 9}}, 3), ValidationError);
    for (const auto& seq : random_corpus(50, 3, 9)) {
        CHECK(model.score(seq).score <= 0.0);
    }
}

TEST_CASE("temperature zero follows the argmax path with low-id ties") {
    const auto model = AtomLM::train({{0, 1, 2}, {0, 1, 2}, {0, 1, 3}}, 6);
    const auto draws = model.sample(3, 3, 0.0, 123);
    REQUIRE(draws.size() == 3);

    // Derive the expected path greedily from next_dist.
    std::vector<int> expected;
    std::vector<char> used(6, 0);
    for (int pos = 0; pos < 3; ++pos) {
        const auto dist = model.next_dist(expected);
        int best = -1;
        double best_p = -1;
        for (int t = 0; t < 6; ++t) {
            if (used[static_cast<std::size_t>(t)]) continue;
            if (dist[static_cast<std::size_t>(t)] > best_p) {
                best_p = dist[static_cast<std::size_t>(t)];
                best = t;
            }
        }
        expected.push_back(best);
        used[static_cast<std::size_t>(best)] = 1;
    }
    for (const auto& d : draws) CHECK(d == expected);
    CHECK(expected == std::vector<int>{0, 1, 2});
}

TEST_CASE("temperature one sampling matches next_dist by chi-square") {
    // Skewed 4-atom model; draws of length 1 cannot repeat, so the target
    // law is next_dist restricted to atoms and renormalized.
    std::vector<std::vector<int>> corpus;
    for (int i = 0; i < 12; ++i) corpus.push_back({0});
    for (int i = 0; i < 6; ++i) corpus.push_back({1});
    for (int i = 0; i < 3; ++i) corpus.push_back({2});
    corpus.push_back({3});
    const auto model = AtomLM::train(corpus, 4);

    const auto dist = model.next_dist(std::vector<int>{});
    std::vector<double> expected(4);
    double z = 0;
    for (int t = 0; t < 4; ++t) z += dist[static_cast<std::size_t>(t)];
    for (int t = 0; t < 4; ++t) expected[static_cast<std::size_t>(t)] =
        dist[static_cast<std::size_t>(t)] / z;

    const auto draws = model.sample(20000, 1, 1.0, 2024);
    std::vector<long long> observed(4, 0);
    for (const auto& d : draws) ++observed[static_cast<std::size_t>(d[0])];
    CHECK(testutil::chi2_gof_pvalue(observed, expected) > 0.01);
}

TEST_CASE("very high temperature flattens sampling to uniform") {
    std::vector<std::vector<int>> corpus;
    for (int i = 0; i < 50; ++i) corpus.push_back({0});
    corpus.push_back({1});
    corpus.push_back({2});
    corpus.push_back({3});
    const auto model = AtomLM::train(corpus, 4);
    const auto draws = model.sample(20000, 1, 1e6, 515);
    std::vector<long long> observed(4, 0);
    for (const auto& d : draws) ++observed[static_cast<std::size_t>(d[0])];
    CHECK(testutil::chi2_gof_pvalue(observed, {0.25, 0.25, 0.25, 0.25}) > 0.01);
}

TEST_CASE("sampling is deterministic per seed and validates its inputs") {
    const auto model = AtomLM::train(random_corpus(100, 10, 88), 10);
    const auto a = model.sample(50, 3, 1.0, 7);
    const auto b = model.sample(50, 3, 1.0, 7);
    CHECK(a == b);
    const auto c = model.sample(50, 3, 1.0, 8);
    CHECK(a != c);

    for (const auto& seq : a) {
        std::set<int> unique(seq.begin(), seq.end());
        CHECK(unique.size() == seq.size()); // distinct atoms
        for (int t : seq) CHECK(t < model.atom_count());
    }

    CHECK_THROWS_AS(model.sample(1, 3, -0.1, 7), ValidationError);
    CHECK_THROWS_AS(model.sample(1, 11, 1.0, 7), ValidationError);
    CHECK(model.sample(1, 11, 1.0, 7, /*allow_repeats=*/true).size() == 1);
}

TEST_CASE("perplexity: uniform model scores exactly V") {
    const AtomLM uniform(6); // V = 8
    CHECK(uniform.perplexity({{0, 1, 2}, {3}}) == doctest::Approx(8.0).epsilon(1e-12));

    const auto corpus = random_corpus(100, 6, 21);
    const auto model = AtomLM::train(corpus, 6);
    CHECK(model.perplexity(corpus) <= 8.0 + 1e-9);
    CHECK_THROWS_AS(model.perplexity({}), ValidationError);
}

TEST_CASE("weights tuned toward the data beat data-blind weights on a skewed fixture") {
    // Strong trigram structure: the trigram-heavy mixture should fit better
    // than a unigram-dominated one.
    std::vector<std::vector<int>> corpus;
    for (int i = 0; i < 40; ++i) corpus.push_back({0, 1, 2});
    for (int i = 0; i < 40; ++i) corpus.push_back({3, 4, 5});
    LmParams trigram_heavy;
    trigram_heavy.weights = {0.1, 0.2, 0.7};
    LmParams unigram_heavy;
    unigram_heavy.weights = {0.8, 0.1, 0.1};
    const auto a = AtomLM::train(corpus, 6, trigram_heavy);
    const auto b = AtomLM::train(corpus, 6, unigram_heavy);
    CHECK(a.perplexity(corpus) <= b.perplexity(corpus));
}

TEST_CASE("increasing alpha moves single-order models toward uniform") {
    std::vector<std::vector<int>> corpus;
    for (int i = 0; i < 30; ++i) corpus.push_back({0, 0, 1});
    for (int i = 0; i < 5; ++i) corpus.push_back({2});

    const std::vector<double> alphas = {0.01, 0.1, 1.0, 10.0, 100.0};
    const std::vector<std::vector<int>> contexts = {{}, {0}, {0, 1}, {2, 2}};
    for (const auto& ctx : contexts) {
        double prev_tv = 2.0;
        for (double alpha : alphas) {
            LmParams params = unigram_only();
            params.alpha = alpha;
            const auto model = AtomLM::train(corpus, 4, params);
            const auto dist = model.next_dist(ctx);
            double tv = 0;
            for (double p : dist) tv += std::abs(p - 1.0 / 6.0);
            tv /= 2;
            CHECK(tv <= prev_tv + 1e-12);
            prev_tv = tv;
        }
    }
}

TEST_CASE("increasing alpha moves the default mixture toward uniform on fixtures") {
    for (uint64_t seed : {11ULL, 22ULL, 33ULL}) {
        const auto corpus = random_corpus(60, 6, seed);
        const std::vector<double> alphas = {0.01, 0.1, 1.0, 10.0, 100.0};
        Rng rng(seed + 1);
        for (int trial = 0; trial < 10; ++trial) {
            std::vector<int> ctx;
            for (std::size_t i = 0; i < rng.below(3); ++i) {
                ctx.push_back(static_cast<int>(rng.below(6)));
            }
            double prev_tv = 2.0;
            for (double alpha : alphas) {
                LmParams params;
                params.alpha = alpha;
                const auto model = AtomLM::train(corpus, 6, params);
                const auto dist = model.next_dist(ctx);
                double tv = 0;
                for (double p : dist) tv += std::abs(p - 1.0 / 8.0);
                tv /= 2;
                CHECK(tv <= prev_tv + 1e-12);
                prev_tv = tv;
            }
        }
    }
}

TEST_CASE("sampled mean score converges to the enumerated expectation") {
    const auto corpus = random_corpus(80, 7, 404);
    const auto model = AtomLM::train(corpus, 7);
    const int length = 3;

    // Exhaustive enumeration of the sampler's distribution over ordered
    // distinct triples.
    double expected_mean = 0;
    std::vector<int> atoms(7);
    std::iota(atoms.begin(), atoms.end(), 0);
    for (int i : atoms) {
        const auto d1 = model.next_dist(std::vector<int>{});
        double z1 = 0;
        for (int t : atoms) z1 += d1[static_cast<std::size_t>(t)];
        const double p1 = d1[static_cast<std::size_t>(i)] / z1;
        for (int j : atoms) {
            if (j == i) continue;
            const auto d2 = model.next_dist(std::vector<int>{i});
            double z2 = 0;
            for (int t : atoms) {
                if (t != i) z2 += d2[static_cast<std::size_t>(t)];
            }
            const double p2 = d2[static_cast<std::size_t>(j)] / z2;
            for (int k : atoms) {
                if (k == i || k == j) continue;
                const auto d3 = model.next_dist(std::vector<int>{i, j});
                double z3 = 0;
                for (int t : atoms) {
                    if (t != i && t != j) z3 += d3[static_cast<std::size_t>(t)];
                }
                const double p3 = d3[static_cast<std::size_t>(k)] / z3;
                expected_mean += p1 * p2 * p3 * model.score({i, j, k}).score;
            }
        }
    }

    const int n = 50000;
    const auto draws = model.sample(n, length, 1.0, 31337);
    double mean = 0, m2 = 0;
    std::size_t count = 0;
    for (const auto& seq : draws) {
        const double s = model.score(seq).score;
        ++count;
        const double delta = s - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (s - mean);
    }
    const double se = std::sqrt(m2 / static_cast<double>(count - 1) / static_cast<double>(count));
    CHECK(std::abs(mean - expected_mean) <= 3.0 * se);
}

TEST_CASE("models round-trip through their JSON file") {
    testutil::TempDir dir;
    const auto corpus = random_corpus(120, 9, 808);
    const auto model = AtomLM::train(corpus, 9);
    model.save(dir / "model.json");
    const auto loaded = AtomLM::load(dir / "model.json");

    CHECK(loaded.atom_count() == model.atom_count());
    CHECK(loaded.params().order == model.params().order);
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<int> ctx;
        for (std::size_t i = 0; i < rng.below(3); ++i) {
            ctx.push_back(static_cast<int>(rng.below(9)));
        }
        CHECK(loaded.next_dist(ctx) == model.next_dist(ctx));
    }

    write_text_file_atomic(dir / "bad.json", "{\"format\":\"other\"}");
    CHECK_THROWS_AS(AtomLM::load(dir / "bad.json"), ParseError);
}

TEST_CASE("lm parameter validation") {
    LmParams params;
    params.alpha = 0;
    CHECK_THROWS_AS(params.validate(), ValidationError);
    params = LmParams{};
    params.weights = {0.5, 0.5};
    CHECK_THROWS_AS(params.validate(), ValidationError);
    params = LmParams{};
    params.weights = {0.5, 0.2, 0.2};
    CHECK_THROWS_AS(params.validate(), ValidationError);
    CHECK_THROWS_AS(AtomLM(0), ValidationError);
    CHECK_THROWS_AS((void)AtomLM::train({{}}, 4), ValidationError);
}
