#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "fixtures.hpp"
#include "hifi/metrics.hpp"
#include "hifi/synthgen.hpp"
#include "oracles.hpp"

using namespace hifi;
using hifi::testkit::TempDir;

namespace {

using Streams = std::vector<std::vector<HeadOutput>>;

Streams load_layer(const Manifest& m, std::size_t layer) {
    Streams s(m.geometry.num_heads);
    for (std::size_t h = 0; h < s.size(); ++h)
        for (const auto& out : iter_samples(m, layer, h)) s[h].push_back(out);
    return s;
}

HeadOutput diag_output(std::size_t head, const std::string& sid, std::vector<double> diag) {
    Matrix m(diag.size(), diag.size(), 0.0);
    for (std::size_t i = 0; i < diag.size(); ++i) m(i, i) = diag[i];
    return {0, head, sid, m};
}

Streams random_streams(std::mt19937_64& gen, std::size_t heads, std::size_t n, std::size_t dp) {
    std::uniform_int_distribution<std::size_t> len(1, 12);
    Streams s(heads);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t rows = len(gen);
        for (std::size_t h = 0; h < heads; ++h)
            s[h].push_back({0, h, "s" + std::to_string(i), oracle::random_matrix(gen, rows, dp)});
    }
    return s;
}

}  // namespace

TEST(SequenceAverage, Examples) {
    EXPECT_EQ(sequence_average(Matrix(1, 2, {7, -2})), (std::vector<double>{7, -2}));
    EXPECT_EQ(sequence_average(Matrix(2, 2, {1, 2, 3, 4})), (std::vector<double>{2, 3}));
    EXPECT_EQ(sequence_average(Matrix(3, 2, {1, 1, 2, 2, 3, 3})), (std::vector<double>{2, 2}));
}

TEST(PairCorrelation, Examples) {
    const std::vector<double> a{1, 2, 3};
    EXPECT_DOUBLE_EQ(pair_correlation(a, a), 1.0);
    EXPECT_DOUBLE_EQ(pair_correlation(a, std::vector<double>{-2, -4, -6}), 2.0);
    EXPECT_DOUBLE_EQ(pair_correlation(a, std::vector<double>{5, 5, 5}), 0.0);
}

TEST(PairCorrelation, UndefinedForSingleComponent) {
    const std::vector<double> a{1.0};
    EXPECT_THROW(pair_correlation(a, a), DataError);
}

TEST(InformationRichness, SingleSampleAndMean) {
    const std::vector<HeadOutput> one{diag_output(0, "a", {4, 3, 2, 1})};
    EXPECT_DOUBLE_EQ(information_richness(one, 0.9), 3.0);

    // indices 2 and 4
    const std::vector<HeadOutput> two{diag_output(0, "a", {1, 1, 0, 0}), diag_output(0, "b", {1, 1, 1, 1})};
    EXPECT_DOUBLE_EQ(information_richness(two, 0.9), 3.0);
}

TEST(InformationRichness, EmptyStreamAndDegenerateSample) {
    EXPECT_THROW(information_richness(std::vector<HeadOutput>{}, 0.9), DataError);
    const std::vector<HeadOutput> bad{diag_output(0, "ok", {1, 1}), diag_output(0, "zero", {0, 0})};
    try {
        information_richness(bad, 0.9);
        FAIL();
    } catch (const NumericalError& e) {
        EXPECT_NE(std::string(e.what()).find("zero"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("degenerate"), std::string::npos);
    }
}

TEST(InformationRichness, MatchesMaterializedAverageOnCorpus) {
    TempDir dir("rich");
    const auto m = synth::generate_corpus(testkit::metric_config(7, 300), dir.path(), 4);
    for (std::size_t h = 0; h < m.geometry.num_heads; ++h) {
        std::vector<double> indices;
        for (std::size_t i = 0; i < m.num_samples(); ++i) {
            indices.push_back(double(richness_index(singular_values(load_entry(m, 0, h, i).data), 0.9)));
        }
        ASSERT_EQ(indices.size(), 300u);
        const double want = std::accumulate(indices.begin(), indices.end(), 0.0) / 300.0;
        EXPECT_EQ(information_richness(iter_samples(m, 0, h), 0.9), want);
    }
}

TEST(LayerCorrelation, IdenticalHeadsGiveMeanVariance) {
    std::mt19937_64 gen(3);
    Streams s(2);
    double var_sum = 0.0;
    for (int i = 0; i < 5; ++i) {
        const Matrix x = oracle::random_matrix(gen, 4, 6);
        s[0].push_back({0, 0, "s" + std::to_string(i), x});
        s[1].push_back({0, 1, "s" + std::to_string(i), x});
        const auto avg = sequence_average(x);
        var_sum += pair_correlation(avg, avg);
    }
    const auto r = layer_correlation_matrix(s, 0);
    EXPECT_NEAR(r(0, 1), var_sum / 5.0, 1e-15);
    EXPECT_EQ(r(0, 1), r(1, 0));
    EXPECT_EQ(r(0, 0), 0.0);
    EXPECT_EQ(r(1, 1), 0.0);
}

TEST(LayerCorrelation, ConstantOutputsGiveZeros) {
    Streams s(3);
    for (std::size_t h = 0; h < 3; ++h)
        for (int i = 0; i < 4; ++i) s[h].push_back({0, h, "s" + std::to_string(i), Matrix(3, 5, double(h + i))});
    const auto r = layer_correlation_matrix(s, 0);
    for (double v : r.r.values()) EXPECT_EQ(v, 0.0);
}

TEST(LayerCorrelation, MismatchedSampleSets) {
    std::mt19937_64 gen(4);
    auto s = random_streams(gen, 3, 4, 5);
    s[2][1].sample_id = "other";
    EXPECT_THROW(layer_correlation_matrix(s, 0), DataError);
    auto t = random_streams(gen, 3, 4, 5);
    t[1].pop_back();
    EXPECT_THROW(layer_correlation_matrix(t, 0), DataError);
    Streams empty(3);
    EXPECT_THROW(layer_correlation_matrix(empty, 0), DataError);
}

TEST(LayerCorrelation, MatchesPerSampleBruteForce) {
    TempDir dir("corr");
    const auto m = synth::generate_corpus(testkit::metric_config(), dir.path(), 2);
    for (std::size_t l = 0; l < 2; ++l) {
        auto streams = load_layer(m, l);
        const auto r = layer_correlation_matrix(streams, l);
        for (std::size_t a = 0; a < 4; ++a)
            for (std::size_t b = 0; b < 4; ++b) {
                double want = 0.0;
                if (a != b) {
                    for (std::size_t i = 0; i < m.num_samples(); ++i)
                        want += oracle::sample_pair_correlation(load_entry(m, l, a, i).data, load_entry(m, l, b, i).data);
                    want /= double(m.num_samples());
                }
                EXPECT_NEAR(r(a, b), want, 1e-10) << l << " " << a << " " << b;
            }
    }
}

TEST(AnalyzeLayer, RankOneHeadScoresExactlyOne) {
    TempDir dir("rank1");
    auto c = testkit::metric_config(11, 20);
    c.head_profile[0] = {1, 0.0, std::nullopt};
    const auto m = synth::generate_corpus(c, dir.path());
    for (std::size_t l = 0; l < 2; ++l) EXPECT_EQ(analyze_layer(m, l).richness.values[0], 1.0);
}

TEST(AnalyzeLayer, EqualsSeparateComputations) {
    TempDir dir("compose");
    const auto m = synth::generate_corpus(testkit::metric_config(5, 30), dir.path());
    for (std::size_t l = 0; l < 2; ++l) {
        const auto lm = analyze_layer(m, l, 0.9, 3);
        for (std::size_t h = 0; h < 4; ++h) {
            EXPECT_EQ(lm.richness.values[h], information_richness(iter_samples(m, l, h), 0.9));
        }
        std::vector<SampleStream> streams;
        for (std::size_t h = 0; h < 4; ++h) streams.push_back(iter_samples(m, l, h));
        EXPECT_EQ(lm.correlation, layer_correlation_matrix(streams, l));
        EXPECT_EQ(lm.richness.n, 30u);
    }
}

TEST(AnalyzeLayer, LayerZeroIgnoresLayerOneFiles) {
    TempDir dir("layers");
    const auto m = synth::generate_corpus(testkit::metric_config(6, 15), dir.path());
    const auto before = analyze_layer(m, 0);
    for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t i = 0; i < m.num_samples(); ++i) {
            auto out = load_entry(m, 1, h, i);
            for (double& v : out.data.values()) v = -3.0 * v + 1.0;
            write_head_output(m.resolve(1, h, i), out);
        }
    EXPECT_EQ(analyze_layer(m, 0), before);
    EXPECT_NE(analyze_layer(m, 1).correlation, before.correlation);
}

TEST(AnalyzeLayer, WorkerCountDoesNotChangeResults) {
    TempDir dir("workers");
    const auto m = synth::generate_corpus(testkit::metric_config(8, 40), dir.path());
    const auto serial = analyze_layer(m, 1, 0.9, 1);
    for (std::size_t w : {2u, 3u, 8u}) EXPECT_EQ(analyze_layer(m, 1, 0.9, w), serial);
}

TEST(AnalyzeLayer, ReversedManifestOrder) {
    TempDir dir("reverse");
    const auto m = synth::generate_corpus(testkit::metric_config(9, 40), dir.path());
    Manifest rev = m;
    std::reverse(rev.samples.begin(), rev.samples.end());
    for (auto& layer : rev.paths)
        for (auto& head : layer) std::reverse(head.begin(), head.end());
    for (std::size_t l = 0; l < 2; ++l) {
        const auto a = analyze_layer(m, l);
        const auto b = analyze_layer(rev, l);
        EXPECT_EQ(a.richness.values, b.richness.values);
        for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(a.correlation.r.values()[i], b.correlation.r.values()[i], 1e-12);
    }
}

TEST(MetricsProperties, PermutationScalingAndShape) {
    std::mt19937_64 gen(21);
    std::uniform_real_distribution<double> scale(0.1, 10.0);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t heads = 2 + trial % 5;
        auto s = random_streams(gen, heads, 6, 2 + trial % 7);
        std::vector<double> rich;
        for (auto& st : s) rich.push_back(information_richness(st, 0.9));
        const auto r = layer_correlation_matrix(s, 0);

        // Permute heads.
        std::vector<std::size_t> perm(heads);
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        std::shuffle(perm.begin(), perm.end(), gen);
        Streams p(heads);
        for (std::size_t h = 0; h < heads; ++h) p[h] = s[perm[h]];
        const auto rp = layer_correlation_matrix(p, 0);
        for (std::size_t a = 0; a < heads; ++a) {
            EXPECT_EQ(information_richness(p[a], 0.9), rich[perm[a]]);
            for (std::size_t b = 0; b < heads; ++b) EXPECT_EQ(rp(a, b), r(perm[a], perm[b]));
        }

        // Scale every output by c.
        const double c = scale(gen);
        Streams sc = s;
        for (auto& st : sc)
            for (auto& out : st)
                for (double& v : out.data.values()) v *= c;
        const auto rs = layer_correlation_matrix(sc, 0);
        for (std::size_t h = 0; h < heads; ++h) EXPECT_EQ(information_richness(sc[h], 0.9), rich[h]);
        for (std::size_t i = 0; i < heads * heads; ++i) {
            EXPECT_NEAR(rs.r.values()[i], c * c * r.r.values()[i], 1e-12 * c * c * (1.0 + r.r.values()[i]));
        }

        for (std::size_t a = 0; a < heads; ++a) {
            EXPECT_EQ(r(a, a), 0.0);
            for (std::size_t b = 0; b < heads; ++b) {
                EXPECT_EQ(r(a, b), r(b, a));
                EXPECT_GE(r(a, b), 0.0);
            }
        }
    }
}

TEST(MetricsJson, RoundTripAndValidation) {
    LayerMetrics lm{{1, {1.5, 2.0}, 10}, {1, Matrix(2, 2, {0, 0.25, 0.25, 0}), 10}, 0.9};
    const auto j = to_json(lm);
    EXPECT_EQ(j.at("layer"), 1);
    EXPECT_EQ(j.at("correlation").size(), 2u);
    EXPECT_EQ(layer_metrics_from_json(j), lm);

    auto asym = j;
    asym["correlation"][0][1] = 0.5;
    EXPECT_THROW(layer_metrics_from_json(asym), DataError);
    auto low = j;
    low["richness"][0] = 0.5;
    EXPECT_THROW(layer_metrics_from_json(low), DataError);
}
