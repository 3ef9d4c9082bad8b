#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "hifi/rankgraph.hpp"
#include "oracles.hpp"

using namespace hifi;

namespace {

Matrix random_r(std::mt19937_64& gen, std::size_t h) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix r(h, h, 0.0);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = i + 1; j < h; ++j) r(i, j) = r(j, i) = u(gen);
    return r;
}

HeadGraph random_graph(std::mt19937_64& gen, std::size_t h) {
    std::uniform_real_distribution<double> u(1.0, 8.0);
    std::vector<double> rich(h);
    for (double& v : rich) v = u(gen);
    return {initial_distribution(rich), transition_matrix(random_r(gen, h))};
}

double l1(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s;
}

}  // namespace

TEST(InitialDistribution, Examples) {
    EXPECT_EQ(initial_distribution(std::vector<double>{1, 1, 2}), (std::vector<double>{0.25, 0.25, 0.5}));
    EXPECT_EQ(initial_distribution(std::vector<double>{3, 3, 3, 3}), (std::vector<double>(4, 0.25)));
    EXPECT_THROW(initial_distribution(std::vector<double>{1, 0}), std::invalid_argument);
    EXPECT_THROW(initial_distribution(std::vector<double>{}), std::invalid_argument);
}

TEST(TransitionMatrix, Examples) {
    const auto m = transition_matrix(Matrix(3, 3, {0, 1, 3, 1, 0, 1, 3, 1, 0}));
    EXPECT_EQ(m(0, 0), 0.0);
    EXPECT_EQ(m(0, 1), 0.25);
    EXPECT_EQ(m(0, 2), 0.75);
    EXPECT_EQ(m(1, 0), 0.5);
    EXPECT_EQ(m(1, 2), 0.5);
    EXPECT_EQ(m(2, 0), 0.75);
    EXPECT_EQ(m(2, 1), 0.25);
}

TEST(TransitionMatrix, ZeroRowBecomesUniform) {
    const auto m = transition_matrix(Matrix(4, 4, 0.0));
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(m(i, j), i == j ? 0.0 : 1.0 / 3.0);
}

TEST(TransitionMatrix, RejectsBadInput) {
    EXPECT_THROW(transition_matrix(Matrix(1, 1, 0.0)), std::invalid_argument);
    EXPECT_THROW(transition_matrix(Matrix(2, 3, 0.0)), std::invalid_argument);
    EXPECT_THROW(transition_matrix(Matrix(2, 2, {0, -1, -1, 0})), std::invalid_argument);
}

TEST(TransitionMatrix, RowsAreStochastic) {
    std::mt19937_64 gen(1);
    for (int t = 0; t < 100; ++t) {
        const std::size_t h = 2 + t % 15;
        const auto m = transition_matrix(random_r(gen, h));
        for (std::size_t i = 0; i < h; ++i) {
            const auto row = m.row(i);
            EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-14);
            EXPECT_EQ(m(i, i), 0.0);
        }
    }
}

TEST(PageRank, ZeroDampingIsUniform) {
    std::mt19937_64 gen(2);
    const auto g = random_graph(gen, 5);
    const auto res = pagerank(g, {0.0, 1e-6, 100});
    for (double v : res.p_star) EXPECT_DOUBLE_EQ(v, 0.2);
    EXPECT_LE(res.iterations, 2u);
}

TEST(PageRank, UniformGraphIsFixedPoint) {
    const std::size_t h = 6;
    Matrix r(h, h, 1.0);
    for (std::size_t i = 0; i < h; ++i) r(i, i) = 0.0;
    const HeadGraph g{std::vector<double>(h, 1.0 / h), transition_matrix(r)};
    const auto res = pagerank(g);
    EXPECT_EQ(res.iterations, 1u);
    for (double v : res.p_star) EXPECT_NEAR(v, 1.0 / h, 1e-15);
}

TEST(PageRank, ThreeHeadsMatchLinearSolve) {
    const HeadGraph g{initial_distribution(std::vector<double>{2, 3, 5}),
                      transition_matrix(Matrix(3, 3, {0, 0.2, 0.9, 0.2, 0, 0.4, 0.9, 0.4, 0}))};
    const auto res = pagerank(g, {0.85, 1e-12, 10000});
    const auto want = oracle::pagerank_fixed_point(g.m, 0.85);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(res.p_star[i], want[i], 1e-8);
    EXPECT_NEAR(std::accumulate(res.p_star.begin(), res.p_star.end(), 0.0), 1.0, 1e-12);
}

TEST(PageRank, DirectSolveMatchesOracle) {
    std::mt19937_64 gen(3);
    for (int t = 0; t < 100; ++t) {
        const auto g = random_graph(gen, 2 + t % 20);
        const double d = 0.05 + 0.9 * (t % 10) / 10.0;
        const auto got = pagerank_direct(g, d);
        const auto want = oracle::pagerank_fixed_point(g.m, d);
        EXPECT_LT(l1(got, want), 1e-12);
    }
}

TEST(PageRank, ResultStaysOnSimplex) {
    std::mt19937_64 gen(4);
    for (int t = 0; t < 100; ++t) {
        const auto g = random_graph(gen, 2 + t % 20);
        const auto res = pagerank(g);
        EXPECT_NEAR(std::accumulate(res.p_star.begin(), res.p_star.end(), 0.0), 1.0, 1e-12);
        for (double v : res.p_star) EXPECT_GE(v, (1.0 - 0.85) / double(g.size()) - 1e-15);
        EXPECT_LE(res.residual, 1e-6);
        EXPECT_LT(l1(res.p_star, pagerank_direct(g, 0.85)), 1e-5);
    }
}

TEST(PageRank, ContractionBetweenIterates) {
    std::mt19937_64 gen(5);
    for (int t = 0; t < 50; ++t) {
        const auto g = random_graph(gen, 16);
        std::vector<std::vector<double>> iterates{g.p0};
        pagerank(g, {0.85, 1e-12, 10000}, [&](std::span<const double> p) { iterates.emplace_back(p.begin(), p.end()); });
        for (std::size_t i = 2; i < iterates.size(); ++i) {
            const double prev = l1(iterates[i - 1], iterates[i - 2]);
            EXPECT_LE(l1(iterates[i], iterates[i - 1]), 0.85 * prev + 1e-15);
        }
    }
}

TEST(PageRank, IterationCountIsSmallAtDefaults) {
    std::mt19937_64 gen(6);
    for (int t = 0; t < 100; ++t) EXPECT_LE(pagerank(random_graph(gen, 16)).iterations, 90u);
}

TEST(PageRank, ConvergenceErrorCarriesLastIterate) {
    std::mt19937_64 gen(7);
    const auto g = random_graph(gen, 8);
    try {
        pagerank(g, {0.85, 1e-15, 3});
        FAIL();
    } catch (const ConvergenceError& e) {
        EXPECT_EQ(e.last_iterate().iterations, 3u);
        EXPECT_EQ(e.last_iterate().p_star.size(), 8u);
        EXPECT_GT(e.last_iterate().residual, 1e-15);
    }
}

TEST(PageRank, RejectsBadOptions) {
    std::mt19937_64 gen(8);
    const auto g = random_graph(gen, 4);
    EXPECT_THROW(pagerank(g, {1.0}), std::invalid_argument);
    EXPECT_THROW(pagerank(g, {-0.1}), std::invalid_argument);
    EXPECT_THROW(pagerank(g, {0.85, 0.0}), std::invalid_argument);
    EXPECT_THROW(pagerank(g, {0.85, 1e-6, 0}), std::invalid_argument);
    EXPECT_THROW(pagerank(HeadGraph{{1.0}, Matrix(1, 1, 0.0)}), std::invalid_argument);
}

TEST(PageRank, UntransposedFormDiffers) {
    // Asymmetric transition rows: the two orientations settle on different vectors.
    const HeadGraph g{initial_distribution(std::vector<double>{1, 2, 3, 4}),
                      transition_matrix(Matrix(4, 4, {0, 1, 0.1, 0.1, 1, 0, 0.1, 0.1, 0.1, 0.1, 0, 5, 0.1, 0.1, 5, 0}))};
    const auto a = pagerank(g);
    const auto b = pagerank(g, {0.85, 1e-6, 10000, Orientation::untransposed});
    EXPECT_NEAR(std::accumulate(b.p_star.begin(), b.p_star.end(), 0.0), 1.0, 1e-12);
    EXPECT_GT(l1(a.p_star, b.p_star), 1e-3);
}

TEST(PageRankJson, RoundTrip) {
    const PageRankResult r{{0.25, 0.75}, 7, 1e-7, 0.85, 1e-6};
    const auto j = to_json(r, 3);
    EXPECT_EQ(j.at("layer"), 3);
    EXPECT_EQ(pagerank_result_from_json(j), r);
}

TEST(PageRank, FirstStepCanExceedGeometricBound) {
    // Two heads: M swaps them, so every step is exactly d times the last. A
    // lopsided p0 gives a first step of about 0.70 > 2d, and the solve needs
    // one update more than ceil(log(eps/2)/log d) = 9.
    const HeadGraph g{{0.2, 0.8}, transition_matrix(Matrix(2, 2, {0, 1, 1, 0}))};
    const double d = 0.1656, eps = 2.37e-7;
    const auto bound = static_cast<std::size_t>(std::ceil(std::log(eps / 2.0) / std::log(d)));
    const auto res = pagerank(g, {d, eps, 100});
    EXPECT_EQ(bound, 9u);
    EXPECT_EQ(res.iterations, bound + 1);
}
