#include <gtest/gtest.h>

#include "properties.hpp"

using namespace hifi::props;

namespace {

void expect_holds(const PropertyResult& r) {
    EXPECT_GE(r.cases, 1000u) << r.name;
    EXPECT_EQ(r.failures, 0u) << r.name << ": " << r.first_failure;
}

}  // namespace

TEST(Property, RichnessScaleInvariance) { expect_holds(richness_scale_invariance()); }
TEST(Property, CorrelationScalesByCSquared) { expect_holds(correlation_c2_scaling()); }
TEST(Property, CorrelationStructure) { expect_holds(correlation_structure()); }
TEST(Property, SelectionArgsortInvariance) { expect_holds(selection_argsort_invariance()); }
TEST(Property, PageRankSimplex) { expect_holds(pagerank_simplex()); }
TEST(Property, SelectionCardinality) { expect_holds(selection_cardinality()); }
TEST(Property, PageRankContraction) { expect_holds(pagerank_contraction()); }
TEST(Property, MetricsPermutationEquivariance) { expect_holds(metrics_permutation_equivariance()); }
TEST(Property, MetricsSampleOrder) { expect_holds(metrics_sample_order()); }
TEST(Property, HotRoundTrip) { expect_holds(hot_round_trip()); }
TEST(Property, SynthRankAndAttention) { expect_holds(synth_rank_and_attention()); }
TEST(Property, StabilitySymmetryAndRelabeling) { expect_holds(stability_symmetry_and_relabeling()); }

TEST(Property, HarnessReportsFailures) {
    const auto r = check("always fails on odd cases", 10, 1, [n = 0](std::mt19937_64&) mutable {
        return (n++ % 2) ? std::string("odd") : std::string();
    });
    EXPECT_EQ(r.failures, 5u);
    EXPECT_EQ(r.first_failure, "case 1: odd");
    EXPECT_FALSE(r.ok());
}
