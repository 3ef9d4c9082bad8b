#pragma once

// Run-to-run robustness statistics: Spearman rank correlation of richness and
// PageRank vectors, Jaccard overlap of top-k selections, and the mean
// absolute difference of max-normalized correlation matrices.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hifi/error.hpp"
#include "hifi/metrics.hpp"
#include "hifi/rankgraph.hpp"
#include "hifi/selector.hpp"
#include "hifi/tensor_store.hpp"

namespace hifi {

/// 1-based ranks; tied values share the average of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = avg;
        i = j + 1;
    }
    return ranks;
}

/// Pearson correlation of the average-rank vectors.
inline double spearman_rank_corr(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("spearman_rank_corr: length mismatch");
    if (a.size() < 2) throw std::invalid_argument("spearman_rank_corr: need at least 2 values");
    const auto ra = average_ranks(a);
    const auto rb = average_ranks(b);
    const double mean = 0.5 * static_cast<double>(a.size() + 1);  // same for both rank vectors
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < ra.size(); ++i) {
        const double x = ra[i] - mean;
        const double y = rb[i] - mean;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if (saa == 0.0 || sbb == 0.0) throw NumericalError("spearman_rank_corr: undefined correlation (zero rank variance)");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

/// |A ∩ B| / |A ∪ B|; two empty sets count as identical.
inline double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b) {
    const std::set<std::size_t> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::size_t common = 0;
    for (auto x : sa) common += sb.count(x);
    const std::size_t uni = sa.size() + sb.size() - common;
    return uni == 0 ? 1.0 : static_cast<double>(common) / static_cast<double>(uni);
}

/// Mean absolute entrywise difference after dividing each matrix by its
/// largest entry (an all-zero matrix stays zero).
inline double normalized_delta(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("normalized_delta: shape mismatch");
    const auto av = a.values();
    const auto bv = b.values();
    if (av.empty()) return 0.0;
    const double ma = *std::max_element(av.begin(), av.end());
    const double mb = *std::max_element(bv.begin(), bv.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double x = ma > 0.0 ? av[i] / ma : 0.0;
        const double y = mb > 0.0 ? bv[i] / mb : 0.0;
        acc += std::abs(x - y);
    }
    return acc / static_cast<double>(av.size());
}

// ---------------------------------------------------------------------------
// Run results

struct LayerResult {
    LayerMetrics metrics;
    PageRankResult pagerank;
};

struct RunResult {
    ModelGeometry geometry;
    std::vector<LayerResult> layers;
};

/// Richness, correlation and PageRank for every layer of a corpus.
inline RunResult analyze_run(const Manifest& m, double xi, const PageRankOptions& pr, std::size_t workers = 1) {
    RunResult run{m.geometry, {}};
    for (std::size_t l = 0; l < m.geometry.num_layers; ++l) {
        auto metrics = analyze_layer(m, l, xi, workers);
        auto graph = build_graph(metrics.richness, metrics.correlation);
        run.layers.push_back({std::move(metrics), pagerank(graph, pr)});
    }
    return run;
}

struct LayerStability {
    std::size_t layer = 0;
    std::optional<double> richness_rho;  // empty when a side has no rank variance
    std::optional<double> pagerank_rho;
    double topk_jaccard = 0.0;
    double delta_r = 0.0;
};

struct StabilityComparison {
    std::string label;
    std::string setting;  // e.g. "SS" (sample size) or "SL" (sequence length)
    std::size_t k = 3;
    std::vector<LayerStability> layers;
};

struct StabilityReport {
    std::string baseline;
    std::vector<StabilityComparison> comparisons;
};

namespace detail {

inline std::optional<double> try_spearman(std::span<const double> a, std::span<const double> b) {
    try {
        return spearman_rank_corr(a, b);
    } catch (const NumericalError&) {
        return std::nullopt;
    }
}

}  // namespace detail

/// Per-layer statistics between a baseline run and another run.
inline StabilityComparison compare_runs(const RunResult& base, const RunResult& other, std::size_t k,
                                        std::string label = {}, std::string setting = {}) {
    if (!(base.geometry == other.geometry) || base.layers.size() != other.layers.size()) {
        throw DataError("compare_runs: geometry mismatch");
    }
    StabilityComparison cmp{std::move(label), std::move(setting), k, {}};
    for (std::size_t l = 0; l < base.layers.size(); ++l) {
        const auto& a = base.layers[l];
        const auto& b = other.layers[l];
        LayerStability s;
        s.layer = l;
        s.richness_rho = detail::try_spearman(a.metrics.richness.values, b.metrics.richness.values);
        s.pagerank_rho = detail::try_spearman(a.pagerank.p_star, b.pagerank.p_star);
        s.topk_jaccard = jaccard(select_topk(a.pagerank.p_star, k), select_topk(b.pagerank.p_star, k));
        s.delta_r = normalized_delta(a.metrics.correlation.r, b.metrics.correlation.r);
        cmp.layers.push_back(s);
    }
    return cmp;
}

// ---------------------------------------------------------------------------
// Export

namespace detail {

inline nlohmann::json optional_number(const std::optional<double>& v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json to_json(const StabilityReport& r) {
    nlohmann::json comparisons = nlohmann::json::array();
    for (const auto& c : r.comparisons) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& s : c.layers) {
            layers.push_back({{"layer", s.layer},
                              {"richness_spearman", detail::optional_number(s.richness_rho)},
                              {"pagerank_spearman", detail::optional_number(s.pagerank_rho)},
                              {"topk_jaccard", s.topk_jaccard},
                              {"delta_r", s.delta_r}});
        }
        comparisons.push_back({{"label", c.label}, {"setting", c.setting}, {"k", c.k}, {"layers", std::move(layers)}});
    }
    return {{"baseline", r.baseline}, {"comparisons", std::move(comparisons)}};
}

/// One row per layer per comparison; undefined correlations are empty cells.
inline std::string to_csv(const StabilityReport& r) {
    std::ostringstream os;
    os.precision(17);
    os << "baseline,comparison,setting,layer,richness_spearman,pagerank_spearman,topk_jaccard,delta_r\n";
    auto cell = [&](const std::optional<double>& v) {
        if (v) os << *v;
    };
    for (const auto& c : r.comparisons) {
        for (const auto& s : c.layers) {
            os << r.baseline << ',' << c.label << ',' << c.setting << ',' << s.layer << ',';
            cell(s.richness_rho);
            os << ',';
            cell(s.pagerank_rho);
            os << ',' << s.topk_jaccard << ',' << s.delta_r << '\n';
        }
    }
    return os.str();
}

}  // namespace hifi
