#pragma once

// Monte-Carlo estimates of per-head information richness and of the
// head-to-head correlation matrix for one layer.

#include <cmath>
#include <cstddef>
#include <ranges>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hifi/error.hpp"
#include "hifi/geometry.hpp"
#include "hifi/parallel.hpp"
#include "hifi/spectral.hpp"
#include "hifi/tensor_store.hpp"

namespace hifi {

struct RichnessScores {
    std::size_t layer = 0;
    std::vector<double> values;  // one per head, each in [1, T]
    std::size_t n = 0;

    friend bool operator==(const RichnessScores&, const RichnessScores&) = default;
};

/// H x H, symmetric, zero diagonal, non-negative.
struct CorrelationMatrix {
    std::size_t layer = 0;
    Matrix r;
    std::size_t n = 0;

    std::size_t size() const noexcept { return r.rows(); }
    double operator()(std::size_t i, std::size_t j) const noexcept { return r(i, j); }

    friend bool operator==(const CorrelationMatrix&, const CorrelationMatrix&) = default;
};

struct LayerMetrics {
    RichnessScores richness;
    CorrelationMatrix correlation;
    double xi = kDefaultXi;

    friend bool operator==(const LayerMetrics&, const LayerMetrics&) = default;
};

/// Mean of the S rows of a head output.
inline std::vector<double> sequence_average(const Matrix& data) {
    if (data.rows() == 0) throw std::invalid_argument("sequence_average: S must be >= 1");
    std::vector<double> avg(data.cols(), 0.0);
    for (std::size_t s = 0; s < data.rows(); ++s) {
        const auto row = data.row(s);
        for (std::size_t d = 0; d < avg.size(); ++d) avg[d] += row[d];
    }
    const double inv = 1.0 / static_cast<double>(data.rows());
    for (double& v : avg) v *= inv;
    return avg;
}

inline std::vector<double> sequence_average(const HeadOutput& out) { return sequence_average(out.data); }

/// Absolute unbiased covariance across the D' components of two vectors.
inline double pair_correlation(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("pair_correlation: length mismatch");
    const std::size_t n = a.size();
    if (n < 2) throw DataError("pair_correlation: covariance undefined for D' < 2");

    double mean_a = 0.0, mean_b = 0.0;
    for (std::size_t d = 0; d < n; ++d) {
        mean_a += a[d];
        mean_b += b[d];
    }
    mean_a /= static_cast<double>(n);
    mean_b /= static_cast<double>(n);

    double acc = 0.0;
    for (std::size_t d = 0; d < n; ++d) acc += (a[d] - mean_a) * (b[d] - mean_b);
    return std::abs(acc / static_cast<double>(n - 1));
}

namespace detail {

inline std::size_t sample_richness(const HeadOutput& out, double xi) {
    try {
        return richness_index(singular_values(out.data), xi);
    } catch (const NumericalError& e) {
        throw NumericalError("sample " + out.sample_id + " (layer " + std::to_string(out.layer) +
                             ", head " + std::to_string(out.head) + "): " + e.what());
    }
}

/// Strict upper triangle of per-sample pair terms, row-major.
inline std::vector<double> sample_pair_terms(const std::vector<std::vector<double>>& averaged) {
    const std::size_t h = averaged.size();
    std::vector<double> terms;
    terms.reserve(h * (h - 1) / 2);
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = i + 1; j < h; ++j) terms.push_back(pair_correlation(averaged[i], averaged[j]));
    return terms;
}

/// Sums per-sample upper-triangle terms in sample order, then mirrors.
class CorrelationAccumulator {
public:
    explicit CorrelationAccumulator(std::size_t heads) : heads_(heads), sums_(heads * (heads - 1) / 2, 0.0) {}

    void add(std::span<const double> terms) {
        for (std::size_t k = 0; k < sums_.size(); ++k) sums_[k] += terms[k];
        ++n_;
    }

    CorrelationMatrix finish(std::size_t layer) const {
        if (n_ == 0) throw DataError("layer_correlation_matrix: empty corpus");
        CorrelationMatrix out{layer, Matrix(heads_, heads_, 0.0), n_};
        const double count = static_cast<double>(n_);
        std::size_t k = 0;
        for (std::size_t i = 0; i < heads_; ++i)
            for (std::size_t j = i + 1; j < heads_; ++j, ++k) {
                const double v = sums_[k] / count;
                out.r(i, j) = v;
                out.r(j, i) = v;
            }
        return out;
    }

private:
    std::size_t heads_;
    std::vector<double> sums_;
    std::size_t n_ = 0;
};

inline RichnessScores finish_richness(std::size_t layer, const std::vector<std::size_t>& index_sums,
                                      std::size_t n) {
    if (n == 0) throw DataError("information_richness: empty stream");
    RichnessScores out{layer, {}, n};
    out.values.reserve(index_sums.size());
    for (std::size_t s : index_sums) out.values.push_back(static_cast<double>(s) / static_cast<double>(n));
    return out;
}

}  // namespace detail

/// Mean richness index of one head over a stream of its outputs. Indices are
/// integers, so the sum is exact and the estimate is order-independent.
template <std::ranges::input_range Stream>
double information_richness(Stream&& outputs, double xi = kDefaultXi) {
    std::size_t sum = 0;
    std::size_t n = 0;
    for (const HeadOutput& out : outputs) {
        sum += detail::sample_richness(out, xi);
        ++n;
    }
    if (n == 0) throw DataError("information_richness: empty stream");
    return static_cast<double>(sum) / static_cast<double>(n);
}

/// Correlation matrix from one stream per head, walked in lockstep. All
/// streams must list the same sample ids in the same order.
template <std::ranges::input_range Stream>
CorrelationMatrix layer_correlation_matrix(std::vector<Stream>& streams, std::size_t layer) {
    const std::size_t h = streams.size();
    if (h == 0) throw std::invalid_argument("layer_correlation_matrix: no heads");

    using Iter = std::ranges::iterator_t<Stream>;
    using Sentinel = std::ranges::sentinel_t<Stream>;
    std::vector<Iter> its;
    std::vector<Sentinel> ends;
    for (auto& s : streams) {
        its.push_back(std::ranges::begin(s));
        ends.push_back(std::ranges::end(s));
    }

    detail::CorrelationAccumulator acc(h);
    std::vector<std::vector<double>> averaged(h);
    for (;;) {
        std::size_t done = 0;
        for (std::size_t i = 0; i < h; ++i) done += (its[i] == ends[i]) ? 1 : 0;
        if (done == h) break;
        if (done != 0) throw DataError("layer_correlation_matrix: mismatched sample sets across heads");

        const std::string& sid = (*its[0]).sample_id;
        for (std::size_t i = 0; i < h; ++i) {
            const HeadOutput& out = *its[i];
            if (out.sample_id != sid) {
                throw DataError("layer_correlation_matrix: mismatched sample sets across heads (" + sid +
                                " vs " + out.sample_id + ")");
            }
            averaged[i] = sequence_average(out);
        }
        acc.add(detail::sample_pair_terms(averaged));
        for (auto& it : its) ++it;
    }
    return acc.finish(layer);
}

/// Richness and correlation for one layer of a corpus in a single pass over
/// its samples. Per-sample work fans out over `workers` threads; aggregation
/// always runs in manifest order, so results do not depend on worker count.
inline LayerMetrics analyze_layer(const Manifest& m, std::size_t layer, double xi = kDefaultXi,
                                  std::size_t workers = 1) {
    if (layer >= m.geometry.num_layers) throw std::invalid_argument("analyze_layer: layer out of range");
    if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("analyze_layer: xi must be in (0, 1]");
    const std::size_t h = m.geometry.num_heads;
    const std::size_t n = m.num_samples();

    std::vector<std::vector<std::size_t>> indices(n);
    std::vector<std::vector<double>> pair_terms(n);
    parallel_for(n, workers, [&](std::size_t i) {
        std::vector<std::vector<double>> averaged(h);
        std::vector<std::size_t> idx(h);
        for (std::size_t head = 0; head < h; ++head) {
            const HeadOutput out = load_entry(m, layer, head, i);
            idx[head] = detail::sample_richness(out, xi);
            averaged[head] = sequence_average(out);
        }
        indices[i] = std::move(idx);
        pair_terms[i] = detail::sample_pair_terms(averaged);
    });

    std::vector<std::size_t> sums(h, 0);
    detail::CorrelationAccumulator acc(h);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t head = 0; head < h; ++head) sums[head] += indices[i][head];
        acc.add(pair_terms[i]);
    }
    return {detail::finish_richness(layer, sums, n), acc.finish(layer), xi};
}

// ---------------------------------------------------------------------------
// JSON: {"layer", "n", "xi", "richness": [H], "correlation": [[H] x H]}

inline nlohmann::json to_json(const LayerMetrics& lm) {
    const auto& r = lm.correlation.r;
    nlohmann::json corr = nlohmann::json::array();
    for (std::size_t i = 0; i < r.rows(); ++i) {
        const auto row = r.row(i);
        corr.push_back(std::vector<double>(row.begin(), row.end()));
    }
    return {{"layer", lm.richness.layer},
            {"n", lm.richness.n},
            {"xi", lm.xi},
            {"richness", lm.richness.values},
            {"correlation", std::move(corr)}};
}

inline LayerMetrics layer_metrics_from_json(const nlohmann::json& j) {
    try {
        LayerMetrics lm;
        lm.xi = j.at("xi").get<double>();
        const auto layer = j.at("layer").get<std::size_t>();
        const auto n = j.at("n").get<std::size_t>();
        lm.richness = {layer, j.at("richness").get<std::vector<double>>(), n};
        const std::size_t h = lm.richness.values.size();
        if (h == 0) throw DataError("metrics: empty richness vector");
        for (double v : lm.richness.values) {
            if (!(v >= 1.0) || !std::isfinite(v)) throw DataError("metrics: richness values must be >= 1");
        }
        const auto rows = j.at("correlation").get<std::vector<std::vector<double>>>();
        if (rows.size() != h) throw DataError("metrics: correlation must be H x H");
        Matrix r(h, h);
        for (std::size_t i = 0; i < h; ++i) {
            if (rows[i].size() != h) throw DataError("metrics: correlation must be H x H");
            for (std::size_t k = 0; k < h; ++k) {
                if (!(rows[i][k] >= 0.0) || !std::isfinite(rows[i][k])) {
                    throw DataError("metrics: correlation entries must be finite and >= 0");
                }
                r(i, k) = rows[i][k];
            }
        }
        for (std::size_t i = 0; i < h; ++i) {
            if (r(i, i) != 0.0) throw DataError("metrics: correlation diagonal must be zero");
            for (std::size_t k = 0; k < i; ++k)
                if (r(i, k) != r(k, i)) throw DataError("metrics: correlation must be symmetric");
        }
        lm.correlation = {layer, std::move(r), n};
        return lm;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("metrics: malformed JSON: ") + e.what());
    }
}

}  // namespace hifi
