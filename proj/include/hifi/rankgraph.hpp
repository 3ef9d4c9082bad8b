#pragma once

// Head graph and its damped PageRank stationary distribution.
//
// Node h starts with probability proportional to its richness; the move
// probability h -> h' is r(h,h') normalized over row h. Iteration applies the
// transpose of the row-stochastic transition matrix, so each head receives
// mass along its in-edges and every iterate stays on the probability simplex:
//
//   P <- d * Mᵀ P + (1 - d) / H
//
// Orientation::untransposed applies M itself and renormalizes each iterate
// onto the simplex; it exists only for comparison.

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "hifi/error.hpp"
#include "hifi/geometry.hpp"
#include "hifi/metrics.hpp"

namespace hifi {

struct HeadGraph {
    std::vector<double> p0;  // initial node probabilities
    Matrix m;                // row h: move probabilities out of head h

    std::size_t size() const noexcept { return p0.size(); }
};

enum class Orientation { transposed, untransposed };

struct PageRankOptions {
    double damping = 0.85;
    double epsilon = 1e-6;
    std::size_t max_iter = 10000;
    Orientation orientation = Orientation::transposed;
};

struct PageRankResult {
    std::vector<double> p_star;
    std::size_t iterations = 0;
    double residual = 0.0;  // L1 change of the final update
    double damping = 0.85;
    double epsilon = 1e-6;

    friend bool operator==(const PageRankResult&, const PageRankResult&) = default;
};

/// Raised when max_iter updates do not bring the L1 change under epsilon.
class ConvergenceError : public NumericalError {
public:
    ConvergenceError(const std::string& what, PageRankResult last)
        : NumericalError(what), last_(std::move(last)) {}
    const PageRankResult& last_iterate() const noexcept { return last_; }

private:
    PageRankResult last_;
};

inline std::vector<double> initial_distribution(std::span<const double> richness) {
    if (richness.empty()) throw std::invalid_argument("initial_distribution: no heads");
    double total = 0.0;
    for (double v : richness) {
        if (!(v > 0.0) || !std::isfinite(v)) {
            throw std::invalid_argument("initial_distribution: richness values must be positive");
        }
        total += v;
    }
    std::vector<double> p(richness.size());
    for (std::size_t h = 0; h < p.size(); ++h) p[h] = richness[h] / total;
    return p;
}

inline std::vector<double> initial_distribution(const RichnessScores& scores) {
    return initial_distribution(scores.values);
}

/// Row-normalizes R off the diagonal. A row with zero total correlation
/// becomes uniform over the other H-1 heads (dangling-node convention).
inline Matrix transition_matrix(const Matrix& r) {
    const std::size_t h = r.rows();
    if (h < 2 || r.cols() != h) throw std::invalid_argument("transition_matrix: need a square R with H >= 2");

    Matrix m(h, h, 0.0);
    for (std::size_t i = 0; i < h; ++i) {
        double total = 0.0;
        for (std::size_t j = 0; j < h; ++j) {
            if (j == i) continue;
            if (!(r(i, j) >= 0.0) || !std::isfinite(r(i, j))) {
                throw std::invalid_argument("transition_matrix: R entries must be finite and >= 0");
            }
            total += r(i, j);
        }
        for (std::size_t j = 0; j < h; ++j) {
            if (j == i) continue;
            m(i, j) = total > 0.0 ? r(i, j) / total : 1.0 / static_cast<double>(h - 1);
        }
    }
    return m;
}

inline Matrix transition_matrix(const CorrelationMatrix& r) { return transition_matrix(r.r); }

inline HeadGraph build_graph(const RichnessScores& scores, const CorrelationMatrix& r) {
    if (scores.values.size() != r.size()) throw std::invalid_argument("build_graph: head count mismatch");
    return {initial_distribution(scores), transition_matrix(r)};
}

namespace detail {

inline void check_graph(const HeadGraph& g) {
    const std::size_t h = g.size();
    if (h < 2 || g.m.rows() != h || g.m.cols() != h) {
        throw std::invalid_argument("pagerank: graph must have H >= 2 and an H x H transition matrix");
    }
}

}  // namespace detail

/// Damped power iteration from p0 until the L1 change is <= epsilon.
/// `on_iterate`, when set, observes every iterate after it is produced.
inline PageRankResult pagerank(const HeadGraph& g, const PageRankOptions& opt = {},
                               const std::function<void(std::span<const double>)>& on_iterate = {}) {
    detail::check_graph(g);
    if (!(opt.damping >= 0.0 && opt.damping < 1.0)) throw std::invalid_argument("pagerank: d must be in [0, 1)");
    if (!(opt.epsilon > 0.0)) throw std::invalid_argument("pagerank: epsilon must be > 0");
    if (opt.max_iter == 0) throw std::invalid_argument("pagerank: max_iter must be >= 1");

    const std::size_t h = g.size();
    const double teleport = (1.0 - opt.damping) / static_cast<double>(h);
    std::vector<double> prev = g.p0;
    std::vector<double> next(h);
    PageRankResult res{{}, 0, 0.0, opt.damping, opt.epsilon};

    for (std::size_t t = 1; t <= opt.max_iter; ++t) {
        for (std::size_t j = 0; j < h; ++j) {
            double acc = 0.0;
            if (opt.orientation == Orientation::transposed) {
                for (std::size_t i = 0; i < h; ++i) acc += g.m(i, j) * prev[i];
            } else {
                for (std::size_t i = 0; i < h; ++i) acc += g.m(j, i) * prev[i];
            }
            next[j] = opt.damping * acc + teleport;
        }
        if (opt.orientation == Orientation::untransposed) {
            const double total = std::accumulate(next.begin(), next.end(), 0.0);
            for (double& v : next) v /= total;
        }

        double residual = 0.0;
        for (std::size_t j = 0; j < h; ++j) residual += std::abs(next[j] - prev[j]);
        if (on_iterate) on_iterate(next);

        res.iterations = t;
        res.residual = residual;
        prev.swap(next);
        if (residual <= opt.epsilon) {
            res.p_star = std::move(prev);
            return res;
        }
    }
    res.p_star = std::move(prev);
    throw ConvergenceError("pagerank: no convergence after " + std::to_string(opt.max_iter) +
                               " iterations (residual " + std::to_string(res.residual) + ")",
                           std::move(res));
}

/// Exact fixed point of the transposed iteration, from the dense system
/// (I - d Mᵀ) P = (1 - d) / H · 1.
inline std::vector<double> pagerank_direct(const HeadGraph& g, double d) {
    detail::check_graph(g);
    if (!(d >= 0.0 && d < 1.0)) throw std::invalid_argument("pagerank_direct: d must be in [0, 1)");

    const auto h = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(h, h);
    for (Eigen::Index i = 0; i < h; ++i)
        for (Eigen::Index j = 0; j < h; ++j) a(j, i) -= d * g.m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
    const Eigen::VectorXd rhs = Eigen::VectorXd::Constant(h, (1.0 - d) / static_cast<double>(h));

    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw NumericalError("pagerank_direct: singular system");
    const Eigen::VectorXd p = lu.solve(rhs);
    return {p.data(), p.data() + h};
}

// ---------------------------------------------------------------------------
// JSON: {"layer", "d", "epsilon", "iterations", "residual", "pagerank": [H]}

inline nlohmann::json to_json(const PageRankResult& r, std::size_t layer) {
    return {{"layer", layer},
            {"d", r.damping},
            {"epsilon", r.epsilon},
            {"iterations", r.iterations},
            {"residual", r.residual},
            {"pagerank", r.p_star}};
}

inline PageRankResult pagerank_result_from_json(const nlohmann::json& j) {
    try {
        PageRankResult r;
        r.damping = j.at("d").get<double>();
        r.epsilon = j.at("epsilon").get<double>();
        r.iterations = j.at("iterations").get<std::size_t>();
        r.residual = j.at("residual").get<double>();
        r.p_star = j.at("pagerank").get<std::vector<double>>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("pagerank: malformed JSON: ") + e.what());
    }
}

}  // namespace hifi
