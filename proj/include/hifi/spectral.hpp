#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Eigenvalues>

#include "hifi/error.hpp"
#include "hifi/geometry.hpp"

namespace hifi {

/// Singular values of one matrix, sorted descending, length min(S, D').
class SingularSpectrum {
public:
    SingularSpectrum() = default;

    /// Checks the invariants (non-negative, non-increasing) and wraps `values`.
    static SingularSpectrum from_values(std::vector<double> values) {
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
                throw std::invalid_argument("SingularSpectrum: values must be finite and >= 0");
            }
            if (i > 0 && values[i] > values[i - 1]) {
                throw std::invalid_argument("SingularSpectrum: values must be non-increasing");
            }
        }
        SingularSpectrum s;
        s.values_ = std::move(values);
        return s;
    }

    std::span<const double> values() const noexcept { return values_; }
    std::size_t size() const noexcept { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }
    double largest() const noexcept { return values_.empty() ? 0.0 : values_.front(); }

private:
    std::vector<double> values_;
};

/// Singular values via the eigenvalues of the smaller Gram matrix (OᵀO when
/// S >= D', OOᵀ otherwise). The Gram product and eigensolve run in extended
/// precision so that the square root does not amplify roundoff in the null
/// space past ~1e-9 of the largest value. Roundoff negatives down to
/// -1e-10·σ_max² are clamped to zero.
inline SingularSpectrum singular_values(const Matrix& m) {
    using Real = long double;
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

    if (m.rows() == 0 || m.cols() == 0) throw std::invalid_argument("singular_values: empty matrix");
    if (!m.all_finite()) throw DataError("singular_values: non-finite input");

    const bool tall = m.rows() >= m.cols();
    const std::size_t t = tall ? m.cols() : m.rows();
    const std::size_t inner = tall ? m.rows() : m.cols();

    Mat gram(t, t);
    for (std::size_t i = 0; i < t; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            Real acc = 0;
            for (std::size_t k = 0; k < inner; ++k) {
                const Real a = tall ? m(k, i) : m(i, k);
                const Real b = tall ? m(k, j) : m(j, k);
                acc += a * b;
            }
            gram(i, j) = acc;
            gram(j, i) = acc;
        }
    }

    Eigen::SelfAdjointEigenSolver<Mat> solver(gram, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) throw NumericalError("singular_values: eigensolver failed");

    const auto& ev = solver.eigenvalues();  // ascending
    const Real top = std::max<Real>(ev(static_cast<Eigen::Index>(t - 1)), 0);
    std::vector<double> out(t);
    for (std::size_t i = 0; i < t; ++i) {
        Real lambda = ev(static_cast<Eigen::Index>(t - 1 - i));
        if (lambda < 0) {
            if (lambda < Real(-1e-10) * top) {
                throw NumericalError("singular_values: Gram matrix has a significantly negative eigenvalue");
            }
            lambda = 0;
        }
        out[i] = static_cast<double>(std::sqrt(lambda));
    }
    // Extended-precision sqrt then narrowing can break monotonicity by one ulp.
    for (std::size_t i = 1; i < t; ++i) out[i] = std::min(out[i], out[i - 1]);
    return SingularSpectrum::from_values(std::move(out));
}

inline constexpr double kDefaultXi = 0.9;

/// Smallest t (1-based) whose leading singular values carry at least a `xi`
/// share of the spectrum's total mass. Ties at the boundary resolve to the
/// smaller t.
inline std::size_t richness_index(const SingularSpectrum& spectrum, double xi = kDefaultXi) {
    if (!(xi > 0.0 && xi <= 1.0)) throw std::invalid_argument("richness_index: xi must be in (0, 1]");
    if (spectrum.size() == 0) throw std::invalid_argument("richness_index: empty spectrum");

    double total = 0.0;
    for (double v : spectrum.values()) total += v;
    if (total == 0.0) throw NumericalError("richness_index: degenerate output (all-zero spectrum)");

    double cumulative = 0.0;
    for (std::size_t t = 0; t < spectrum.size(); ++t) {
        cumulative += spectrum[t];
        if (cumulative / total >= xi) return t + 1;
    }
    return spectrum.size();
}

}  // namespace hifi
