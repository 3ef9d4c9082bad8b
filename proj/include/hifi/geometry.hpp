#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "hifi/error.hpp"

namespace hifi {

/// Shape of the multi-head attention stack being analyzed.
struct ModelGeometry {
    std::size_t num_layers = 0;   // L
    std::size_t num_heads = 0;    // H
    std::size_t hidden_dim = 0;   // D
    std::size_t head_dim = 0;     // D' = D / H
    std::size_t max_seq_len = 0;

    friend bool operator==(const ModelGeometry&, const ModelGeometry&) = default;
};

/// Throws DataError unless every field is positive and D' * H == D.
inline void validate(const ModelGeometry& g) {
    if (g.num_layers == 0 || g.num_heads == 0 || g.hidden_dim == 0 || g.head_dim == 0 ||
        g.max_seq_len == 0) {
        throw DataError("geometry: all fields must be >= 1");
    }
    if (g.hidden_dim % g.num_heads != 0) {
        throw DataError("geometry: D not divisible by H");
    }
    if (g.head_dim * g.num_heads != g.hidden_dim) {
        throw DataError("geometry: D_prime * H != D");
    }
}

/// Dense row-major matrix of doubles. Deliberately minimal: the pipeline only
/// needs element access and contiguous storage for I/O.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_) {
            throw std::invalid_argument("Matrix: data size does not match shape");
        }
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    bool all_finite() const noexcept {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// One sample's output of one attention head: an S x D' matrix.
struct HeadOutput {
    std::size_t layer = 0;
    std::size_t head = 0;
    std::string sample_id;
    Matrix data;  // S x D'

    std::size_t seq_len() const noexcept { return data.rows(); }
    std::size_t head_dim() const noexcept { return data.cols(); }

    friend bool operator==(const HeadOutput&, const HeadOutput&) = default;
};

}  // namespace hifi
