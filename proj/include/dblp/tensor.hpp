// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dblp {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

/// Dense row-major n-dimensional array of doubles.
///
/// The leading axis is the batch axis; `matrix()` views the tensor as
/// (batch, product of remaining extents) for the linear algebra in the
/// network code.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor zeros_like(const Tensor& other) { return Tensor(other.shape_); }
    static Tensor from_matrix(const RowMatrix& m);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    /// Extent of the leading axis (1 for rank-0 tensors).
    std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_.front(); }
    /// Number of scalars per leading-axis entry.
    std::size_t row_size() const noexcept;

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& storage() noexcept { return data_; }
    const std::vector<double>& storage() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    std::span<double> row(std::size_t i);
    std::span<const double> row(std::size_t i) const;

    MatrixMap matrix();
    ConstMatrixMap matrix() const;

    /// Same data, new shape. Throws ShapeError when the element count differs.
    Tensor reshaped(std::vector<std::size_t> shape) const;
    /// Rows [begin, end) of the leading axis.
    Tensor slice_rows(std::size_t begin, std::size_t end) const;
    /// Rows at the given indices, in order.
    Tensor gather_rows(std::span<const std::size_t> indices) const;

    bool all_finite() const noexcept;

    bool operator==(const Tensor& other) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Throws ShapeError naming `what` when the two shapes differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Explicitly seeded random source. Every stochastic operation takes one by reference.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }
    bool bernoulli(double p) { return uniform() < p; }

    void fill_normal(Tensor& t);
    Tensor normal_like(const Tensor& t);

    /// Independent child stream; advances this stream by one draw.
    Rng split() { return Rng(engine_()); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace dblp
