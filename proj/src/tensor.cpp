// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "dblp/errors.hpp"

namespace dblp {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != element_count(shape_)) {
        throw ShapeError("tensor data has " + std::to_string(data_.size()) + " elements, shape " +
                         shape_string(shape_) + " needs " + std::to_string(element_count(shape_)));
    }
}

Tensor Tensor::from_matrix(const RowMatrix& m) {
    Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    t.matrix() = m;
    return t;
}

std::size_t Tensor::row_size() const noexcept {
    const std::size_t r = rows();
    return r == 0 ? 0 : data_.size() / r;
}

std::span<double> Tensor::row(std::size_t i) {
    const std::size_t n = row_size();
    return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::row(std::size_t i) const {
    const std::size_t n = row_size();
    return std::span<const double>(data_).subspan(i * n, n);
}

MatrixMap Tensor::matrix() {
    return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(row_size()));
}

ConstMatrixMap Tensor::matrix() const {
    return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                          static_cast<Eigen::Index>(row_size()));
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (element_count(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor Tensor::slice_rows(std::size_t begin, std::size_t end) const {
    if (begin > end || end > rows()) {
        throw ShapeError("row slice out of range");
    }
    std::vector<std::size_t> shape = shape_;
    shape.front() = end - begin;
    const std::size_t n = row_size();
    return Tensor(std::move(shape), std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * n),
                                                        data_.begin() + static_cast<std::ptrdiff_t>(end * n)));
}

Tensor Tensor::gather_rows(std::span<const std::size_t> indices) const {
    std::vector<std::size_t> shape = shape_;
    shape.front() = indices.size();
    Tensor out(std::move(shape));
    const std::size_t n = row_size();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= rows()) {
            throw ShapeError("row index out of range");
        }
        std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(indices[i] * n), n,
                    out.data_.begin() + static_cast<std::ptrdiff_t>(i * n));
    }
    return out;
}

bool Tensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ", ";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
    }
}

void Rng::fill_normal(Tensor& t) {
    for (double& v : t.data()) v = normal();
}

Tensor Rng::normal_like(const Tensor& t) {
    Tensor out = Tensor::zeros_like(t);
    fill_normal(out);
    return out;
}

}  // namespace dblp
