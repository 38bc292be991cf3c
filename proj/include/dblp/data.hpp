// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dblp/image.hpp"
#include "dblp/tensor.hpp"

namespace dblp {

/// Labeled examples, one row of `x` per example. Image datasets store
/// flattened grayscale rows and record the image extent.
struct Dataset {
    Tensor x;
    std::vector<int> labels;
    int num_classes = 0;
    int image_height = 0;  // 0 for non-image data
    int image_width = 0;

    std::size_t size() const noexcept { return labels.size(); }
    int dim() const noexcept { return static_cast<int>(x.row_size()); }
    bool is_image() const noexcept { return image_height > 0; }
    /// Pixel data lives in [0, 1]; other data is unbounded.
    bool bounded() const noexcept { return is_image(); }

    Dataset subset(std::size_t begin, std::size_t end) const;
    Dataset gather(const std::vector<std::size_t>& indices) const;
    GrayImage image(std::size_t i) const;
    int distinct_labels() const;
};

/// Two anisotropic Gaussian classes in the plane. The first coordinate
/// separates the classes with a wide margin (means -/+ separation, spread
/// `major_std`); the second separates them with a narrow one (means -/+
/// `minor_offset`, spread `minor_std`).
struct Toy2dConfig {
    int n_train = 2000;
    int n_test = 500;
    double separation = 3.0;
    double major_std = 0.25;
    double minor_offset = 0.1;
    double minor_std = 0.02;
};

/// Filled circles, squares and triangles on a noisy background, grayscale.
struct Shapes32Config {
    int n_train = 6000;
    int n_test = 300;
    int size = 32;
    double min_radius = 7.0;
    double max_radius = 11.0;
    double max_offset = 4.0;
    double background_noise = 0.03;
};

struct DataSplit {
    Dataset train;
    Dataset test;
};

DataSplit generate_toy2d(const Toy2dConfig& cfg, Rng& rng);
DataSplit generate_shapes32(const Shapes32Config& cfg, Rng& rng);

/// `<dir>/<name>_x.{bin,json}` and `<dir>/<name>_labels.csv`. Returns the files written.
std::vector<std::filesystem::path> save_dataset(const Dataset& d, const std::filesystem::path& dir,
                                                const std::string& name);
Dataset load_dataset(const std::filesystem::path& dir, const std::string& name);

/// Row i of a flattened image tensor as an image (values clamped to [0, 1]).
GrayImage row_as_image(const Tensor& x, std::size_t i, int height, int width);

}  // namespace dblp
