// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dblp/image.hpp"

namespace dblp::semantic {

/// Per-level binary edge maps, all at the source image's resolution.
struct EdgePyramid {
    std::vector<double> sigmas;
    std::vector<GrayImage> edge_maps;  // values in {0, 1}

    int levels() const noexcept { return static_cast<int>(edge_maps.size()); }
};

/// Fusion weights (one map per level, summing to 1 per pixel) and the fused condition map.
struct FusedEdgeMap {
    std::vector<Plane> weights;
    GrayImage fused;
    double temperature = 1.0;
};

struct SemanticConfig {
    std::vector<double> sigmas{0.5, 1.0, 2.0};
    double temperature = 1.0;
    /// Blur-then-subsample pyramid (factor 2 per level) with bilinear upsampling
    /// back to full resolution. Off: every level stays at full resolution.
    bool subsample = false;
};

/// Separable Gaussian blur, kernel radius ceil(3 sigma), mirrored border
/// (edge pixel not repeated). sigma = 0 returns the input.
GrayImage gaussian_blur(const GrayImage& img, double sigma);

/// Normalized 1-D Gaussian taps of length 2 ceil(3 sigma) + 1.
std::vector<double> gaussian_kernel(double sigma);

/// 256-bin histogram of round(255 p).
std::array<std::int64_t, 256> histogram256(const GrayImage& img);

/// Between-class variance w0 w1 (mu0 - mu1)^2 on bin indices for the split
/// {bins <= k} | {bins > k}. Zero when a class is empty.
double between_class_variance(const std::array<std::int64_t, 256>& hist, int k);

/// Otsu threshold bin k in [0, 254] maximizing between-class variance; ties
/// go to the lowest k. Comparisons are exact (integer arithmetic). Throws
/// DomainError when the image has fewer than two distinct quantized values.
int otsu_bin(const GrayImage& img);
/// otsu_bin / 255.
double otsu_threshold(const GrayImage& img);

/// 3x3 Sobel derivatives with mirrored border (unnormalized; a unit step gives magnitude 4).
void sobel(const Plane& img, Plane& gx, Plane& gy);

/// Canny: Sobel gradients, non-maximum suppression over 4 quantized
/// directions, double threshold (low = 0.5 high), 8-connected hysteresis.
/// Thresholds apply to Sobel magnitudes of the [0, 1] image. Output in {0, 1}.
GrayImage canny(const GrayImage& img, double high_threshold);

/// A_l(p) = softmax_l(-|grad x(p) - grad E_l(p)|_2 / T).
std::vector<Plane> fusion_weights(const GrayImage& adv_img, const EdgePyramid& pyramid, double temperature);

/// Pixelwise sum of A_l * E_l. Throws ShapeError on level-count or extent mismatch.
FusedEdgeMap fuse(const EdgePyramid& pyramid, std::vector<Plane> weights, double temperature);

/// Blur, Otsu and Canny per level. A level whose blurred image has no Otsu
/// threshold contributes an all-zero map.
EdgePyramid build_pyramid(const GrayImage& img, const SemanticConfig& cfg);

/// Full pipeline: pyramid, fusion weights against `adv_img`, fused map.
FusedEdgeMap build_condition(const GrayImage& adv_img, const SemanticConfig& cfg);

/// Bilinear resize (align-corners off, pixel-center sampling).
Plane resize_bilinear(const Plane& src, int height, int width);

}  // namespace dblp::semantic
