// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

namespace dblp {

/// Real-valued 2-D grid, row-major. Used for gradients and other unbounded maps.
struct Plane {
    int height = 0;
    int width = 0;
    std::vector<double> values;

    Plane() = default;
    Plane(int h, int w, double fill = 0.0);

    double& at(int y, int x) { return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
    double at(int y, int x) const { return values[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)]; }
    std::size_t size() const noexcept { return values.size(); }
};

/// Grayscale image with pixels in [0, 1].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int height, int width, double fill = 0.0);
    /// Throws DomainError unless every pixel lies in [0, 1] and the size matches.
    GrayImage(int height, int width, std::vector<double> pixels);

    int height() const noexcept { return plane_.height; }
    int width() const noexcept { return plane_.width; }
    std::size_t size() const noexcept { return plane_.size(); }

    double at(int y, int x) const { return plane_.at(y, x); }
    /// Writes clamp(v, 0, 1).
    void set(int y, int x, double v);

    std::span<const double> pixels() const noexcept { return plane_.values; }
    const Plane& plane() const noexcept { return plane_; }

    /// Clamps into [0, 1].
    static GrayImage from_plane(const Plane& p);

    bool operator==(const GrayImage& other) const { return plane_.height == other.plane_.height && plane_.width == other.plane_.width && plane_.values == other.plane_.values; }

private:
    Plane plane_;
};

/// Interleaved RGB image with channels in [0, 1].
struct RgbImage {
    int height = 0;
    int width = 0;
    std::vector<double> rgb;  // size 3 * height * width
};

/// 0.299 R + 0.587 G + 0.114 B.
GrayImage to_luminance(const RgbImage& img);

}  // namespace dblp
