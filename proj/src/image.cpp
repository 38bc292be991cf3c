// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/image.hpp"

#include <algorithm>
#include <string>

#include "dblp/errors.hpp"

namespace dblp {

Plane::Plane(int h, int w, double fill)
    : height(h), width(w), values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
    if (h < 0 || w < 0) throw ShapeError("negative image extent");
}

GrayImage::GrayImage(int height, int width, double fill) : plane_(height, width, std::clamp(fill, 0.0, 1.0)) {}

GrayImage::GrayImage(int height, int width, std::vector<double> pixels) {
    if (height <= 0 || width <= 0 ||
        pixels.size() != static_cast<std::size_t>(height) * static_cast<std::size_t>(width)) {
        throw ShapeError("image of " + std::to_string(height) + "x" + std::to_string(width) + " given " +
                         std::to_string(pixels.size()) + " pixels");
    }
    for (double v : pixels) {
        if (!(v >= 0.0 && v <= 1.0)) throw DomainError("pixel value outside [0, 1]");
    }
    plane_.height = height;
    plane_.width = width;
    plane_.values = std::move(pixels);
}

void GrayImage::set(int y, int x, double v) { plane_.at(y, x) = std::clamp(v, 0.0, 1.0); }

GrayImage GrayImage::from_plane(const Plane& p) {
    GrayImage img;
    img.plane_ = p;
    for (double& v : img.plane_.values) v = std::clamp(v, 0.0, 1.0);
    return img;
}

GrayImage to_luminance(const RgbImage& img) {
    if (img.rgb.size() != 3 * static_cast<std::size_t>(img.height) * static_cast<std::size_t>(img.width)) {
        throw ShapeError("rgb buffer does not match image extent");
    }
    Plane p(img.height, img.width);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p.values[i] = 0.299 * img.rgb[3 * i] + 0.587 * img.rgb[3 * i + 1] + 0.114 * img.rgb[3 * i + 2];
    }
    return GrayImage::from_plane(p);
}

}  // namespace dblp
