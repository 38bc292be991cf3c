// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/semantic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include <boost/multiprecision/cpp_int.hpp>

#include "dblp/errors.hpp"

namespace dblp::semantic {

namespace {

using boost::multiprecision::int256_t;

// Mirror without repeating the edge sample: -1 -> 1, n -> n - 2.
int mirror(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

std::vector<int> mirrored_indices(int n, int r) {
    std::vector<int> idx(static_cast<std::size_t>(n + 2 * r));
    for (int i = -r; i < n + r; ++i) idx[static_cast<std::size_t>(i + r)] = mirror(i, n);
    return idx;
}

Plane convolve_rows(const Plane& src, const std::vector<double>& taps) {
    const int r = static_cast<int>(taps.size() / 2);
    const auto idx = mirrored_indices(src.width, r);
    Plane out(src.height, src.width);
    for (int y = 0; y < src.height; ++y) {
        const double* in = &src.values[static_cast<std::size_t>(y) * static_cast<std::size_t>(src.width)];
        double* o = &out.values[static_cast<std::size_t>(y) * static_cast<std::size_t>(src.width)];
        for (int x = 0; x < src.width; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < taps.size(); ++k) acc += taps[k] * in[idx[static_cast<std::size_t>(x) + k]];
            o[x] = acc;
        }
    }
    return out;
}

Plane convolve_cols(const Plane& src, const std::vector<double>& taps) {
    const int r = static_cast<int>(taps.size() / 2);
    const auto idx = mirrored_indices(src.height, r);
    const auto w = static_cast<std::size_t>(src.width);
    Plane out(src.height, src.width);
    for (int y = 0; y < src.height; ++y) {
        double* o = &out.values[static_cast<std::size_t>(y) * w];
        for (std::size_t k = 0; k < taps.size(); ++k) {
            const double* in = &src.values[static_cast<std::size_t>(idx[static_cast<std::size_t>(y) + k]) * w];
            for (std::size_t x = 0; x < w; ++x) o[x] += taps[k] * in[x];
        }
    }
    return out;
}

struct OtsuScore {
    int256_t numerator;    // (N S0 - n0 S)^2
    int256_t denominator;  // n0 n1
};

// Between-class variance is numerator / (N^2 denominator); N is fixed per image,
// so scores compare as fractions.
OtsuScore otsu_score(std::int64_t n_total, std::int64_t s_total, std::int64_t n0, std::int64_t s0) {
    const std::int64_t n1 = n_total - n0;
    if (n0 == 0 || n1 == 0) return {0, 1};
    const int256_t a = int256_t(n_total) * s0 - int256_t(n0) * s_total;
    return {a * a, int256_t(n0) * n1};
}

bool better(const OtsuScore& lhs, const OtsuScore& rhs) {
    return lhs.numerator * rhs.denominator > rhs.numerator * lhs.denominator;
}

}  // namespace

std::vector<double> gaussian_kernel(double sigma) {
    if (!(sigma > 0.0)) return {1.0};
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> taps(static_cast<std::size_t>(2 * r + 1));
    double sum = 0.0;
    for (int k = -r; k <= r; ++k) {
        const double v = std::exp(-(k * k) / (2.0 * sigma * sigma));
        taps[static_cast<std::size_t>(k + r)] = v;
        sum += v;
    }
    for (double& v : taps) v /= sum;
    return taps;
}

GrayImage gaussian_blur(const GrayImage& img, double sigma) {
    if (sigma < 0.0) throw DomainError("gaussian_blur: sigma must be >= 0");
    if (sigma == 0.0) return img;
    const auto taps = gaussian_kernel(sigma);
    return GrayImage::from_plane(convolve_cols(convolve_rows(img.plane(), taps), taps));
}

std::array<std::int64_t, 256> histogram256(const GrayImage& img) {
    std::array<std::int64_t, 256> hist{};
    for (double p : img.pixels()) {
        const long bin = std::lround(std::clamp(p, 0.0, 1.0) * 255.0);
        ++hist[static_cast<std::size_t>(bin)];
    }
    return hist;
}

double between_class_variance(const std::array<std::int64_t, 256>& hist, int k) {
    std::int64_t n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (int b = 0; b < 256; ++b) {
        const auto c = hist[static_cast<std::size_t>(b)];
        if (b <= k) {
            n0 += c;
            s0 += c * b;
        } else {
            n1 += c;
            s1 += c * b;
        }
    }
    if (n0 == 0 || n1 == 0) return 0.0;
    const double n = static_cast<double>(n0 + n1);
    const double diff = static_cast<double>(s0) / n0 - static_cast<double>(s1) / n1;
    return (n0 / n) * (n1 / n) * diff * diff;
}

int otsu_bin(const GrayImage& img) {
    const auto hist = histogram256(img);
    const auto distinct = std::count_if(hist.begin(), hist.end(), [](std::int64_t c) { return c > 0; });
    if (distinct < 2) throw DomainError("otsu_threshold: no threshold for an image with a single gray level");

    std::int64_t n_total = 0, s_total = 0;
    for (int b = 0; b < 256; ++b) {
        n_total += hist[static_cast<std::size_t>(b)];
        s_total += hist[static_cast<std::size_t>(b)] * b;
    }
    std::int64_t n0 = 0, s0 = 0;
    int best_k = 0;
    OtsuScore best{-1, 1};
    for (int k = 0; k < 255; ++k) {
        const auto c = hist[static_cast<std::size_t>(k)];
        // An empty bin repeats the previous score, which never wins a strict comparison.
        if (c == 0) continue;
        n0 += c;
        s0 += c * k;
        const OtsuScore score = otsu_score(n_total, s_total, n0, s0);
        if (better(score, best)) {
            best = score;
            best_k = k;
        }
    }
    return best_k;
}

double otsu_threshold(const GrayImage& img) { return otsu_bin(img) / 255.0; }

void sobel(const Plane& img, Plane& gx, Plane& gy) {
    gx = Plane(img.height, img.width);
    gy = Plane(img.height, img.width);
    for (int y = 0; y < img.height; ++y) {
        const int ym = std::clamp(y - 1, 0, img.height - 1);
        const int yp = std::clamp(y + 1, 0, img.height - 1);
        for (int x = 0; x < img.width; ++x) {
            const int xm = std::clamp(x - 1, 0, img.width - 1);
            const int xp = std::clamp(x + 1, 0, img.width - 1);
            gx.at(y, x) = (img.at(ym, xp) + 2.0 * img.at(y, xp) + img.at(yp, xp)) -
                          (img.at(ym, xm) + 2.0 * img.at(y, xm) + img.at(yp, xm));
            gy.at(y, x) = (img.at(yp, xm) + 2.0 * img.at(yp, x) + img.at(yp, xp)) -
                          (img.at(ym, xm) + 2.0 * img.at(ym, x) + img.at(ym, xp));
        }
    }
}

GrayImage canny(const GrayImage& img, double high_threshold) {
    if (!(high_threshold > 0.0 && high_threshold <= 1.0)) {
        throw DomainError("canny: high threshold must lie in (0, 1]");
    }
    const double low_threshold = 0.5 * high_threshold;
    const int h = img.height();
    const int w = img.width();
    Plane gx, gy;
    sobel(img.plane(), gx, gy);
    Plane mag(h, w);
    for (std::size_t i = 0; i < mag.size(); ++i) mag.values[i] = std::hypot(gx.values[i], gy.values[i]);

    auto mag_at = [&](int y, int x) { return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : mag.at(y, x); };

    // Non-maximum suppression. The neighbor earlier in raster order must be
    // strictly smaller, the later one no larger, so plateaus thin to one pixel.
    Plane thin(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double m = mag.at(y, x);
            if (m <= 0.0) continue;
            double angle = std::atan2(gy.at(y, x), gx.at(y, x)) * 180.0 / M_PI;
            if (angle < 0.0) angle += 180.0;
            int dy, dx;
            if (angle < 22.5 || angle >= 157.5) {
                dy = 0, dx = 1;
            } else if (angle < 67.5) {
                dy = 1, dx = 1;
            } else if (angle < 112.5) {
                dy = 1, dx = 0;
            } else {
                dy = 1, dx = -1;
            }
            const double before = mag_at(y - dy, x - dx);
            const double after = mag_at(y + dy, x + dx);
            if (m > before && m >= after) thin.at(y, x) = m;
        }
    }

    GrayImage edges(h, w, 0.0);
    std::deque<std::pair<int, int>> frontier;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (thin.at(y, x) > high_threshold) {
                edges.set(y, x, 1.0);
                frontier.emplace_back(y, x);
            }
        }
    }
    while (!frontier.empty()) {
        const auto [y, x] = frontier.front();
        frontier.pop_front();
        for (int ddy = -1; ddy <= 1; ++ddy) {
            for (int ddx = -1; ddx <= 1; ++ddx) {
                const int ny = y + ddy, nx = x + ddx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                if (edges.at(ny, nx) == 0.0 && thin.at(ny, nx) > low_threshold) {
                    edges.set(ny, nx, 1.0);
                    frontier.emplace_back(ny, nx);
                }
            }
        }
    }
    return edges;
}

std::vector<Plane> fusion_weights(const GrayImage& adv_img, const EdgePyramid& pyramid, double temperature) {
    if (!(temperature > 0.0)) throw DomainError("fusion_weights: temperature must be > 0");
    const int levels = pyramid.levels();
    if (levels < 1) throw ShapeError("fusion_weights: empty pyramid");
    Plane gx, gy;
    sobel(adv_img.plane(), gx, gy);

    std::vector<Plane> dist;
    dist.reserve(static_cast<std::size_t>(levels));
    for (const auto& e : pyramid.edge_maps) {
        if (e.height() != adv_img.height() || e.width() != adv_img.width()) {
            throw ShapeError("fusion_weights: edge map resolution differs from the image");
        }
        Plane ex, ey;
        sobel(e.plane(), ex, ey);
        Plane d(e.height(), e.width());
        for (std::size_t i = 0; i < d.size(); ++i) d.values[i] = std::hypot(gx.values[i] - ex.values[i], gy.values[i] - ey.values[i]);
        dist.push_back(std::move(d));
    }

    std::vector<Plane> weights(static_cast<std::size_t>(levels), Plane(adv_img.height(), adv_img.width()));
    for (std::size_t i = 0; i < adv_img.size(); ++i) {
        double dmin = std::numeric_limits<double>::infinity();
        for (const auto& d : dist) dmin = std::min(dmin, d.values[i]);
        double sum = 0.0;
        for (std::size_t l = 0; l < dist.size(); ++l) {
            const double v = std::exp(-(dist[l].values[i] - dmin) / temperature);
            weights[l].values[i] = v;
            sum += v;
        }
        for (auto& wl : weights) wl.values[i] /= sum;
    }
    return weights;
}

FusedEdgeMap fuse(const EdgePyramid& pyramid, std::vector<Plane> weights, double temperature) {
    if (weights.size() != pyramid.edge_maps.size() || weights.empty()) {
        throw ShapeError("fuse: " + std::to_string(weights.size()) + " weight maps for " +
                         std::to_string(pyramid.edge_maps.size()) + " levels");
    }
    const int h = pyramid.edge_maps.front().height();
    const int w = pyramid.edge_maps.front().width();
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].height != h || weights[l].width != w || pyramid.edge_maps[l].height() != h ||
            pyramid.edge_maps[l].width() != w) {
            throw ShapeError("fuse: level extents differ");
        }
    }
    Plane fused(h, w);
    for (std::size_t i = 0; i < fused.size(); ++i) {
        double num = 0.0, den = 0.0;
        for (std::size_t l = 0; l < weights.size(); ++l) {
            num += weights[l].values[i] * pyramid.edge_maps[l].pixels()[i];
            den += weights[l].values[i];
        }
        // Dividing by the weight sum (1 up to rounding) keeps equal levels exact.
        fused.values[i] = num / den;
    }
    return {std::move(weights), GrayImage::from_plane(fused), temperature};
}

Plane resize_bilinear(const Plane& src, int height, int width) {
    Plane out(height, width);
    const double sy = static_cast<double>(src.height) / height;
    const double sx = static_cast<double>(src.width) / width;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, src.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, src.width - 1);
            const double wx = fx - x0;
            out.at(y, x) = (1 - wy) * ((1 - wx) * src.at(y0, x0) + wx * src.at(y0, x1)) +
                           wy * ((1 - wx) * src.at(y1, x0) + wx * src.at(y1, x1));
        }
    }
    return out;
}

EdgePyramid build_pyramid(const GrayImage& img, const SemanticConfig& cfg) {
    if (cfg.sigmas.empty()) throw ConfigError("semantic.sigmas", "need at least one level");
    EdgePyramid pyr;
    pyr.sigmas = cfg.sigmas;
    for (std::size_t l = 0; l < cfg.sigmas.size(); ++l) {
        GrayImage level = gaussian_blur(img, cfg.sigmas[l]);
        const int factor = cfg.subsample ? (1 << l) : 1;
        if (factor > 1) {
            const int h = std::max(1, img.height() / factor);
            const int w = std::max(1, img.width() / factor);
            level = GrayImage::from_plane(resize_bilinear(level.plane(), h, w));
        }
        GrayImage edges(level.height(), level.width(), 0.0);
        try {
            // A zero Otsu bin would make the high threshold 0; one gray level is the smallest step.
            const double high = std::max(otsu_threshold(level), 1.0 / 255.0);
            edges = canny(level, high);
        } catch (const DomainError&) {
            // Single gray level: no edges at this scale.
        }
        if (factor > 1) {
            Plane up = resize_bilinear(edges.plane(), img.height(), img.width());
            for (double& v : up.values) v = v >= 0.5 ? 1.0 : 0.0;
            edges = GrayImage::from_plane(up);
        }
        pyr.edge_maps.push_back(std::move(edges));
    }
    return pyr;
}

FusedEdgeMap build_condition(const GrayImage& adv_img, const SemanticConfig& cfg) {
    const EdgePyramid pyr = build_pyramid(adv_img, cfg);
    return fuse(pyr, fusion_weights(adv_img, pyr, cfg.temperature), cfg.temperature);
}

}  // namespace dblp::semantic
