// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dblp/data.hpp"
#include "dblp/errors.hpp"
#include "dblp/image.hpp"
#include "dblp/semantic.hpp"
#include "support.hpp"

using namespace dblp;
using namespace dblp::semantic;

namespace {

GrayImage random_image(Rng& rng, int h, int w) {
    GrayImage img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) img.set(y, x, rng.uniform());
    return img;
}

GrayImage step_image(int h, int w, int column) {
    GrayImage img(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = column; x < w; ++x) img.set(y, x, 1.0);
    return img;
}

// Independent between-class variance: w0 w1 (mu0 - mu1)^2 on bin indices, class 0 = bins <= k.
double reference_variance(const std::array<std::int64_t, 256>& hist, int k) {
    double n0 = 0, n1 = 0, m0 = 0, m1 = 0;
    for (int b = 0; b < 256; ++b) {
        (b <= k ? n0 : n1) += static_cast<double>(hist[b]);
        (b <= k ? m0 : m1) += static_cast<double>(hist[b]) * b;
    }
    if (n0 == 0 || n1 == 0) return 0.0;
    const double n = n0 + n1;
    return (n0 / n) * (n1 / n) * std::pow(m0 / n0 - m1 / n1, 2);
}

}  // namespace

TEST_CASE("blur with zero sigma is the identity") {
    Rng rng(1);
    const auto img = random_image(rng, 9, 7);
    CHECK(gaussian_blur(img, 0.0) == img);
}

TEST_CASE("blur keeps constant images") {
    const GrayImage img(10, 12, 0.37);
    for (double s : {0.5, 1.0, 2.5}) {
        const auto out = gaussian_blur(img, s);
        for (double v : out.pixels()) CHECK(v == doctest::Approx(0.37).epsilon(1e-14));
    }
}

TEST_CASE("blurred impulse is the sampled Gaussian") {
    const auto k = gaussian_kernel(1.0);
    REQUIRE(k.size() == 7);
    double sum = 0.0;
    for (double v : k) sum += v;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    double norm = 0.0;
    for (int i = -3; i <= 3; ++i) norm += std::exp(-0.5 * i * i);
    for (int i = -3; i <= 3; ++i) CHECK(k[i + 3] == doctest::Approx(std::exp(-0.5 * i * i) / norm).epsilon(1e-14));

    GrayImage img(15, 15);
    img.set(7, 7, 1.0);
    const auto out = gaussian_blur(img, 1.0);
    double total = 0.0;
    for (int y = 0; y < 15; ++y) {
        for (int x = 0; x < 15; ++x) {
            const int dy = y - 7, dx = x - 7;
            const double expect = (std::abs(dy) <= 3 && std::abs(dx) <= 3) ? k[dy + 3] * k[dx + 3] : 0.0;
            CHECK(out.at(y, x) == doctest::Approx(expect).epsilon(1e-12).scale(1e-15));
            total += out.at(y, x);
        }
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
}

TEST_CASE("otsu rejects single-level images") {
    CHECK_THROWS_AS(otsu_threshold(GrayImage(4, 4, 0.5)), DomainError);
}

TEST_CASE("otsu picks the lowest maximizer of a plateau") {
    GrayImage img(4, 4);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) img.set(y, x, x < 2 ? 10.0 / 255.0 : 200.0 / 255.0);
    CHECK(otsu_threshold(img) == 10.0 / 255.0);
}

TEST_CASE("otsu matches exhaustive search on random images") {
    Rng rng(2);
    for (int rep = 0; rep < 100; ++rep) {
        GrayImage img = random_image(rng, 16, 16);
        if (rep % 3 == 0) img = gaussian_blur(img, 1.0);
        const auto hist = histogram256(img);
        const int k = otsu_bin(img);
        double best = -1.0;
        int arg = -1;
        for (int t = 0; t < 256; ++t) {
            const double v = between_class_variance(hist, t);
            if (v > best) {
                best = v;
                arg = t;
            }
        }
        CHECK(between_class_variance(hist, k) == best);
        CHECK(k == arg);
        CHECK(reference_variance(hist, k) == doctest::Approx(best).epsilon(1e-12));
    }
}

TEST_CASE("canny on constant, step and checkerboard images") {
    const auto flat = canny(GrayImage(8, 8, 0.4), 0.5);
    for (double v : flat.pixels()) CHECK(v == 0.0);

    const auto edges = canny(step_image(8, 8, 4), 0.5);
    int count = 0, column = -1;
    for (int y = 0; y < 8; ++y) {
        int in_row = 0;
        for (int x = 0; x < 8; ++x) {
            if (edges.at(y, x) == 1.0) {
                ++in_row;
                if (column < 0) column = x;
                CHECK(x == column);
            } else {
                CHECK(edges.at(y, x) == 0.0);
            }
        }
        CHECK(in_row == 1);
        count += in_row;
    }
    CHECK(count == 8);
    CHECK((column == 3 || column == 4));

    GrayImage board(8, 8);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) board.set(y, x, (x + y) % 2);
    const auto a = canny(board, 0.5), b = canny(board, 0.5);
    CHECK(a == b);
    CHECK(std::any_of(a.pixels().begin(), a.pixels().end(), [](double v) { return v == 1.0; }));
}

TEST_CASE("fusion weights: single and identical levels") {
    Rng rng(3);
    const auto img = random_image(rng, 8, 8);
    EdgePyramid one{{1.0}, {canny(img, 0.3)}};
    const auto w1 = fusion_weights(img, one, 1.0);
    for (double v : w1[0].values) CHECK(v == 1.0);
    EdgePyramid two{{1.0, 2.0}, {canny(img, 0.3), canny(img, 0.3)}};
    const auto w = fusion_weights(img, two, 1.0);
    for (std::size_t i = 0; i < w[0].size(); ++i) {
        CHECK(w[0].values[i] == 0.5);
        CHECK(w[1].values[i] == 0.5);
    }
}

TEST_CASE("fusion weights softmax example") {
    // Horizontal ramp: image gradient (0.5, 0). Level 0 is empty (distance 0.5);
    // level 1 has gradient (2, 0) at the centre (distance 1.5). T = 2.5 gives the
    // softmax of (-0.2, -0.6).
    GrayImage img(5, 5);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) img.set(y, x, 0.0625 * x);
    GrayImage lvl(5, 5);
    lvl.set(1, 3, 1.0);
    lvl.set(3, 3, 1.0);
    EdgePyramid pyr{{1.0, 2.0}, {GrayImage(5, 5), lvl}};
    const auto w = fusion_weights(img, pyr, 2.5);
    CHECK(w[0].at(2, 2) == doctest::Approx(0.59868766).epsilon(1e-7));
    CHECK(w[1].at(2, 2) == doctest::Approx(0.40131234).epsilon(1e-7));
}

TEST_CASE("fusion weights normalization and temperature limits") {
    Rng rng(4);
    SemanticConfig cfg;
    std::size_t agree = 0, total = 0;
    for (int rep = 0; rep < 10; ++rep) {
        const auto img = gaussian_blur(random_image(rng, 24, 24), 0.8);
        const auto pyr = build_pyramid(img, cfg);
        for (double T : {0.5, 1.0, 3.0}) {
            const auto w = fusion_weights(img, pyr, T);
            for (std::size_t i = 0; i < img.size(); ++i) {
                double s = 0.0;
                for (const auto& wl : w) s += wl.values[i];
                CHECK(std::abs(s - 1.0) < 1e-6);
            }
        }
        Plane gx, gy;
        sobel(img.plane(), gx, gy);
        std::vector<Plane> dist;
        for (const auto& e : pyr.edge_maps) {
            Plane ex, ey, d(img.height(), img.width());
            sobel(e.plane(), ex, ey);
            for (std::size_t i = 0; i < d.size(); ++i)
                d.values[i] = std::hypot(gx.values[i] - ex.values[i], gy.values[i] - ey.values[i]);
            dist.push_back(d);
        }
        const auto cold = fusion_weights(img, pyr, 1e-4);
        const auto hot = fusion_weights(img, pyr, 1e4);
        for (std::size_t i = 0; i < img.size(); ++i) {
            double dmin = 1e300;
            for (const auto& d : dist) dmin = std::min(dmin, d.values[i]);
            // One-hot on the argmin; ties within 1e-3 share the mass.
            bool ok = true;
            for (std::size_t l = 0; l < dist.size(); ++l) {
                if (dist[l].values[i] > dmin + 1e-3) ok = ok && cold[l].values[i] < 1e-3;
            }
            double winners = 0.0;
            for (std::size_t l = 0; l < dist.size(); ++l)
                if (dist[l].values[i] <= dmin + 1e-3) winners += cold[l].values[i];
            ok = ok && winners > 1.0 - 1e-3;
            agree += ok;
            ++total;
            for (const auto& wl : hot) CHECK(std::abs(wl.values[i] - 1.0 / 3.0) < 1e-3);
        }
    }
    CHECK(static_cast<double>(agree) / static_cast<double>(total) >= 0.99);
}

TEST_CASE("fuse is a pixelwise convex combination") {
    Rng rng(5);
    const auto img = random_image(rng, 10, 10);
    const auto m = canny(gaussian_blur(img, 1.0), 0.3);
    EdgePyramid same{{1, 2, 3}, {m, m, m}};
    CHECK(fuse(same, fusion_weights(img, same, 0.7), 0.7).fused == m);

    EdgePyramid mixed{{1, 2}, {canny(img, 0.2), canny(gaussian_blur(img, 2.0), 0.2)}};
    const auto f = fuse(mixed, fusion_weights(img, mixed, 1.0), 1.0);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const double a = mixed.edge_maps[0].pixels()[i], b = mixed.edge_maps[1].pixels()[i];
        CHECK(f.fused.pixels()[i] >= std::min(a, b));
        CHECK(f.fused.pixels()[i] <= std::max(a, b));
    }

    GrayImage on(1, 1, 1.0), off(1, 1, 0.0);
    Plane w0(1, 1, 0.6), w1(1, 1, 0.4);
    EdgePyramid px{{1, 2}, {on, off}};
    CHECK(fuse(px, {w0, w1}, 1.0).fused.at(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
    CHECK_THROWS_AS(fuse(px, {w0}, 1.0), ShapeError);
}

TEST_CASE("condition on constant and step images") {
    SemanticConfig cfg;
    const auto flat = build_condition(GrayImage(12, 12, 0.5), cfg);
    for (double v : flat.fused.pixels()) CHECK(v == 0.0);

    const auto step = step_image(16, 16, 8);
    const auto f = build_condition(step, cfg);
    for (int y = 2; y < 14; ++y) CHECK(std::max(f.fused.at(y, 7), f.fused.at(y, 8)) >= 0.5);
    CHECK(build_condition(step, cfg).fused == f.fused);
}

TEST_CASE("fused maps are stable under small bounded noise") {
    Rng rng(6);
    Shapes32Config scfg;
    scfg.n_train = 20;
    scfg.n_test = 3;
    const auto split = generate_shapes32(scfg, rng);
    SemanticConfig cfg;
    double worst = 0.0;
    for (std::size_t i = 0; i < split.train.size(); ++i) {
        const auto img = split.train.image(i);
        GrayImage noisy(img.height(), img.width());
        for (int y = 0; y < img.height(); ++y)
            for (int x = 0; x < img.width(); ++x) noisy.set(y, x, img.at(y, x) + (8.0 / 255.0) * (2 * rng.uniform() - 1));
        const auto a = build_condition(img, cfg).fused, b = build_condition(noisy, cfg).fused;
        std::size_t differ = 0;
        for (std::size_t p = 0; p < a.size(); ++p) differ += std::abs(a.pixels()[p] - b.pixels()[p]) > 0.5;
        worst = std::max(worst, static_cast<double>(differ) / static_cast<double>(a.size()));
    }
    CHECK(worst < 0.2);
}

TEST_CASE("subsampled pyramid keeps full resolution binary maps") {
    Rng rng(7);
    SemanticConfig cfg;
    cfg.subsample = true;
    const auto img = gaussian_blur(random_image(rng, 32, 32), 1.0);
    const auto pyr = build_pyramid(img, cfg);
    REQUIRE(pyr.levels() == 3);
    for (const auto& e : pyr.edge_maps) {
        CHECK(e.height() == 32);
        for (double v : e.pixels()) CHECK((v == 0.0 || v == 1.0));
    }
}

TEST_CASE("luminance conversion") {
    RgbImage rgb{1, 2, {1.0, 0.0, 0.0, 0.2, 0.4, 0.6}};
    const auto g = to_luminance(rgb);
    CHECK(g.at(0, 0) == doctest::Approx(0.299));
    CHECK(g.at(0, 1) == doctest::Approx(0.299 * 0.2 + 0.587 * 0.4 + 0.114 * 0.6));
}
