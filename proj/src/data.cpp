// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/data.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dblp/errors.hpp"
#include "dblp/io.hpp"

namespace dblp {

Dataset Dataset::subset(std::size_t begin, std::size_t end) const {
    Dataset d = *this;
    d.x = x.slice_rows(begin, end);
    d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin), labels.begin() + static_cast<std::ptrdiff_t>(end));
    return d;
}

Dataset Dataset::gather(const std::vector<std::size_t>& indices) const {
    Dataset d = *this;
    d.x = x.gather_rows(indices);
    d.labels.clear();
    for (auto i : indices) d.labels.push_back(labels.at(i));
    return d;
}

GrayImage Dataset::image(std::size_t i) const {
    if (!is_image()) throw ShapeError("dataset does not hold images");
    return row_as_image(x, i, image_height, image_width);
}

int Dataset::distinct_labels() const { return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size()); }

GrayImage row_as_image(const Tensor& x, std::size_t i, int height, int width) {
    Plane p(height, width);
    const auto row = x.row(i);
    if (row.size() != p.size()) throw ShapeError("row does not hold a " + std::to_string(height) + "x" + std::to_string(width) + " image");
    std::copy(row.begin(), row.end(), p.values.begin());
    return GrayImage::from_plane(p);
}

namespace {

Dataset make_toy2d(int n, const Toy2dConfig& cfg, Rng& rng) {
    Dataset d;
    d.num_classes = 2;
    d.x = Tensor({static_cast<std::size_t>(n), 2});
    for (int i = 0; i < n; ++i) {
        const int label = i % 2;
        const double sign = label == 0 ? -1.0 : 1.0;
        d.x[2 * static_cast<std::size_t>(i)] = sign * cfg.separation + cfg.major_std * rng.normal();
        d.x[2 * static_cast<std::size_t>(i) + 1] = sign * cfg.minor_offset + cfg.minor_std * rng.normal();
        d.labels.push_back(label);
    }
    return d;
}

// Signed test for the inside of a triangle given by three vertices.
bool inside_triangle(double px, double py, const double (&vx)[3], const double (&vy)[3]) {
    auto edge = [&](int a, int b) { return (vx[b] - vx[a]) * (py - vy[a]) - (vy[b] - vy[a]) * (px - vx[a]); };
    const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
    return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
}

Dataset make_shapes(int n, const Shapes32Config& cfg, Rng& rng) {
    const int s = cfg.size;
    Dataset d;
    d.num_classes = 3;
    d.image_height = s;
    d.image_width = s;
    d.x = Tensor({static_cast<std::size_t>(n), static_cast<std::size_t>(s * s)});
    constexpr int kSuper = 4;  // supersampling per axis for anti-aliased edges
    for (int i = 0; i < n; ++i) {
        const int label = i % 3;
        const double cx = 0.5 * s + (2.0 * rng.uniform() - 1.0) * cfg.max_offset;
        const double cy = 0.5 * s + (2.0 * rng.uniform() - 1.0) * cfg.max_offset;
        const double radius = cfg.min_radius + rng.uniform() * (cfg.max_radius - cfg.min_radius);
        const double angle = rng.uniform() * 2.0 * M_PI;
        const double background = 0.1 + 0.25 * rng.uniform();
        const double foreground = 0.65 + 0.3 * rng.uniform();
        const double ca = std::cos(angle), sa = std::sin(angle);

        double tx[3], ty[3];
        for (int v = 0; v < 3; ++v) {
            const double a = angle + v * 2.0 * M_PI / 3.0;
            tx[v] = cx + radius * std::cos(a);
            ty[v] = cy + radius * std::sin(a);
        }
        auto covered = [&](double px, double py) {
            const double dx = px - cx, dy = py - cy;
            switch (label) {
                case 0:
                    return dx * dx + dy * dy <= radius * radius;
                case 1: {
                    const double half = radius / std::sqrt(2.0) * 1.1;
                    const double u = ca * dx + sa * dy, v = -sa * dx + ca * dy;
                    return std::abs(u) <= half && std::abs(v) <= half;
                }
                default:
                    return inside_triangle(px, py, tx, ty);
            }
        };

        auto row = d.x.row(static_cast<std::size_t>(i));
        for (int y = 0; y < s; ++y) {
            for (int x = 0; x < s; ++x) {
                int hits = 0;
                for (int sy = 0; sy < kSuper; ++sy) {
                    for (int sx = 0; sx < kSuper; ++sx) {
                        hits += covered(x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper) ? 1 : 0;
                    }
                }
                const double cover = static_cast<double>(hits) / (kSuper * kSuper);
                const double v = background + cover * (foreground - background) + cfg.background_noise * rng.normal();
                row[static_cast<std::size_t>(y * s + x)] = std::clamp(v, 0.0, 1.0);
            }
        }
        d.labels.push_back(label);
    }
    return d;
}

}  // namespace

DataSplit generate_toy2d(const Toy2dConfig& cfg, Rng& rng) {
    if (cfg.n_train < 2 || cfg.n_test < 2) throw ConfigError("data.n_train", "need at least 2 examples per split");
    DataSplit split;
    split.train = make_toy2d(cfg.n_train, cfg, rng);
    split.test = make_toy2d(cfg.n_test, cfg, rng);
    return split;
}

DataSplit generate_shapes32(const Shapes32Config& cfg, Rng& rng) {
    if (cfg.n_train < 3 || cfg.n_test < 3) throw ConfigError("data.n_train", "need at least 3 examples per split");
    if (cfg.size < 11) throw ConfigError("data.size", "images must be at least 11 pixels wide");
    DataSplit split;
    split.train = make_shapes(cfg.n_train, cfg, rng);
    split.test = make_shapes(cfg.n_test, cfg, rng);
    return split;
}

std::vector<std::filesystem::path> save_dataset(const Dataset& d, const std::filesystem::path& dir,
                                                const std::string& name) {
    nlohmann::json extra = {{"num_classes", d.num_classes},
                            {"image_height", d.image_height},
                            {"image_width", d.image_width}};
    auto files = io::save_tensor(dir / (name + "_x"), d.x, extra);
    const auto labels = dir / (name + "_labels.csv");
    io::write_labels_csv(labels, d.labels);
    files.push_back(labels);
    return files;
}

Dataset load_dataset(const std::filesystem::path& dir, const std::string& name) {
    const auto stem = dir / (name + "_x");
    Dataset d;
    const auto meta = io::read_json(io::with_suffix(stem, ".json"));
    d.x = io::load_tensor(stem);
    d.labels = io::read_labels_csv(dir / (name + "_labels.csv"));
    d.num_classes = meta.value("num_classes", 0);
    d.image_height = meta.value("image_height", 0);
    d.image_width = meta.value("image_width", 0);
    if (d.labels.size() != d.x.rows()) throw StageError(name + ": label count does not match tensor rows");
    return d;
}

}  // namespace dblp
