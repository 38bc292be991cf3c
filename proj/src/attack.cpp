// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/attack.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dblp/errors.hpp"
#include "dblp/io.hpp"

namespace dblp {

namespace {

RowMatrix standardized(const ToyClassifier& clf, const Tensor& x) {
    const auto dim = static_cast<Eigen::Index>(x.row_size());
    if (static_cast<std::size_t>(dim) != clf.input_mean.size()) {
        throw ShapeError("classifier expects " + std::to_string(clf.input_mean.size()) + " features, got " +
                         std::to_string(dim));
    }
    RowMatrix z = x.matrix();
    for (Eigen::Index j = 0; j < dim; ++j) {
        const auto jj = static_cast<std::size_t>(j);
        z.col(j) = (z.col(j).array() - clf.input_mean[jj]) / clf.input_std[jj];
    }
    return z;
}

// Row-wise softmax probabilities.
RowMatrix softmax_rows(const RowMatrix& logits) {
    RowMatrix p = logits;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
        const double m = p.row(r).maxCoeff();
        p.row(r) = (p.row(r).array() - m).exp();
        p.row(r) /= p.row(r).sum();
    }
    return p;
}

std::vector<double> cross_entropy(const RowMatrix& logits, std::span<const int> labels) {
    std::vector<double> loss(static_cast<std::size_t>(logits.rows()));
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const double m = logits.row(r).maxCoeff();
        const double lse = m + std::log((logits.row(r).array() - m).exp().sum());
        loss[static_cast<std::size_t>(r)] = lse - logits(r, labels[static_cast<std::size_t>(r)]);
    }
    return loss;
}

void require_labels(const Tensor& x, std::span<const int> labels, int num_classes) {
    if (labels.size() != x.rows()) throw ShapeError("one label per row required");
    for (int l : labels) {
        if (l < 0 || l >= num_classes) throw DomainError("label " + std::to_string(l) + " out of range");
    }
}

}  // namespace

RowMatrix ToyClassifier::logits(const Tensor& x, MlpCache* cache) const { return mlp.forward(standardized(*this, x), cache); }

std::vector<int> ToyClassifier::predict(const Tensor& x) const {
    const RowMatrix l = logits(x);
    std::vector<int> out(static_cast<std::size_t>(l.rows()));
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
        Eigen::Index arg = 0;
        l.row(r).maxCoeff(&arg);
        out[static_cast<std::size_t>(r)] = static_cast<int>(arg);
    }
    return out;
}

double ToyClassifier::accuracy(const Tensor& x, std::span<const int> labels) const {
    if (labels.empty()) throw StageError("accuracy of an empty set");
    const auto pred = predict(x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i] ? 1 : 0;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(labels.size());
}

InputGradient loss_and_input_gradient(const ToyClassifier& clf, const Tensor& x, std::span<const int> labels) {
    require_labels(x, labels, clf.num_classes);
    MlpCache cache;
    const RowMatrix logits = clf.logits(x, &cache);
    RowMatrix g = softmax_rows(logits);
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, labels[static_cast<std::size_t>(r)]) -= 1.0;
    RowMatrix gin;
    clf.mlp.backward(cache, g, &gin);
    InputGradient out{cross_entropy(logits, labels), Tensor::zeros_like(x)};
    for (Eigen::Index j = 0; j < gin.cols(); ++j) gin.col(j) /= clf.input_std[static_cast<std::size_t>(j)];
    out.grad.matrix() = gin;
    return out;
}

std::vector<double> per_example_loss(const ToyClassifier& clf, const Tensor& x, std::span<const int> labels) {
    require_labels(x, labels, clf.num_classes);
    return cross_entropy(clf.logits(x), labels);
}

ToyClassifier train_toy_classifier(const Dataset& train, const Dataset& held_out, const ClassifierConfig& cfg,
                                   Rng& rng) {
    if (train.distinct_labels() < 2) throw StageError("classifier training needs at least two classes");
    if (train.num_classes < 2) throw StageError("dataset declares fewer than two classes");
    const std::size_t dim = train.x.row_size();
    ToyClassifier clf;
    clf.num_classes = train.num_classes;
    clf.input_mean.assign(dim, 0.0);
    clf.input_std.assign(dim, 1.0);
    if (cfg.standardize) {
        const RowMatrix m = train.x.matrix();
        for (std::size_t j = 0; j < dim; ++j) {
            const auto col = m.col(static_cast<Eigen::Index>(j));
            const double mean = col.mean();
            const double var = (col.array() - mean).square().mean();
            clf.input_mean[j] = mean;
            clf.input_std[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
        }
    }
    std::vector<int> widths{static_cast<int>(dim)};
    widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
    widths.push_back(clf.num_classes);
    clf.mlp = Mlp::create(widths, rng);

    Sgd opt(cfg.learning_rate, cfg.momentum);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t bs = static_cast<std::size_t>(std::max(1, cfg.batch_size));
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + bs)));
            const Tensor xb = train.x.gather_rows(idx);
            std::vector<int> yb;
            for (auto i : idx) yb.push_back(train.labels[i]);
            MlpCache cache;
            RowMatrix g = softmax_rows(clf.logits(xb, &cache));
            for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, yb[static_cast<std::size_t>(r)]) -= 1.0;
            g /= static_cast<double>(idx.size());
            opt.step(clf.mlp, clf.mlp.backward(cache, g));
        }
        if (!clf.mlp.all_finite()) throw StageError("classifier training diverged (non-finite parameters)");
    }
    const double acc = clf.accuracy(held_out.x, held_out.labels);
    if (acc < cfg.min_accuracy) {
        throw StageError("classifier did not converge: held-out accuracy " + std::to_string(acc) + "% < " +
                         std::to_string(cfg.min_accuracy) + "%");
    }
    return clf;
}

void AttackBudget::validate() const {
    if (!(epsilon >= 0.0)) throw ConfigError("attack.epsilon", "must be >= 0");
    if (!(step_size > 0.0)) throw ConfigError("attack.step_size", "must be > 0");
    if (n_iters < 1) throw ConfigError("attack.n_iters", "must be >= 1");
    if (epsilon > 0.0 && step_size > 2.0 * epsilon) throw ConfigError("attack.step_size", "must not exceed 2 * epsilon");
    if (clip && !(clip->first < clip->second)) throw ConfigError("attack.clip", "empty data range");
}

double perturbation_norm(std::span<const double> row, AttackNorm norm) {
    double acc = 0.0;
    for (double v : row) acc = norm == AttackNorm::Linf ? std::max(acc, std::abs(v)) : acc + v * v;
    return norm == AttackNorm::Linf ? acc : std::sqrt(acc);
}

namespace {

void project(Tensor& delta, const Tensor& x, const AttackBudget& b) {
    const std::size_t n = delta.row_size();
    for (std::size_t r = 0; r < delta.rows(); ++r) {
        auto d = delta.row(r);
        if (b.norm == AttackNorm::Linf) {
            for (double& v : d) v = std::clamp(v, -b.epsilon, b.epsilon);
        } else {
            const double norm = perturbation_norm(d, AttackNorm::L2);
            if (norm > b.epsilon) {
                for (double& v : d) v *= b.epsilon / norm;
            }
        }
        if (b.clip) {
            const auto xr = x.row(r);
            for (std::size_t j = 0; j < n; ++j) d[j] = std::clamp(xr[j] + d[j], b.clip->first, b.clip->second) - xr[j];
        }
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

}  // namespace

Tensor pgd(const ToyClassifier& clf, const Tensor& x, std::span<const int> y_true, const AttackBudget& budget,
           Rng& rng) {
    budget.validate();
    require_labels(x, y_true, clf.num_classes);
    Tensor best = Tensor::zeros_like(x);
    if (budget.epsilon == 0.0) return best;

    std::vector<double> best_loss = per_example_loss(clf, x, y_true);
    Tensor delta = Tensor::zeros_like(x);
    if (budget.random_start) {
        const std::size_t n = x.row_size();
        for (std::size_t r = 0; r < x.rows(); ++r) {
            auto d = delta.row(r);
            if (budget.norm == AttackNorm::Linf) {
                for (double& v : d) v = budget.epsilon * (2.0 * rng.uniform() - 1.0);
            } else {
                for (double& v : d) v = rng.normal();
                const double norm = perturbation_norm(d, AttackNorm::L2);
                const double radius = budget.epsilon * std::pow(rng.uniform(), 1.0 / static_cast<double>(n));
                for (double& v : d) v *= norm > 0.0 ? radius / norm : 0.0;
            }
        }
        project(delta, x, budget);
    }

    const std::size_t n = x.row_size();
    for (int it = 0; it < budget.n_iters; ++it) {
        const InputGradient g = loss_and_input_gradient(clf, add(x, delta), y_true);
        for (std::size_t r = 0; r < x.rows(); ++r) {
            // Loss at the current iterate, before stepping.
            if (g.loss[r] > best_loss[r]) {
                best_loss[r] = g.loss[r];
                std::copy_n(delta.row(r).begin(), n, best.row(r).begin());
            }
            auto d = delta.row(r);
            const auto gr = g.grad.row(r);
            if (budget.norm == AttackNorm::Linf) {
                for (std::size_t j = 0; j < n; ++j) d[j] += budget.step_size * ((gr[j] > 0.0) - (gr[j] < 0.0));
            } else {
                const double gn = perturbation_norm(gr, AttackNorm::L2);
                if (gn > 0.0) {
                    for (std::size_t j = 0; j < n; ++j) d[j] += budget.step_size * gr[j] / gn;
                }
            }
        }
        project(delta, x, budget);
    }
    const std::vector<double> final_loss = per_example_loss(clf, add(x, delta), y_true);
    for (std::size_t r = 0; r < x.rows(); ++r) {
        if (final_loss[r] > best_loss[r]) {
            best_loss[r] = final_loss[r];
            std::copy_n(delta.row(r).begin(), n, best.row(r).begin());
        }
    }
    return best;
}

void save_classifier(const ToyClassifier& clf, const std::filesystem::path& stem, const nlohmann::json& config) {
    io::write_f64_le(io::with_suffix(stem, ".bin"), clf.mlp.flatten());
    io::write_json(io::with_suffix(stem, ".json"),
                   {{"kind", "classifier"},
                    {"data_file", io::with_suffix(stem, ".bin").filename().string()},
                    {"dtype", "float64"},
                    {"endianness", "little"},
                    {"num_classes", clf.num_classes},
                    {"input_mean", clf.input_mean},
                    {"input_std", clf.input_std},
                    {"layers", mlp_layout_json(clf.mlp)},
                    {"config", config}});
}

ToyClassifier load_classifier(const std::filesystem::path& stem) {
    const auto meta = io::read_json(io::with_suffix(stem, ".json"));
    if (meta.value("kind", "") != "classifier") throw StageError(stem.string() + ": not a classifier checkpoint");
    ToyClassifier clf;
    clf.num_classes = meta.at("num_classes").get<int>();
    clf.input_mean = meta.at("input_mean").get<std::vector<double>>();
    clf.input_std = meta.at("input_std").get<std::vector<double>>();
    clf.mlp = mlp_from_layout(meta.at("layers"));
    clf.mlp.assign_flat(io::read_f64_le(io::with_suffix(stem, ".bin")));
    return clf;
}

}  // namespace dblp
