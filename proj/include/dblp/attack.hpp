// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "dblp/data.hpp"
#include "dblp/net.hpp"

namespace dblp {

/// Victim classifier: per-feature standardization followed by an MLP producing logits.
struct ToyClassifier {
    Mlp mlp;
    int num_classes = 0;
    std::vector<double> input_mean;  // per feature
    std::vector<double> input_std;   // per feature, > 0

    RowMatrix logits(const Tensor& x, MlpCache* cache = nullptr) const;
    std::vector<int> predict(const Tensor& x) const;
    /// Percentage of rows predicted as their label.
    double accuracy(const Tensor& x, std::span<const int> labels) const;
};

/// Per-example cross-entropy and its gradient with respect to the input.
struct InputGradient {
    std::vector<double> loss;
    Tensor grad;
};

InputGradient loss_and_input_gradient(const ToyClassifier& clf, const Tensor& x, std::span<const int> labels);
std::vector<double> per_example_loss(const ToyClassifier& clf, const Tensor& x, std::span<const int> labels);

struct ClassifierConfig {
    std::vector<int> hidden{64, 64};
    int epochs = 30;
    int batch_size = 64;
    double learning_rate = 0.05;
    double momentum = 0.9;
    bool standardize = true;
    double min_accuracy = 95.0;
};

/// Trains on `train`, scores on `held_out`. Throws StageError for fewer than two
/// classes or when held-out accuracy stays below cfg.min_accuracy.
ToyClassifier train_toy_classifier(const Dataset& train, const Dataset& held_out, const ClassifierConfig& cfg,
                                   Rng& rng);

enum class AttackNorm { Linf, L2 };

struct AttackBudget {
    double epsilon = 0.3;
    double step_size = 0.075;
    int n_iters = 10;
    AttackNorm norm = AttackNorm::Linf;
    bool random_start = true;
    /// Valid data range of x + perturbation (images: [0, 1]).
    std::optional<std::pair<double, double>> clip;

    /// Throws ConfigError: epsilon >= 0, step_size > 0, n_iters >= 1, and for
    /// epsilon > 0 step_size <= 2 epsilon.
    void validate() const;
};

/// Projected gradient ascent on the classifier's cross-entropy. Returns the
/// perturbation (shaped like x) with the highest loss seen per example,
/// counting the zero perturbation, so the attacked loss never falls below the
/// clean loss. Every returned row lies inside the epsilon ball.
Tensor pgd(const ToyClassifier& clf, const Tensor& x, std::span<const int> y_true, const AttackBudget& budget,
           Rng& rng);

/// Norm of a single perturbation row under the budget's norm.
double perturbation_norm(std::span<const double> row, AttackNorm norm);

void save_classifier(const ToyClassifier& clf, const std::filesystem::path& stem, const nlohmann::json& config);
ToyClassifier load_classifier(const std::filesystem::path& stem);

}  // namespace dblp
