// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "dblp/attack.hpp"
#include "dblp/data.hpp"
#include "dblp/errors.hpp"
#include "support.hpp"

using namespace dblp;

namespace {

ToyClassifier linear_classifier(const RowMatrix& w, const Eigen::RowVectorXd& b) {
    DenseLayer layer{w, b};
    ToyClassifier clf;
    clf.mlp = Mlp({layer});
    clf.num_classes = static_cast<int>(w.cols());
    clf.input_mean.assign(static_cast<std::size_t>(w.rows()), 0.0);
    clf.input_std.assign(static_cast<std::size_t>(w.rows()), 1.0);
    return clf;
}

const DataSplit& toy_split() {
    static const DataSplit split = [] {
        Rng rng(21);
        return generate_toy2d({}, rng);
    }();
    return split;
}

const ToyClassifier& toy_victim() {
    static const ToyClassifier clf = [] {
        Rng rng(22);
        return train_toy_classifier(toy_split().train, toy_split().test, {}, rng);
    }();
    return clf;
}

}  // namespace

TEST_CASE("toy classifier reaches high held-out accuracy") {
    const auto& split = toy_split();
    CHECK(toy_victim().accuracy(split.test.x, split.test.labels) >= 99.0);
}

TEST_CASE("single-class data is rejected") {
    Dataset d = toy_split().train.subset(0, 50);
    for (auto& y : d.labels) y = 0;
    Rng rng(1);
    CHECK_THROWS_AS(train_toy_classifier(d, d, {}, rng), StageError);
}

TEST_CASE("budget validation") {
    AttackBudget b;
    CHECK_NOTHROW(b.validate());
    b.step_size = 1.0;
    CHECK_THROWS_AS(b.validate(), ConfigError);
    b = {};
    b.n_iters = 0;
    CHECK_THROWS_AS(b.validate(), ConfigError);
    b = {};
    b.epsilon = -0.1;
    CHECK_THROWS_AS(b.validate(), ConfigError);
}

TEST_CASE("zero epsilon returns zero perturbation") {
    AttackBudget b;
    b.epsilon = 0.0;
    Rng rng(2);
    const auto& d = toy_split().test;
    const Tensor delta = pgd(toy_victim(), d.x, d.labels, b, rng);
    for (double v : delta.data()) CHECK(v == 0.0);
}

TEST_CASE("one linf step on a linear model is the signed gradient step") {
    RowMatrix w(3, 2);
    w << 1.0, -2.0, 0.5, 0.25, -1.5, 1.0;
    Eigen::RowVectorXd b(2);
    b << 0.1, -0.3;
    const auto clf = linear_classifier(w, b);
    Rng rng(3);
    const Tensor x = testing::random_tensor({6, 3}, rng);
    const std::vector<int> y{0, 1, 0, 1, 1, 0};
    AttackBudget budget;
    budget.epsilon = 0.3;
    budget.step_size = 0.2;
    budget.n_iters = 1;
    budget.random_start = false;
    const Tensor delta = pgd(clf, x, y, budget, rng);
    for (std::size_t r = 0; r < 6; ++r) {
        Eigen::RowVectorXd xr(3);
        for (int j = 0; j < 3; ++j) xr(j) = x[r * 3 + j];
        const Eigen::RowVectorXd logits = xr * w + b;
        const double m = logits.maxCoeff();
        Eigen::RowVectorXd p = (logits.array() - m).exp();
        p /= p.sum();
        p(y[r]) -= 1.0;
        const Eigen::RowVectorXd g = p * w.transpose();
        for (int j = 0; j < 3; ++j) {
            const double expect = 0.2 * ((g(j) > 0) - (g(j) < 0));
            CHECK(delta[r * 3 + j] == doctest::Approx(expect).epsilon(1e-15));
        }
    }
}

TEST_CASE("input gradient matches finite differences") {
    Rng rng(4);
    const auto& d = toy_split().test;
    const Tensor x = d.x.slice_rows(0, 8);
    const std::vector<int> y(d.labels.begin(), d.labels.begin() + 8);
    const auto g = loss_and_input_gradient(toy_victim(), x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
        Tensor up = x, dn = x;
        up[i] += 1e-6;
        dn[i] -= 1e-6;
        const std::size_t r = i / x.row_size();
        const double numeric =
            (per_example_loss(toy_victim(), up, y)[r] - per_example_loss(toy_victim(), dn, y)[r]) / 2e-6;
        CHECK(g.grad[i] == doctest::Approx(numeric).epsilon(1e-5).scale(1e-3));
    }
}

TEST_CASE("projection, loss ascent and clipping") {
    const auto& d = toy_split().test;
    for (AttackNorm norm : {AttackNorm::Linf, AttackNorm::L2}) {
        AttackBudget b;
        b.norm = norm;
        b.epsilon = norm == AttackNorm::Linf ? 0.3 : 0.5;
        b.step_size = b.epsilon / 4;
        Rng rng(5);
        const Tensor delta = pgd(toy_victim(), d.x, d.labels, b, rng);
        Tensor adv = d.x;
        for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += delta[i];
        const auto before = per_example_loss(toy_victim(), d.x, d.labels);
        const auto after = per_example_loss(toy_victim(), adv, d.labels);
        for (std::size_t r = 0; r < d.size(); ++r) {
            CHECK(perturbation_norm(delta.row(r), norm) <= b.epsilon + 1e-12);
            CHECK(after[r] >= before[r]);
        }
    }
    AttackBudget clipped;
    clipped.clip = std::make_pair(-0.5, 0.5);
    Rng rng(6);
    const Tensor delta = pgd(toy_victim(), d.x, d.labels, clipped, rng);
    for (std::size_t i = 0; i < delta.size(); ++i) {
        const double v = d.x[i] + delta[i];
        if (d.x[i] >= -0.5 && d.x[i] <= 0.5) {
            CHECK(v >= -0.5 - 1e-12);
            CHECK(v <= 0.5 + 1e-12);
        }
    }
}

TEST_CASE("more iterations never help the victim") {
    const auto& d = toy_split().test;
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        double prev = 101.0;
        for (int iters : {1, 5, 20}) {
            AttackBudget b;
            b.n_iters = iters;
            b.step_size = std::min(2.0, 2.5 / iters) * b.epsilon;
            Rng rng(seed);
            const Tensor delta = pgd(toy_victim(), d.x, d.labels, b, rng);
            Tensor adv = d.x;
            for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += delta[i];
            const double acc = toy_victim().accuracy(adv, d.labels);
            CHECK(acc <= prev + 2.0);
            prev = acc;
        }
    }
}

TEST_CASE("shapes classifier and PGD-40") {
    Rng rng(31);
    const auto split = generate_shapes32({}, rng);
    ClassifierConfig cfg;
    cfg.hidden = {128, 64};
    cfg.epochs = 20;
    cfg.learning_rate = 0.02;
    testing::Stopwatch sw;
    const auto clf = train_toy_classifier(split.train, split.test, cfg, rng);
    CHECK(sw.seconds() < 120.0);
    CHECK(clf.accuracy(split.test.x, split.test.labels) >= 95.0);

    AttackBudget b;
    b.epsilon = 8.0 / 255.0;
    b.n_iters = 40;
    b.step_size = 2.5 * b.epsilon / 40;
    b.clip = std::make_pair(0.0, 1.0);
    const Tensor delta = pgd(clf, split.test.x, split.test.labels, b, rng);
    Tensor adv = split.test.x;
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += delta[i];
    CHECK(clf.accuracy(adv, split.test.labels) <= 10.0);
}

TEST_CASE("classifier checkpoint round trip") {
    const auto dir = testing::scratch_dir("clf_ckpt");
    save_classifier(toy_victim(), dir / "clf", nlohmann::json::object());
    const auto back = load_classifier(dir / "clf");
    const auto& d = toy_split().test;
    CHECK(back.predict(d.x) == toy_victim().predict(d.x));
    CHECK(back.input_mean == toy_victim().input_mean);
}
