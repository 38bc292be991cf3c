// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <vector>

#include "dblp/errors.hpp"
#include "dblp/net.hpp"
#include "dblp/schedule.hpp"
#include "support.hpp"

using namespace dblp;

namespace {

double weighted_sum(const Tensor& t, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) s += t[i] * w[i];
    return s;
}

}  // namespace

TEST_CASE("silu and its derivative") {
    CHECK(silu(0.0) == 0.0);
    CHECK(silu(2.0) == doctest::Approx(2.0 / (1.0 + std::exp(-2.0))).epsilon(1e-15));
    for (double x : {-3.0, -0.4, 0.0, 0.7, 5.0}) {
        const double h = 1e-6;
        CHECK(silu_derivative(x) == doctest::Approx((silu(x + h) - silu(x - h)) / (2 * h)).epsilon(1e-8));
    }
}

TEST_CASE("time embedding layout") {
    std::vector<double> e(4);
    time_embedding(0.0, e);
    CHECK(e == std::vector<double>{0.0, 0.0, 1.0, 1.0});
    time_embedding(3.0, e);
    CHECK(e[0] == doctest::Approx(std::sin(3.0)));
    CHECK(e[1] == doctest::Approx(std::sin(3.0 * 0.01)));
    CHECK(e[3] == doctest::Approx(std::cos(3.0 * 0.01)));
}

TEST_CASE("skip scales meet the boundary") {
    const SkipParams p;
    const auto b = skip_scales(0, p);
    CHECK(b.c_skip == 1.0);
    CHECK(b.c_out == 0.0);
    const auto s = skip_scales(3, p);
    CHECK(s.c_skip == doctest::Approx(0.25 / (900.0 + 0.25)));
    CHECK(s.c_out == doctest::Approx(30.0 / std::sqrt(900.25)));
}

TEST_CASE("zero output layer predicts zero noise") {
    Rng rng(1);
    const std::vector<int> hidden{16, 16};
    const auto net = DenoiserNet::create(3, 8, 0, hidden, rng, true);
    const Tensor z = testing::random_tensor({5, 3}, rng);
    const Tensor eps = net.forward(z, 17);
    for (double v : eps.data()) CHECK(v == 0.0);
}

TEST_CASE("forward is deterministic and seeded") {
    const std::vector<int> hidden{8};
    Rng a(9), b(9);
    const auto n1 = DenoiserNet::create(2, 4, 0, hidden, a);
    const auto n2 = DenoiserNet::create(2, 4, 0, hidden, b);
    CHECK(n1.params().flatten() == n2.params().flatten());
    Rng r(2);
    const Tensor z = testing::random_tensor({3, 2}, r);
    CHECK(n1.forward(z, 5) == n1.forward(z, 5));
    CHECK(n1.forward(z, 5) == n2.forward(z, 5));
}

TEST_CASE("single linear layer by hand") {
    DenseLayer layer;
    layer.weight = RowMatrix(2, 2);
    layer.weight << 1, 2, 3, 4;
    layer.bias = Eigen::RowVectorXd(2);
    layer.bias << 0.5, -0.5;
    const Mlp mlp({layer});
    RowMatrix x(1, 2);
    x << 1, 1;
    const RowMatrix y = mlp.forward(x);
    CHECK(y(0, 0) == 4.5);
    CHECK(y(0, 1) == 5.5);

    // loss = 0.5 * ||y||^2: dW = x^T y, db = y.
    MlpCache cache;
    const RowMatrix out = mlp.forward(x, &cache);
    const Mlp g = mlp.backward(cache, out);
    CHECK(g.layers()[0].weight(0, 0) == 4.5);
    CHECK(g.layers()[0].weight(1, 1) == 5.5);
    CHECK(g.layers()[0].bias(0) == 4.5);
}

TEST_CASE("two-layer net by hand") {
    DenseLayer l1, l2;
    l1.weight = RowMatrix::Constant(1, 1, 2.0);
    l1.bias = Eigen::RowVectorXd::Zero(1);
    l2.weight = RowMatrix::Constant(1, 1, 3.0);
    l2.bias = Eigen::RowVectorXd::Constant(1, 1.0);
    const Mlp mlp({l1, l2});
    const RowMatrix y = mlp.forward(RowMatrix::Constant(1, 1, 1.0));
    CHECK(y(0, 0) == doctest::Approx(3.0 * 2.0 / (1.0 + std::exp(-2.0)) + 1.0).epsilon(1e-14));
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Rng rng(4);
    const std::vector<int> widths{3, 6, 2};
    const Mlp mlp = Mlp::create(widths, rng);
    MlpCache cache;
    const RowMatrix x = RowMatrix::Random(4, 3);
    mlp.forward(x, &cache);
    const Mlp g = mlp.backward(cache, RowMatrix::Zero(4, 2));
    for (double v : g.flatten()) CHECK(v == 0.0);
}

TEST_CASE("batch gradient is the sum of per-example gradients") {
    Rng rng(6);
    const std::vector<int> widths{3, 5, 2};
    const Mlp mlp = Mlp::create(widths, rng);
    const RowMatrix x = RowMatrix::Random(3, 3), up = RowMatrix::Random(3, 2);
    MlpCache cache;
    mlp.forward(x, &cache);
    const auto full = mlp.backward(cache, up).flatten();
    std::vector<double> sum(full.size(), 0.0);
    for (int r = 0; r < 3; ++r) {
        MlpCache c;
        mlp.forward(x.row(r), &c);
        const auto g = mlp.backward(c, up.row(r)).flatten();
        for (std::size_t i = 0; i < g.size(); ++i) sum[i] += g[i];
    }
    for (std::size_t i = 0; i < full.size(); ++i) CHECK(full[i] == doctest::Approx(sum[i]).epsilon(1e-12));
}

TEST_CASE("consistency gradients match finite differences") {
    const auto schedule = build_linear_schedule(20, 1e-3, 0.05);
    Rng rng(8);
    for (int rep = 0; rep < 5; ++rep) {
        const std::vector<int> hidden{7, 6};
        const auto net = DenoiserNet::create(3, 4, 2, hidden, rng);
        const Tensor z = testing::random_tensor({4, 3}, rng), cond = testing::random_tensor({4, 2}, rng);
        const Tensor w = testing::random_tensor({4, 3}, rng);
        const std::vector<int> ts{0, 3, 11, 19};
        MlpCache cache;
        consistency_apply(net, z, ts, &cond, schedule, &cache);
        const auto grad = consistency_backward(net, cache, w, ts, schedule).flatten();

        DenoiserNet probe = net;
        auto theta = net.params().flatten();
        double worst = 0.0;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            const double h = 1e-5, orig = theta[i];
            theta[i] = orig + h;
            probe.params().assign_flat(theta);
            const double up = weighted_sum(consistency_apply(probe, z, ts, &cond, schedule), w);
            theta[i] = orig - h;
            probe.params().assign_flat(theta);
            const double dn = weighted_sum(consistency_apply(probe, z, ts, &cond, schedule), w);
            theta[i] = orig;
            const double numeric = (up - dn) / (2 * h);
            if (std::abs(grad[i]) > 1e-7 || std::abs(numeric) > 1e-7) {
                worst = std::max(worst, testing::rel_error(grad[i], numeric));
            }
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("consistency function identities") {
    const auto schedule = build_linear_schedule(10, 1e-3, 0.05);
    Rng rng(10);
    const std::vector<int> hidden{8};
    auto net = DenoiserNet::create(2, 4, 0, hidden, rng);
    const Tensor z = testing::random_tensor({6, 2}, rng);
    CHECK(consistency_apply(net, z, 0, nullptr, schedule) == z);

    // Zero noise prediction with c_skip = 0, c_out = 1.
    auto zero = DenoiserNet::create(2, 4, 0, hidden, rng, true);
    zero.set_skip_params({0.0, 10.0});
    const Tensor out = consistency_apply(zero, z, 4, nullptr, schedule);
    for (std::size_t i = 0; i < z.size(); ++i) {
        CHECK(out[i] == doctest::Approx(z[i] / schedule.sqrt_alpha_bar(4)).epsilon(1e-14));
    }
}

TEST_CASE("perfect noise prediction inverts diffusion") {
    // A point-mass baseline predicts the exact noise used to diffuse that point.
    const auto schedule = build_linear_schedule(10, 1e-3, 0.05);
    Rng rng(11);
    const std::vector<int> hidden{8};
    auto net = DenoiserNet::create(2, 4, 0, hidden, rng, true);
    net.set_skip_params({0.0, 10.0});
    const std::vector<double> z0{0.7, -1.3};
    GaussianBaseline b{z0, {0.0, 0.0}, {schedule.alpha_bars().begin(), schedule.alpha_bars().end()}};
    net.set_baseline(b);
    for (int t = 1; t < 10; ++t) {
        const Tensor eps = testing::random_tensor({1, 2}, rng);
        Tensor z({1, 2});
        for (int j = 0; j < 2; ++j) z[j] = schedule.sqrt_alpha_bar(t) * z0[j] + schedule.sigma(t) * eps[j];
        const Tensor f = consistency_apply(net, z, t, nullptr, schedule);
        CHECK(f[0] == doctest::Approx(z0[0]).epsilon(1e-10));
        CHECK(f[1] == doctest::Approx(z0[1]).epsilon(1e-10));
    }
}

TEST_CASE("condition inputs start inert") {
    Rng rng(12);
    const std::vector<int> hidden{8, 8};
    const auto base = DenoiserNet::create(3, 4, 0, hidden, rng);
    const auto cond_net = DenoiserNet::with_condition_inputs(base, 5);
    CHECK(cond_net.cond_dim() == 5);
    const Tensor z = testing::random_tensor({4, 3}, rng), c = testing::random_tensor({4, 5}, rng);
    CHECK(cond_net.forward(z, 7, &c) == base.forward(z, 7));
    CHECK_THROWS_AS(cond_net.forward(z, 7), ShapeError);
}

TEST_CASE("ema update") {
    Rng rng(13);
    const std::vector<int> hidden{4};
    const auto live = DenoiserNet::create(2, 2, 0, hidden, rng);
    const auto other = DenoiserNet::create(2, 2, 0, hidden, rng);

    auto frozen = make_ema(other, 1.0);
    ema_update(frozen, live);
    CHECK(frozen.shadow.params().flatten() == other.params().flatten());

    auto copy = make_ema(other, 0.0);
    ema_update(copy, live);
    CHECK(copy.shadow.params().flatten() == live.params().flatten());

    DenseLayer one;
    one.weight = RowMatrix::Constant(1, 1, 1.0);
    one.bias = Eigen::RowVectorXd::Zero(1);
    DenseLayer nil = one;
    nil.weight(0, 0) = 0.0;
    auto s = DenoiserNet::create(1, 0, 0, {}, rng);
    auto l = s;
    s.params() = Mlp({one});
    l.params() = Mlp({nil});
    auto ema = make_ema(s, 0.95);
    ema_update(ema, l);
    CHECK(ema.shadow.params().layers()[0].weight(0, 0) == doctest::Approx(0.95).epsilon(1e-15));

    // Convex hull of the history.
    auto hull = make_ema(other, 0.9);
    auto target = live;
    for (int i = 0; i < 20; ++i) ema_update(hull, target);
    const auto a = other.params().flatten(), b = live.params().flatten(), h = hull.shadow.params().flatten();
    for (std::size_t i = 0; i < h.size(); ++i) {
        CHECK(h[i] >= std::min(a[i], b[i]) - 1e-15);
        CHECK(h[i] <= std::max(a[i], b[i]) + 1e-15);
    }
    CHECK_THROWS_AS(make_ema(other, 1.5), ConfigError);
    auto mismatch = make_ema(DenoiserNet::create(3, 2, 0, hidden, rng), 0.5);
    CHECK_THROWS_AS(ema_update(mismatch, live), ShapeError);
}

TEST_CASE("sgd step") {
    DenseLayer one;
    one.weight = RowMatrix::Constant(1, 1, 1.0);
    one.bias = Eigen::RowVectorXd::Zero(1);
    Mlp p({one});
    DenseLayer g1 = one;
    g1.bias(0) = 2.0;
    const Mlp g({g1});
    Sgd plain(0.1);
    plain.step(p, g);
    CHECK(p.layers()[0].weight(0, 0) == doctest::Approx(0.9));
    CHECK(p.layers()[0].bias(0) == doctest::Approx(-0.2));
    Mlp q({one});
    Sgd mom(0.1, 0.5);
    mom.step(q, g);
    mom.step(q, g);
    CHECK(q.layers()[0].weight(0, 0) == doctest::Approx(1.0 - 0.1 - 0.15));
}

TEST_CASE("checkpoint round trip") {
    const auto dir = testing::scratch_dir("net_ckpt");
    const auto schedule = build_linear_schedule(10, 1e-3, 0.05);
    Rng rng(14);
    const std::vector<int> hidden{6, 5};
    auto net = DenoiserNet::create(3, 4, 2, hidden, rng);
    Tensor x = testing::random_tensor({50, 3}, rng);
    net.set_baseline(GaussianBaseline::fit(x, schedule));
    net.add_trained_iterations(42);
    save_denoiser(net, dir / "net", {{"k", 1}});
    const auto back = load_denoiser(dir / "net");
    CHECK(back.params().flatten() == net.params().flatten());
    CHECK(back.trained_iterations() == 42);
    REQUIRE(back.baseline().has_value());
    const Tensor z = testing::random_tensor({3, 3}, rng), c = testing::random_tensor({3, 2}, rng);
    CHECK(back.forward(z, 6, &c) == net.forward(z, 6, &c));
    CHECK(std::filesystem::file_size(dir / "net.bin") == net.params().parameter_count() * 8);
}
