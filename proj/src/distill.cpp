// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/distill.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dblp/bridge.hpp"
#include "dblp/errors.hpp"

namespace dblp {

namespace {

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t batch, Rng& rng) {
    std::vector<std::size_t> idx(batch);
    for (auto& i : idx) i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(n) - 1));
    return idx;
}

void require_rows(std::span<const int> ts, const Tensor& z, const char* what) {
    if (ts.size() != z.rows()) throw ShapeError(std::string(what) + ": one timestep per batch row required");
}

}  // namespace

double teacher_validation_mse(const DenoiserNet& net, const Tensor& x, const NoiseSchedule& schedule,
                              std::uint64_t seed) {
    Rng rng(seed);
    const Tensor eps = rng.normal_like(x);
    std::vector<int> ts(x.rows());
    for (auto& t : ts) t = rng.uniform_int(0, schedule.last());
    const Tensor zt = diffuse(x, ts, eps, schedule);
    const Tensor pred = net.forward(zt, ts, nullptr);
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - eps[i]) * (pred[i] - eps[i]);
    return acc / static_cast<double>(pred.size());
}

DenoiserNet train_teacher(const Dataset& data, const NoiseSchedule& schedule, const TeacherConfig& cfg,
                          const SkipParams& skip, Rng& rng, TeacherReport* report) {
    if (data.size() == 0) throw StageError("teacher training needs a nonempty dataset");
    if (cfg.n_iters < 0) throw ConfigError("teacher.n_iters", "must be >= 0");
    if (cfg.batch_size < 1) throw ConfigError("teacher.batch_size", "must be >= 1");
    DenoiserNet net = DenoiserNet::create(data.dim(), cfg.time_embed_dim, 0, cfg.hidden, rng);
    net.set_skip_params(skip);
    if (cfg.gaussian_baseline) net.set_baseline(GaussianBaseline::fit(data.x, schedule));

    const std::size_t n_val = std::min<std::size_t>(data.size(), static_cast<std::size_t>(std::max(1, cfg.n_validation)));
    const Tensor val = data.x.slice_rows(0, n_val);
    const std::uint64_t val_seed = rng.engine()();
    TeacherReport local;
    local.initial_val_mse = teacher_validation_mse(net, val, schedule, val_seed);

    Sgd opt(cfg.learning_rate, cfg.momentum);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    for (int it = 0; it < cfg.n_iters; ++it) {
        const Tensor x = data.x.gather_rows(sample_indices(data.size(), bs, rng));
        const Tensor eps = rng.normal_like(x);
        std::vector<int> ts(bs);
        for (auto& t : ts) t = rng.uniform_int(0, schedule.last());
        const Tensor zt = diffuse(x, ts, eps, schedule);
        MlpCache cache;
        const Tensor pred = net.forward(zt, ts, nullptr, &cache);
        Tensor grad = Tensor::zeros_like(pred);
        double loss = 0.0;
        const double inv = 1.0 / static_cast<double>(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double r = pred[i] - eps[i];
            loss += r * r * inv;
            grad[i] = 2.0 * r * inv;
        }
        if (!std::isfinite(loss)) {
            throw StageError("teacher training diverged at iteration " + std::to_string(it) +
                             " (non-finite loss); lower teacher.learning_rate");
        }
        opt.step(net.params(), net.backward(cache, grad));
        if (cfg.log_every > 0 && (it % cfg.log_every == 0 || it + 1 == cfg.n_iters)) local.log.push_back({it, loss});
    }
    net.add_trained_iterations(cfg.n_iters);
    local.final_val_mse = teacher_validation_mse(net, val, schedule, val_seed);
    if (!std::isfinite(local.final_val_mse)) throw StageError("teacher validation loss is not finite");
    if (report) *report = std::move(local);
    return net;
}

Tensor ddim_step(const Tensor& z, const Tensor& eps_hat, std::span<const int> t_from, std::span<const int> t_to,
                 const NoiseSchedule& schedule) {
    return leapfrog_step(z, eps_hat, t_from, t_to, 1.0, schedule);
}

Tensor leapfrog_step(const Tensor& z, const Tensor& eps_hat, std::span<const int> t_from,
                     std::span<const int> t_to, double h, const NoiseSchedule& schedule) {
    require_same_shape(z, eps_hat, "solver step");
    require_rows(t_from, z, "solver step");
    require_rows(t_to, z, "solver step");
    if (!(h >= 0.0 && h <= 1.0)) throw DomainError("leapfrog step factor h must lie in [0, 1]");
    Tensor out = Tensor::zeros_like(z);
    const std::size_t d = z.row_size();
    for (std::size_t r = 0; r < z.rows(); ++r) {
        const int tf = t_from[r], tt = t_to[r];
        schedule.require_timestep(tf);
        schedule.require_timestep(tt);
        if (!(tt < tf)) {
            throw DomainError("solver requires t_to < t_from (got " + std::to_string(tf) + " -> " +
                              std::to_string(tt) + ")");
        }
        const double s_from = schedule.sigma(tf), a_from = schedule.sqrt_alpha_bar(tf);
        const double s_to = schedule.sigma(tt), a_to = schedule.sqrt_alpha_bar(tt);
        for (std::size_t j = 0; j < d; ++j) {
            const std::size_t i = r * d + j;
            const double z0_hat = (z[i] - s_from * eps_hat[i]) / a_from;
            out[i] = a_to * z0_hat + h * (s_to * eps_hat[i]);
        }
    }
    return out;
}

Tensor ddim_solve(const DenoiserNet& teacher, const Tensor& z, std::span<const int> t_from,
                  std::span<const int> t_to, const Tensor* cond, const NoiseSchedule& schedule) {
    return leapfrog_solve(teacher, z, t_from, t_to, 1.0, cond, schedule);
}

Tensor ddim_solve(const DenoiserNet& teacher, const Tensor& z, int t_from, int t_to, const Tensor* cond,
                  const NoiseSchedule& schedule) {
    const std::vector<int> tf(z.rows(), t_from), tt(z.rows(), t_to);
    return ddim_solve(teacher, z, tf, tt, cond, schedule);
}

Tensor leapfrog_solve(const DenoiserNet& teacher, const Tensor& z, std::span<const int> t_from,
                      std::span<const int> t_to, double h, const Tensor* cond, const NoiseSchedule& schedule) {
    require_rows(t_from, z, "solver");
    require_rows(t_to, z, "solver");
    for (std::size_t r = 0; r < z.rows(); ++r) {
        if (!(t_to[r] < t_from[r])) {
            throw DomainError("solver requires t_to < t_from (got " + std::to_string(t_from[r]) + " -> " +
                              std::to_string(t_to[r]) + ")");
        }
    }
    const Tensor eps_hat = teacher.forward(z, t_from, teacher.cond_dim() > 0 ? cond : nullptr);
    return leapfrog_step(z, eps_hat, t_from, t_to, h, schedule);
}

Tensor leapfrog_solve(const DenoiserNet& teacher, const Tensor& z, int t_from, int t_to, double h,
                      const Tensor* cond, const NoiseSchedule& schedule) {
    const std::vector<int> tf(z.rows(), t_from), tt(z.rows(), t_to);
    return leapfrog_solve(teacher, z, tf, tt, h, cond, schedule);
}

double Distance::value(double r) const {
    if (kind == DistanceKind::SquaredL2) return r * r;
    const double a = std::abs(r);
    return a <= delta ? 0.5 * r * r : delta * (a - 0.5 * delta);
}

double Distance::derivative(double r) const {
    if (kind == DistanceKind::SquaredL2) return 2.0 * r;
    if (std::abs(r) <= delta) return r;
    return r > 0.0 ? delta : -delta;
}

void DistillConfig::validate(int num_steps) const {
    if (k < 1) throw ConfigError("distill.k", "must be a positive integer");
    if (k >= num_steps) throw ConfigError("distill.k", "must be smaller than the number of diffusion steps");
    if (!(leapfrog_h > 0.0 && leapfrog_h <= 1.0)) throw ConfigError("distill.leapfrog_h", "must lie in (0, 1]");
    if (!(ema_rate >= 0.0 && ema_rate <= 1.0)) throw ConfigError("distill.ema_rate", "must lie in [0, 1]");
    if (!(lambda_rec >= 0.0)) throw ConfigError("distill.lambda_rec", "must be >= 0");
    if (n_iters < 1) throw ConfigError("distill.n_iters", "must be a positive integer");
    if (batch_size < 1) throw ConfigError("distill.batch_size", "must be a positive integer");
    if (!(learning_rate > 0.0)) throw ConfigError("distill.learning_rate", "must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("distill.momentum", "must lie in [0, 1)");
    if (!(cond_dropout_p >= 0.0 && cond_dropout_p <= 1.0)) {
        throw ConfigError("distill.cond_dropout_p", "must lie in [0, 1]");
    }
    if (distance.kind == DistanceKind::Huber && !(distance.delta > 0.0)) {
        throw ConfigError("distill.huber_delta", "must be > 0");
    }
}

namespace {

std::vector<int> shifted(std::span<const int> n, int k) {
    std::vector<int> out(n.begin(), n.end());
    for (auto& t : out) t += k;
    return out;
}

// Batch-mean distance and its gradient with respect to `a`.
double batch_distance(const Tensor& a, const Tensor& b, const Distance& d, Tensor* grad) {
    require_same_shape(a, b, "distance");
    const double inv = 1.0 / static_cast<double>(a.rows());
    double acc = 0.0;
    if (grad) *grad = Tensor::zeros_like(a);
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double r = a[i] - b[i];
        acc += d.value(r);
        if (grad) (*grad)[i] = d.derivative(r) * inv;
    }
    return acc * inv;
}

void add_into(Tensor& dst, const Tensor& src, double scale) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

struct StudentPass {
    std::vector<int> t;
    Tensor out;
    MlpCache cache;
};

StudentPass student_at(const DenoiserNet& student, const DistillBatch& b, std::span<const int> t,
                       const NoiseSchedule& schedule) {
    StudentPass p;
    p.t.assign(t.begin(), t.end());
    const Tensor zt = bridge_latent(b.z0, b.eps, b.eps_a, p.t, schedule);
    p.out = consistency_apply(student, zt, p.t, b.cond ? &*b.cond : nullptr, schedule, &p.cache);
    return p;
}

Tensor cd_target(const DenoiserNet& target, const DenoiserNet& teacher, const DistillBatch& b,
                 const DistillConfig& cfg, const NoiseSchedule& schedule) {
    const Tensor* cond = b.cond ? &*b.cond : nullptr;
    const std::vector<int> hi = shifted(b.n, cfg.k);
    const Tensor z_hi = bridge_latent(b.z0, b.eps, b.eps_a, hi, schedule);
    const Tensor z_lo = cfg.k == 0 ? z_hi : leapfrog_solve(teacher, z_hi, hi, b.n, cfg.leapfrog_h, cond, schedule);
    return consistency_apply(target, z_lo, b.n, cond, schedule);
}

void check_batch(const DistillBatch& b, const DistillConfig& cfg, const NoiseSchedule& schedule) {
    require_same_shape(b.z0, b.eps, "distillation batch");
    require_same_shape(b.z0, b.eps_a, "distillation batch");
    require_rows(b.n, b.z0, "distillation batch");
    for (int n : b.n) {
        if (n < 0 || n + cfg.k > schedule.last()) {
            throw DomainError("timestep overflow: n + k = " + std::to_string(n + cfg.k) + " exceeds " +
                              std::to_string(schedule.last()));
        }
    }
}

}  // namespace

std::pair<double, Mlp> cd_loss(const DenoiserNet& student, const DenoiserNet& target, const DenoiserNet& teacher,
                               const DistillBatch& batch, const DistillConfig& cfg, const NoiseSchedule& schedule) {
    check_batch(batch, cfg, schedule);
    student.params().require_same_layout(target.params(), "cd_loss target");
    const Tensor tgt = cd_target(target, teacher, batch, cfg, schedule);
    StudentPass s = student_at(student, batch, shifted(batch.n, cfg.k), schedule);
    Tensor grad;
    const double loss = batch_distance(s.out, tgt, cfg.distance, &grad);
    return {loss, consistency_backward(student, s.cache, grad, s.t, schedule)};
}

std::pair<double, Mlp> rec_loss(const DenoiserNet& student, const DistillBatch& batch, std::span<const int> t,
                                const DistillConfig& cfg, const NoiseSchedule& schedule) {
    require_same_shape(batch.z0, batch.eps, "rec_loss");
    require_same_shape(batch.z0, batch.eps_a, "rec_loss");
    require_rows(t, batch.z0, "rec_loss");
    StudentPass s = student_at(student, batch, t, schedule);
    Tensor grad;
    const double loss = batch_distance(s.out, batch.z0, cfg.distance, &grad);
    return {loss, consistency_backward(student, s.cache, grad, s.t, schedule)};
}

LossTerms distillation_loss(const DenoiserNet& student, const DenoiserNet& target, const DenoiserNet& teacher,
                            const DistillBatch& batch, const DistillConfig& cfg, const NoiseSchedule& schedule) {
    check_batch(batch, cfg, schedule);
    student.params().require_same_layout(target.params(), "distillation target");
    const Tensor tgt = cd_target(target, teacher, batch, cfg, schedule);
    StudentPass s = student_at(student, batch, shifted(batch.n, cfg.k), schedule);
    LossTerms out;
    Tensor g_cd, g_rec;
    out.cd = batch_distance(s.out, tgt, cfg.distance, &g_cd);
    if (cfg.lambda_rec > 0.0) {
        out.rec = batch_distance(s.out, batch.z0, cfg.distance, &g_rec);
        add_into(g_cd, g_rec, cfg.lambda_rec);
    }
    out.total = out.cd + cfg.lambda_rec * out.rec;
    out.grads = consistency_backward(student, s.cache, g_cd, s.t, schedule);
    return out;
}

Tensor edge_conditions(const Dataset& data, const semantic::SemanticConfig& cfg) {
    if (!data.is_image()) return Tensor({data.size(), static_cast<std::size_t>(data.dim())});
    Tensor out({data.size(), static_cast<std::size_t>(data.dim())});
    for (std::size_t i = 0; i < data.size(); ++i) {
        const auto fused = semantic::build_condition(data.image(i), cfg);
        std::copy(fused.fused.pixels().begin(), fused.fused.pixels().end(), out.row(i).begin());
    }
    return out;
}

std::pair<double, double> decile_means(const std::vector<DistillLogRow>& log) {
    if (log.empty()) return {0.0, 0.0};
    const std::size_t w = std::max<std::size_t>(1, log.size() / 10);
    double first = 0.0, last = 0.0;
    for (std::size_t i = 0; i < w; ++i) {
        first += log[i].total;
        last += log[log.size() - w + i].total;
    }
    return {first / static_cast<double>(w), last / static_cast<double>(w)};
}

DistillResult run_distillation(const Dataset& data, const DenoiserNet& teacher, const ToyClassifier& victim,
                               const AttackBudget& budget, const DistillConfig& cfg, const NoiseSchedule& schedule,
                               Rng& rng, const Tensor* clean_edges) {
    cfg.validate(schedule.num_steps());
    budget.validate();
    if (data.size() == 0) throw StageError("distillation needs a nonempty dataset");
    if (teacher.data_dim() != data.dim()) throw ShapeError("teacher does not match the dataset dimension");
    if (teacher.trained_iterations() == 0) throw StageError("teacher is untrained");

    DistillResult res;
    res.victim_accuracy = victim.accuracy(data.x, data.labels);
    if (res.victim_accuracy < cfg.min_victim_accuracy) {
        throw StageError("victim accuracy " + std::to_string(res.victim_accuracy) + "% is below " +
                         std::to_string(cfg.min_victim_accuracy) + "%; adversarial signal would be meaningless");
    }
    if (cfg.use_condition) {
        if (!clean_edges || clean_edges->rows() != data.size()) {
            throw StageError("conditioned distillation needs one clean edge map per example");
        }
        res.student = DenoiserNet::with_condition_inputs(teacher, static_cast<int>(clean_edges->row_size()));
    } else {
        res.student = teacher;
    }
    res.ema = make_ema(res.student, cfg.ema_rate);

    Sgd opt(cfg.learning_rate, cfg.momentum);
    const auto bs = static_cast<std::size_t>(cfg.batch_size);
    const int n_max = schedule.last() - cfg.k;
    res.log.reserve(static_cast<std::size_t>(cfg.n_iters));
    for (int it = 0; it < cfg.n_iters; ++it) {
        const auto idx = sample_indices(data.size(), bs, rng);
        DistillBatch b;
        b.z0 = data.x.gather_rows(idx);
        std::vector<int> labels;
        for (auto i : idx) labels.push_back(data.labels[i]);
        b.eps_a = pgd(victim, b.z0, labels, budget, rng);
        b.eps = rng.normal_like(b.z0);
        // Stratified over [0, n_max]: each row draws from its own slice.
        b.n.resize(bs);
        for (std::size_t r = 0; r < bs; ++r) {
            const double u = (static_cast<double>(r) + rng.uniform()) / static_cast<double>(bs);
            b.n[r] = std::min(n_max, static_cast<int>(u * (n_max + 1)));
        }
        if (cfg.use_condition) {
            Tensor cond({bs, clean_edges->row_size()});
            for (std::size_t r = 0; r < bs; ++r) {
                if (rng.bernoulli(cfg.cond_dropout_p)) {
                    const auto src = clean_edges->row(idx[r]);
                    std::copy(src.begin(), src.end(), cond.row(r).begin());
                }
            }
            b.cond = std::move(cond);
        }
        LossTerms terms = distillation_loss(res.student, res.ema.shadow, teacher, b, cfg, schedule);
        if (!std::isfinite(terms.total)) {
            throw StageError("distillation diverged at iteration " + std::to_string(it) + " (L_CD=" +
                             std::to_string(terms.cd) + ", L_rec=" + std::to_string(terms.rec) +
                             "); lower distill.learning_rate");
        }
        opt.step(res.student.params(), terms.grads);
        ema_update(res.ema, res.student);
        res.log.push_back({it, terms.cd, terms.rec, terms.total});
    }
    if (!res.student.params().all_finite()) throw StageError("distillation produced non-finite parameters");
    res.student.add_trained_iterations(cfg.n_iters);
    res.ema.shadow.add_trained_iterations(cfg.n_iters);
    std::tie(res.first_decile_loss, res.last_decile_loss) = decile_means(res.log);
    return res;
}

}  // namespace dblp
