// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/purify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>

#include "dblp/bridge.hpp"
#include "dblp/errors.hpp"
#include "dblp/io.hpp"

namespace dblp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

void clip_inplace(Tensor& x, const DataGeometry& g) {
    if (!g.clip) return;
    for (double& v : x.storage()) v = std::clamp(v, g.clip->first, g.clip->second);
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

void PurifyConfig::validate(int num_steps) const {
    if (n_inference_steps < 1) throw ConfigError("purify.n_inference_steps", "must be a positive integer");
    if (!renoise_schedule.empty()) {
        if (static_cast<int>(renoise_schedule.size()) != n_inference_steps) {
            throw ConfigError("purify.renoise_schedule", "needs exactly n_inference_steps entries");
        }
        if (renoise_schedule.front() != num_steps - 1) {
            throw ConfigError("purify.renoise_schedule", "must start at the terminal timestep " +
                                                             std::to_string(num_steps - 1));
        }
        for (std::size_t i = 1; i < renoise_schedule.size(); ++i) {
            if (!(renoise_schedule[i] < renoise_schedule[i - 1])) {
                throw ConfigError("purify.renoise_schedule", "timesteps must be strictly decreasing");
            }
        }
        if (renoise_schedule.back() < 0) throw ConfigError("purify.renoise_schedule", "timesteps must be >= 0");
    } else if (n_inference_steps > num_steps) {
        throw ConfigError("purify.n_inference_steps", "exceeds the number of diffusion steps");
    }
    if (ddim_steps < 1 || ddim_steps > num_steps) {
        throw ConfigError("purify.ddim_steps", "must lie in [1, " + std::to_string(num_steps) + "]");
    }
    if (semantic.sigmas.empty()) throw ConfigError("semantic.sigmas", "need at least one level");
    for (double s : semantic.sigmas) {
        if (!(s > 0.0)) throw ConfigError("semantic.sigmas", "blur widths must be > 0");
    }
    if (!(semantic.temperature > 0.0)) throw ConfigError("semantic.temperature", "must be > 0");
}

std::vector<int> PurifyConfig::timesteps(int num_steps) const {
    if (!renoise_schedule.empty()) return renoise_schedule;
    std::vector<int> ts;
    for (int i = 0; i < n_inference_steps; ++i) ts.push_back(num_steps - 1 - i * num_steps / n_inference_steps);
    return ts;
}

DataGeometry DataGeometry::of(const Dataset& d) {
    DataGeometry g;
    if (d.bounded()) g.clip = std::make_pair(0.0, 1.0);
    g.image_height = d.image_height;
    g.image_width = d.image_width;
    return g;
}

ConsistencyPurifier::ConsistencyPurifier(ConsistencyFn fn, NoiseSchedule schedule, PurifyConfig cfg,
                                         DataGeometry geometry)
    : fn_(std::move(fn)), schedule_(std::move(schedule)), cfg_(std::move(cfg)), geometry_(geometry) {
    cfg_.validate(schedule_.num_steps());
    if (cfg_.condition_mode == ConditionMode::FusedEdge && geometry_.image_height <= 0) {
        throw ConfigError("purify.condition_mode", "fused_edge conditioning needs image data");
    }
}

ConsistencyPurifier ConsistencyPurifier::from_student(const DenoiserNet& student, NoiseSchedule schedule,
                                                      PurifyConfig cfg, DataGeometry geometry) {
    if (student.trained_iterations() <= 0) throw StageError("student is untrained");
    const int cond_dim = student.cond_dim();
    auto fn = [student, schedule, cond_dim](const Tensor& z, int t, const Tensor* cond) {
        if (cond_dim == 0) return consistency_apply(student, z, t, nullptr, schedule);
        if (cond) return consistency_apply(student, z, t, cond, schedule);
        const Tensor null_cond({z.rows(), static_cast<std::size_t>(cond_dim)});
        return consistency_apply(student, z, t, &null_cond, schedule);
    };
    if (cfg.condition_mode == ConditionMode::FusedEdge && cond_dim == 0) {
        throw ConfigError("purify.condition_mode", "fused_edge conditioning needs a conditioned student");
    }
    return ConsistencyPurifier(std::move(fn), std::move(schedule), std::move(cfg), geometry);
}

std::optional<Tensor> ConsistencyPurifier::condition_for(const Tensor& x) const {
    if (cfg_.condition_mode == ConditionMode::None) return std::nullopt;
    Tensor cond = Tensor::zeros_like(x);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const GrayImage img = row_as_image(x, i, geometry_.image_height, geometry_.image_width);
        const auto fused = semantic::build_condition(img, cfg_.semantic);
        std::copy(fused.fused.pixels().begin(), fused.fused.pixels().end(), cond.row(i).begin());
    }
    return cond;
}

Tensor ConsistencyPurifier::purify(const Tensor& x, Rng& rng) const {
    if (!x.all_finite()) throw DomainError("purifier input is not finite");
    const auto start = Clock::now();
    const std::optional<Tensor> cond = condition_for(x);
    last_condition_seconds_ = cond ? seconds_since(start) : 0.0;
    const Tensor* c = cond ? &*cond : nullptr;

    const std::vector<int> ts = cfg_.timesteps(schedule_.num_steps());
    Tensor estimate = x;
    for (int t : ts) {
        const Tensor z = diffuse(estimate, t, rng.normal_like(estimate), schedule_);
        estimate = fn_(z, t, c);
        clip_inplace(estimate, geometry_);
    }
    return estimate;
}

DdimPurifier::DdimPurifier(DenoiserNet teacher, NoiseSchedule schedule, int steps, DataGeometry geometry)
    : teacher_(std::move(teacher)), schedule_(std::move(schedule)), steps_(steps), geometry_(geometry) {
    if (steps_ < 1 || steps_ > schedule_.num_steps()) throw ConfigError("purify.ddim_steps", "out of range");
}

Tensor DdimPurifier::purify(const Tensor& x, Rng& rng) const {
    if (!x.all_finite()) throw DomainError("purifier input is not finite");
    const int T = schedule_.last();
    std::vector<int> ts;
    for (int i = 0; i < steps_; ++i) {
        ts.push_back(static_cast<int>(std::lround(T * (1.0 - static_cast<double>(i) / steps_))));
    }
    Tensor z = diffuse(x, T, rng.normal_like(x), schedule_);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t = ts[i];
        const Tensor eps = teacher_.forward(z, t, nullptr);
        const double a = schedule_.sqrt_alpha_bar(t), s = schedule_.sigma(t);
        Tensor z0 = Tensor::zeros_like(z);
        for (std::size_t j = 0; j < z.size(); ++j) z0[j] = (z[j] - s * eps[j]) / a;
        if (i + 1 == ts.size()) {
            clip_inplace(z0, geometry_);
            return z0;
        }
        const int tn = ts[i + 1];
        const double an = schedule_.sqrt_alpha_bar(tn), sn = schedule_.sigma(tn);
        for (std::size_t j = 0; j < z.size(); ++j) z[j] = an * z0[j] + sn * eps[j];
    }
    return z;
}

double psnr(const GrayImage& a, const GrayImage& b) {
    if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("psnr: image shapes differ");
    if (a.size() == 0) throw ShapeError("psnr: empty image");
    double mse = 0.0;
    const auto pa = a.pixels(), pb = b.pixels();
    for (std::size_t i = 0; i < pa.size(); ++i) mse += (pa[i] - pb[i]) * (pa[i] - pb[i]);
    mse /= static_cast<double>(pa.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace {

constexpr int kWin = 11;

std::array<double, kWin> ssim_window() {
    std::array<double, kWin> w{};
    double sum = 0.0;
    for (int i = 0; i < kWin; ++i) {
        const double d = i - kWin / 2;
        w[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += w[static_cast<std::size_t>(i)];
    }
    for (auto& v : w) v /= sum;
    return w;
}

// Valid-region separable filtering.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::array<double, kWin>& k) {
    const int oh = h - kWin + 1, ow = w - kWin + 1;
    std::vector<double> tmp(static_cast<std::size_t>(h * ow));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[static_cast<std::size_t>(i)] * img[static_cast<std::size_t>(y * w + x + i)];
            tmp[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    }
    std::vector<double> out(static_cast<std::size_t>(oh * ow));
    for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int i = 0; i < kWin; ++i) acc += k[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>((y + i) * ow + x)];
            out[static_cast<std::size_t>(y * ow + x)] = acc;
        }
    }
    return out;
}

}  // namespace

double ssim(const GrayImage& a, const GrayImage& b) {
    if (a.height() != b.height() || a.width() != b.width()) throw ShapeError("ssim: image shapes differ");
    const int h = a.height(), w = a.width();
    if (h < kWin || w < kWin) throw ShapeError("ssim: images must be at least 11x11");
    const double c1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double c2 = (0.03 * 255.0) * (0.03 * 255.0);
    const auto k = ssim_window();
    const std::size_t n = a.size();
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = 255.0 * a.pixels()[i];
        y[i] = 255.0 * b.pixels()[i];
        xx[i] = x[i] * x[i];
        yy[i] = y[i] * y[i];
        xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
    const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k), sxy = filter_valid(xy, h, w, k);
    double acc = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
        const double vx = sxx[i] - mx[i] * mx[i];
        const double vy = syy[i] - my[i] * my[i];
        const double cov = sxy[i] - mx[i] * my[i];
        acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    return acc / static_cast<double>(mx.size());
}

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j = {{"purifier", purifier},
                        {"n_inference_steps", n_inference_steps},
                        {"condition_mode", condition_mode},
                        {"n_examples", n_examples},
                        {"clean_acc_undefended", clean_acc_undefended},
                        {"clean_acc", clean_acc},
                        {"robust_acc_undefended", robust_acc_undefended},
                        {"robust_acc_purified", robust_acc_purified},
                        {"per_image_seconds", per_image_seconds},
                        {"edge_seconds", edge_seconds},
                        {"mean_perturbation_norm", mean_perturbation_norm}};
    j["psnr_db"] = psnr_db ? nlohmann::json(std::min(*psnr_db, kPsnrCap)) : nlohmann::json(nullptr);
    j["ssim"] = ssim ? nlohmann::json(*ssim) : nlohmann::json(nullptr);
    return j;
}

std::string EvalReport::csv_header() {
    return "purifier,n_inference_steps,condition_mode,n_examples,clean_acc_undefended,clean_acc,"
           "robust_acc_undefended,robust_acc_purified,psnr_db,ssim,per_image_seconds,edge_seconds,"
           "mean_perturbation_norm";
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    os.precision(10);
    os << purifier << ',' << n_inference_steps << ',' << condition_mode << ',' << n_examples << ','
       << clean_acc_undefended << ',' << clean_acc << ',' << robust_acc_undefended << ',' << robust_acc_purified
       << ',';
    if (psnr_db) os << std::min(*psnr_db, kPsnrCap);
    os << ',';
    if (ssim) os << *ssim;
    os << ',' << per_image_seconds << ',' << edge_seconds << ',' << mean_perturbation_norm;
    return os.str();
}

double median_purify_seconds(const Purifier& purifier, const Tensor& x, int count, Rng& rng,
                             double* condition_seconds) {
    if (x.rows() == 0) throw StageError("timing needs at least one example");
    std::vector<double> total, cond;
    for (int i = 0; i < count; ++i) {
        const std::size_t r = static_cast<std::size_t>(i) % x.rows();
        const Tensor one = x.slice_rows(r, r + 1);
        const auto start = Clock::now();
        const Tensor out = purifier.purify(one, rng);
        total.push_back(seconds_since(start));
        cond.push_back(purifier.last_condition_seconds());
        if (!out.all_finite()) throw StageError("purifier produced non-finite output");
    }
    if (condition_seconds) *condition_seconds = median(cond);
    return median(total);
}

EvalReport evaluate(const Purifier& purifier, const ToyClassifier& victim, const Dataset& data,
                    const AttackBudget& budget, Rng& rng, const EvalOptions& opts, Tensor* purified_adv) {
    if (data.size() == 0) throw StageError("evaluation needs a nonempty dataset");
    EvalReport rep;
    rep.purifier = purifier.name();
    rep.n_examples = static_cast<int>(data.size());

    Tensor x_adv;
    if (opts.x_adv) {
        require_same_shape(*opts.x_adv, data.x, "adversarial inputs");
        x_adv = *opts.x_adv;
    } else {
        const Tensor delta = pgd(victim, data.x, data.labels, budget, rng);
        x_adv = data.x;
        for (std::size_t i = 0; i < x_adv.size(); ++i) x_adv[i] += delta[i];
    }
    double norm_acc = 0.0;
    for (std::size_t r = 0; r < data.size(); ++r) {
        std::vector<double> d(data.x.row_size());
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = x_adv.row(r)[j] - data.x.row(r)[j];
        norm_acc += perturbation_norm(d, budget.norm);
    }
    rep.mean_perturbation_norm = norm_acc / static_cast<double>(data.size());

    rep.clean_acc_undefended = victim.accuracy(data.x, data.labels);
    rep.robust_acc_undefended = victim.accuracy(x_adv, data.labels);
    Rng clean_rng = rng.split();
    Rng adv_rng = rng.split();
    const Tensor pur_clean = purifier.purify(data.x, clean_rng);
    const Tensor pur_adv = purifier.purify(x_adv, adv_rng);
    if (!pur_clean.all_finite() || !pur_adv.all_finite()) throw StageError("purifier produced non-finite output");
    rep.clean_acc = victim.accuracy(pur_clean, data.labels);
    rep.robust_acc_purified = victim.accuracy(pur_adv, data.labels);

    if (data.is_image()) {
        double p = 0.0, s = 0.0;
        for (std::size_t i = 0; i < data.size(); ++i) {
            const GrayImage clean = data.image(i);
            const GrayImage out = row_as_image(pur_adv, i, data.image_height, data.image_width);
            p += std::min(psnr(out, clean), kPsnrCap);
            s += ssim(out, clean);
        }
        rep.psnr_db = p / static_cast<double>(data.size());
        rep.ssim = s / static_cast<double>(data.size());
    }

    Rng timing_rng = rng.split();
    rep.per_image_seconds =
        median_purify_seconds(purifier, x_adv, std::max(20, opts.timing_images), timing_rng, &rep.edge_seconds);
    if (purified_adv) *purified_adv = pur_adv;
    return rep;
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalReport>& reports) {
    std::string text = EvalReport::csv_header() + "\n";
    for (const auto& r : reports) text += r.csv_row() + "\n";
    io::write_text(path, text);
}

}  // namespace dblp
