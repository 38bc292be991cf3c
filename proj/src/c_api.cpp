// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/dblp.h"

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "dblp/bridge.hpp"
#include "dblp/config.hpp"
#include "dblp/errors.hpp"
#include "dblp/pipeline.hpp"
#include "dblp/purify.hpp"
#include "dblp/schedule.hpp"
#include "dblp/semantic.hpp"

struct dblp_run {
    dblp::RunConfig config;
    std::string summary = "{}";
    std::string manifest;
    std::string output_dir;
};

struct dblp_schedule {
    dblp::NoiseSchedule schedule;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_error_path;

template <class F>
dblp_status guarded(F&& f) {
    g_error.clear();
    g_error_path.clear();
    try {
        f();
        return DBLP_OK;
    } catch (const dblp::ConfigError& e) {
        g_error = e.what();
        g_error_path = e.path();
        return DBLP_ERR_CONFIG;
    } catch (const dblp::NotFoundError& e) {
        g_error = e.what();
        return DBLP_ERR_NOT_FOUND;
    } catch (const dblp::StageError& e) {
        g_error = e.what();
        return DBLP_ERR_STAGE;
    } catch (const dblp::ShapeError& e) {
        g_error = e.what();
        return DBLP_ERR_ARGUMENT;
    } catch (const dblp::DomainError& e) {
        g_error = e.what();
        return DBLP_ERR_ARGUMENT;
    } catch (const std::exception& e) {
        g_error = e.what();
        return DBLP_ERR_INTERNAL;
    } catch (...) {
        g_error = "unknown error";
        return DBLP_ERR_INTERNAL;
    }
}

void require(bool ok, const char* what) {
    if (!ok) throw dblp::DomainError(what);
}

dblp::GrayImage image_from(const double* px, int height, int width) {
    require(px != nullptr, "null image pointer");
    require(height > 0 && width > 0, "image extent must be positive");
    const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
    return dblp::GrayImage(height, width, std::vector<double>(px, px + n));
}

}  // namespace

extern "C" {

const char* dblp_version(void) { return "0.1.0"; }
const char* dblp_last_error(void) { return g_error.c_str(); }
const char* dblp_last_error_path(void) { return g_error_path.c_str(); }

dblp_status dblp_run_open(const char* config_path, const char* const* overrides, size_t n_overrides, dblp_run** out) {
    return guarded([&] {
        require(out != nullptr, "null output handle");
        *out = nullptr;
        if (!config_path) throw dblp::ConfigError("", "no config path given");
        std::vector<std::string> ov;
        for (size_t i = 0; i < n_overrides; ++i) {
            require(overrides[i] != nullptr, "null override");
            ov.emplace_back(overrides[i]);
        }
        auto run = std::make_unique<dblp_run>();
        run->config = dblp::load_config(config_path, ov);
        run->output_dir = run->config.output_dir.string();
        *out = run.release();
    });
}

void dblp_run_close(dblp_run* run) { delete run; }

dblp_status dblp_run_stage(dblp_run* run, const char* stage) {
    return guarded([&] {
        require(run != nullptr && stage != nullptr, "null argument");
        const auto res = dblp::run_stage(stage, run->config);
        run->summary = res.summary.dump(2);
        run->manifest = res.manifest.string();
    });
}

const char* dblp_run_summary(const dblp_run* run) { return run ? run->summary.c_str() : ""; }
const char* dblp_run_manifest_path(const dblp_run* run) { return run ? run->manifest.c_str() : ""; }
const char* dblp_run_output_dir(const dblp_run* run) { return run ? run->output_dir.c_str() : ""; }

dblp_status dblp_schedule_linear(int n_steps, double beta_start, double beta_end, dblp_schedule** out) {
    return guarded([&] {
        require(out != nullptr, "null output handle");
        *out = nullptr;
        *out = new dblp_schedule{dblp::build_linear_schedule(n_steps, beta_start, beta_end)};
    });
}

void dblp_schedule_free(dblp_schedule* s) { delete s; }

int dblp_schedule_num_steps(const dblp_schedule* s) { return s ? s->schedule.num_steps() : 0; }

dblp_status dblp_schedule_alpha_bar(const dblp_schedule* s, int t, double* out) {
    return guarded([&] {
        require(s && out, "null argument");
        s->schedule.require_timestep(t);
        *out = s->schedule.alpha_bar(t);
    });
}

dblp_status dblp_schedule_bridge_k(const dblp_schedule* s, int t, double* out) {
    return guarded([&] {
        require(s && out, "null argument");
        s->schedule.require_timestep(t);
        *out = s->schedule.k(t);
    });
}

dblp_status dblp_schedule_verify(const dblp_schedule* s, double* max_residual, double* max_coefficient) {
    return guarded([&] {
        require(s && max_residual && max_coefficient, "null argument");
        double r = 0.0, c = 0.0;
        for (double v : dblp::k_recursion_residual(s->schedule)) r = std::max(r, v);
        for (int t = 1; t < s->schedule.num_steps(); ++t) {
            c = std::max(c, std::abs(dblp::epsilon_a_posterior_coefficient(t, s->schedule)));
        }
        *max_residual = r;
        *max_coefficient = c;
    });
}

dblp_status dblp_bridge_k(double alpha_bar_t, double alpha_bar_T, double* out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        *out = dblp::bridge_k(alpha_bar_t, alpha_bar_T);
    });
}

dblp_status dblp_psnr(const double* a, const double* b, int height, int width, double* out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        *out = dblp::psnr(image_from(a, height, width), image_from(b, height, width));
    });
}

dblp_status dblp_ssim(const double* a, const double* b, int height, int width, double* out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        *out = dblp::ssim(image_from(a, height, width), image_from(b, height, width));
    });
}

dblp_status dblp_otsu_threshold(const double* img, int height, int width, double* out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        *out = dblp::semantic::otsu_threshold(image_from(img, height, width));
    });
}

dblp_status dblp_fused_edge_map(const double* img, int height, int width, double temperature, double* out) {
    return guarded([&] {
        require(out != nullptr, "null argument");
        dblp::semantic::SemanticConfig cfg;
        cfg.temperature = temperature;
        if (!(temperature > 0.0)) throw dblp::ConfigError("semantic.temperature", "must be > 0");
        const auto fused = dblp::semantic::build_condition(image_from(img, height, width), cfg);
        std::copy(fused.fused.pixels().begin(), fused.fused.pixels().end(), out);
    });
}

}  // extern "C"
