// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>

#include "dblp/schedule.hpp"
#include "dblp/tensor.hpp"

namespace dblp::testing {

inline NoiseSchedule random_linear_schedule(std::mt19937_64& gen, int n_steps) {
    std::uniform_real_distribution<double> lo(1e-5, 1e-3);
    std::uniform_real_distribution<double> span(1e-3, 0.05);
    const double b0 = lo(gen);
    return build_linear_schedule(n_steps, b0, b0 + span(gen));
}

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    rng.fill_normal(t);
    for (auto& v : t.storage()) v *= scale;
    return t;
}

inline double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    const auto p = std::filesystem::temp_directory_path() / ("dblp_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace dblp::testing
