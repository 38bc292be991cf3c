// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dblp/attack.hpp"
#include "dblp/data.hpp"
#include "dblp/distill.hpp"
#include "dblp/net.hpp"
#include "dblp/purify.hpp"
#include "dblp/semantic.hpp"

namespace dblp {

enum class DatasetKind { Toy2d, Shapes32 };

struct ScheduleConfig {
    int n_steps = 100;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct AttackConfig {
    AttackBudget budget;           // used inside distillation
    int eval_n_iters = 100;        // PGD iterations for the attack / eval stages
    bool step_size_auto = true;    // step = 2.5 epsilon / n_iters

    AttackBudget distill_budget() const;
    AttackBudget eval_budget() const;
};

struct EvalConfig {
    int n_examples = 500;
    int timing_images = 20;
    int dump_images = 16;
    std::vector<int> step_sweep;
    bool ddim_baseline = true;
    bool identity_baseline = true;
};

/// Whole-run configuration. Every JSON field is optional; absent fields keep
/// the per-dataset defaults. Unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 0;
    DatasetKind dataset = DatasetKind::Toy2d;
    std::filesystem::path output_dir = "runs/toy2d";
    Toy2dConfig toy2d;
    Shapes32Config shapes32;
    ScheduleConfig schedule;
    SkipParams skip;
    ClassifierConfig classifier;
    TeacherConfig teacher;
    AttackConfig attack;
    DistillConfig distill;
    semantic::SemanticConfig semantic;
    PurifyConfig purify;
    EvalConfig eval;

    /// The JSON the config was built from, after overrides (hashed into manifests).
    nlohmann::json source;

    /// Throws ConfigError naming the offending field.
    void validate() const;
    std::string hash() const;
};

/// Defaults for a dataset, before any JSON is applied.
RunConfig default_config(DatasetKind kind);

/// Applies `key.path=value` overrides. Values parse as JSON, falling back to a plain string.
void apply_overrides(nlohmann::json& j, const std::vector<std::string>& overrides);

RunConfig parse_config(const nlohmann::json& j);
/// Reads, applies overrides, parses and validates. Relative output_dir resolves
/// against the current working directory. Throws ConfigError.
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

std::string dataset_name(DatasetKind kind);

}  // namespace dblp
