// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dblp/config.hpp"

namespace dblp {

/// Artifact locations under a run's output_dir.
struct RunLayout {
    std::filesystem::path root;

    std::filesystem::path data() const { return root / "data"; }
    std::filesystem::path models() const { return root / "models"; }
    std::filesystem::path logs() const { return root / "logs"; }
    std::filesystem::path reports() const { return root / "reports"; }
    std::filesystem::path images() const { return root / "images"; }
    std::filesystem::path manifests() const { return root / "manifests"; }
};

struct StageResult {
    std::string stage;
    nlohmann::json summary;
    std::vector<std::filesystem::path> files;
    std::filesystem::path manifest;
};

const std::vector<std::string>& stage_names();

/// Runs one stage and writes `manifests/<stage>.json`. Throws ConfigError for
/// an unknown stage or unwritable output_dir, NotFoundError when an upstream
/// artifact is missing, StageError when the stage fails.
StageResult run_stage(const std::string& stage, const RunConfig& cfg);

/// Deterministic per-stage seed, independent of stage order.
std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage);

/// Threads requested through DBLP_NUM_THREADS (1 when unset or invalid).
int requested_threads();

}  // namespace dblp
