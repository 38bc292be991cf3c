// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include "dblp/config.hpp"
#include "dblp/errors.hpp"
#include "dblp/io.hpp"
#include "dblp/pipeline.hpp"
#include "support.hpp"

using namespace dblp;
using nlohmann::json;

namespace {

std::string error_path(const json& j) {
    try {
        parse_config(j).validate();
    } catch (const ConfigError& e) {
        return e.path();
    }
    return "<none>";
}

}  // namespace

TEST_CASE("empty config takes the toy defaults") {
    const auto cfg = parse_config(json::object());
    CHECK(cfg.dataset == DatasetKind::Toy2d);
    CHECK(cfg.schedule.n_steps == 100);
    CHECK(cfg.distill.k == 20);
    CHECK(cfg.distill.leapfrog_h == 0.8);
    CHECK(cfg.attack.budget.epsilon == 0.3);
    CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("shapes defaults") {
    const auto cfg = parse_config({{"dataset", "shapes32"}});
    CHECK(cfg.attack.budget.epsilon == doctest::Approx(8.0 / 255.0));
    REQUIRE(cfg.attack.budget.clip.has_value());
    CHECK(cfg.purify.condition_mode == ConditionMode::FusedEdge);
    CHECK(cfg.distill.use_condition);
    CHECK(cfg.distill.cond_dropout_p == 0.5);
}

TEST_CASE("invalid fields report their dotted path") {
    CHECK(error_path({{"distill", {{"bogus", 1}}}}) == "distill.bogus");
    CHECK(error_path({{"frobnicate", true}}) == "frobnicate");
    CHECK(error_path({{"distill", {{"k", "twenty"}}}}) == "distill.k");
    CHECK(error_path({{"distill", {{"k", 100}}}}) == "distill.k");
    CHECK(error_path({{"schedule", {{"beta_end", 1.5}}}}) == "schedule.beta_start");
    CHECK(error_path({{"dataset", "cifar"}}) == "dataset");
    CHECK(error_path({{"attack", {{"norm", "l1"}}}}) == "attack.norm");
    CHECK(error_path({{"purify", {{"condition_mode", "fused_edge"}}}}) == "purify.condition_mode");
    CHECK(error_path({{"semantic", {{"temperature", 0.0}}}}) == "semantic.temperature");
}

TEST_CASE("overrides") {
    json j = {{"distill", {{"k", 20}}}};
    apply_overrides(j, {"distill.k=10", "output_dir=/tmp/x", "net.hidden=[8,8]", "purify.condition_mode=none"});
    CHECK(j["distill"]["k"] == 10);
    CHECK(j["output_dir"] == "/tmp/x");
    CHECK(j["net"]["hidden"] == json::array({8, 8}));
    const auto cfg = parse_config(j);
    CHECK(cfg.distill.k == 10);
    CHECK(cfg.teacher.hidden == std::vector<int>{8, 8});
    CHECK_THROWS_AS(apply_overrides(j, {"distill.k"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(j, {"distill..k=1"}), ConfigError);
    CHECK_THROWS_AS(apply_overrides(j, {"distill.k.deeper=1"}), ConfigError);
}

TEST_CASE("config hash follows the content") {
    const auto a = parse_config({{"seed", 1}});
    const auto b = parse_config({{"seed", 1}});
    const auto c = parse_config({{"seed", 2}});
    CHECK(a.hash() == b.hash());
    CHECK(a.hash() != c.hash());
    CHECK(a.hash().size() == 16);
}

TEST_CASE("load_config") {
    const auto dir = testing::scratch_dir("config");
    CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);
    io::write_text(dir / "broken.json", "{ not json");
    CHECK_THROWS_AS(load_config(dir / "broken.json"), ConfigError);
    io::write_json(dir / "ok.json", {{"seed", 5}, {"output_dir", (dir / "run").string()}});
    const auto cfg = load_config(dir / "ok.json", {"seed=6"});
    CHECK(cfg.seed == 6);
    CHECK(cfg.output_dir == dir / "run");
    CHECK(cfg.source["seed"] == 6);
}

TEST_CASE("shipped configs validate") {
    for (const char* name : {"toy2d.json", "shapes32.json"}) {
        CHECK_NOTHROW(load_config(std::filesystem::path(DBLP_SOURCE_DIR) / "configs" / name));
    }
}

TEST_CASE("stage seeds and threads") {
    CHECK(stage_seed(7, "distill") == stage_seed(7, "distill"));
    CHECK(stage_seed(7, "distill") != stage_seed(7, "eval"));
    CHECK(stage_seed(7, "distill") != stage_seed(8, "distill"));
    ::setenv("DBLP_NUM_THREADS", "3", 1);
    CHECK(requested_threads() == 3);
    ::setenv("DBLP_NUM_THREADS", "zero", 1);
    CHECK(requested_threads() == 1);
    ::unsetenv("DBLP_NUM_THREADS");
    CHECK(requested_threads() == 1);
}

TEST_CASE("unknown stage is a configuration error") {
    auto cfg = parse_config(json::object());
    cfg.output_dir = testing::scratch_dir("unknown_stage");
    CHECK_THROWS_AS(run_stage("train-everything", cfg), ConfigError);
}
