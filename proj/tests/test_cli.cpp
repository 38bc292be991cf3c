// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <json.hpp>

#include "support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
    std::string err;
};

Outcome run_cli(const std::string& args, const fs::path& scratch) {
    const auto err_file = scratch / "stderr.txt";
    const std::string cmd = std::string(DBLP_CLI_PATH) + " " + args + " 2>" + err_file.string();
    Outcome o;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    while (std::fgets(buf.data(), buf.size(), pipe)) o.out += buf.data();
    const int status = ::pclose(pipe);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(err_file);
    std::stringstream ss;
    ss << in.rdbuf();
    o.err = ss.str();
    return o;
}

fs::path write_config(const fs::path& dir, const json& j) {
    const auto p = dir / "config.json";
    std::ofstream(p) << j.dump(2);
    return p;
}

json small_toy(const fs::path& out) {
    return {{"seed", 3},
            {"dataset", "toy2d"},
            {"output_dir", out.string()},
            {"data", {{"n_train", 400}, {"n_test", 100}}},
            {"teacher", {{"n_iters", 300}}},
            {"distill", {{"n_iters", 100}, {"learning_rate", 0.01}}},
            {"attack", {{"eval_n_iters", 10}}},
            {"eval", {{"n_examples", 50}, {"step_sweep", json::array({2})}}}};
}

// path -> last write time for every regular file under root.
std::map<fs::path, fs::file_time_type> snapshot(const fs::path& root) {
    std::map<fs::path, fs::file_time_type> m;
    if (!fs::exists(root)) return m;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) m[fs::relative(e.path(), root)] = e.last_write_time();
    }
    return m;
}

std::string read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("missing config exits 2") {
    const auto dir = dblp::testing::scratch_dir("cli_missing");
    const auto o = run_cli("verify -c " + (dir / "nope.json").string(), dir);
    CHECK(o.code == 2);
    CHECK(o.err.find("not found") != std::string::npos);
}

TEST_CASE("invalid config exits 2 with the field path") {
    const auto dir = dblp::testing::scratch_dir("cli_invalid");
    const auto cfg = write_config(dir, {{"output_dir", (dir / "run").string()}, {"distill", {{"kk", 3}}}});
    const auto o = run_cli("verify -c " + cfg.string(), dir);
    CHECK(o.code == 2);
    CHECK(o.err.find("distill.kk") != std::string::npos);
    CHECK(run_cli("verify -c " + cfg.string() + " --set distill.kk", dir).code == 2);
    CHECK(run_cli("", dir).code == 2);
}

TEST_CASE("unknown command exits 2") {
    const auto dir = dblp::testing::scratch_dir("cli_command");
    const auto cfg = write_config(dir, {{"output_dir", (dir / "run").string()}});
    CHECK(run_cli("train-everything -c " + cfg.string(), dir).code == 2);
}

TEST_CASE("verify exits 0 and reports the residual") {
    const auto dir = dblp::testing::scratch_dir("cli_verify");
    const auto cfg = write_config(dir, {{"output_dir", (dir / "run").string()}});
    const auto o = run_cli("verify -c " + cfg.string(), dir);
    REQUIRE(o.code == 0);
    const auto summary = json::parse(o.out);
    CHECK(summary["max_recursion_residual"].get<double>() < 1e-10);
    CHECK(summary["max_epsilon_a_coefficient"].get<double>() < 1e-10);
    CHECK(summary["leapfrog_h1_equals_ddim"] == true);
    CHECK(fs::exists(dir / "run" / "reports" / "verify.json"));
}

TEST_CASE("eval before distill exits 1") {
    const auto dir = dblp::testing::scratch_dir("cli_order");
    const auto cfg = write_config(dir, small_toy(dir / "run"));
    REQUIRE(run_cli("gen-data -c " + cfg.string(), dir).code == 0);
    const auto o = run_cli("eval -c " + cfg.string(), dir);
    CHECK(o.code == 1);
    CHECK(o.err.find("checkpoint not found") != std::string::npos);
}

TEST_CASE("gen-data is byte-identical across runs") {
    const auto dir = dblp::testing::scratch_dir("cli_idem");
    const auto cfg = write_config(dir, small_toy(dir / "run"));
    REQUIRE(run_cli("gen-data -c " + cfg.string(), dir).code == 0);
    std::map<fs::path, std::string> first;
    for (const auto& e : fs::directory_iterator(dir / "run" / "data")) first[e.path()] = read_bytes(e.path());
    REQUIRE(!first.empty());
    REQUIRE(run_cli("gen-data -c " + cfg.string(), dir).code == 0);
    for (const auto& [p, bytes] : first) CHECK(read_bytes(p) == bytes);
}

TEST_CASE("every stage runs and its manifest lists every file it writes") {
    const auto dir = dblp::testing::scratch_dir("cli_full");
    const auto root = dir / "run";
    const auto cfg = write_config(dir, small_toy(root));
    for (const std::string stage :
         {"gen-data", "train-classifier", "train-teacher", "distill", "attack", "purify", "eval", "verify"}) {
        const auto before = snapshot(root);
        const auto o = run_cli(stage + " -c " + cfg.string() + " -s seed=3", dir);
        INFO(stage << ": " << o.err);
        REQUIRE(o.code == 0);
        const auto after = snapshot(root);
        const auto manifest = json::parse(read_bytes(root / "manifests" / (stage + ".json")));
        CHECK(manifest["stage"] == stage);
        CHECK(manifest["config_hash"].get<std::string>().size() == 16);
        std::set<fs::path> listed;
        for (const auto& f : manifest["files"]) listed.insert(f.get<std::string>());
        for (const auto& [p, t] : after) {
            const auto it = before.find(p);
            const bool written = it == before.end() || it->second != t;
            if (written && p != fs::path("manifests") / (stage + ".json")) {
                INFO(p.string());
                CHECK(listed.count(p) == 1);
            }
        }
        for (const auto& p : listed) CHECK(fs::exists(root / p));
    }
    const auto eval = json::parse(read_bytes(root / "reports" / "eval.json"));
    CHECK(eval["reports"].size() >= 3);
    CHECK(fs::exists(root / "logs" / "distill_log.csv"));
}
