// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dblp/dblp.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitStage = 1;
constexpr int kExitConfig = 2;

int report(dblp_status st, const char* what) {
    std::fprintf(stderr, "dblp: %s: %s\n", what, dblp_last_error());
    return st == DBLP_ERR_CONFIG ? kExitConfig : kExitStage;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Noise-bridge consistency purification toolkit"};
    app.set_version_flag("--version", std::string(dblp_version()));
    std::string command;
    std::string config_path;
    std::vector<std::string> overrides;
    std::vector<std::string> positional_overrides;
    app.add_option("command", command, "gen-data | train-classifier | train-teacher | distill | attack | purify | eval | verify")
        ->required();
    app.add_option("-c,--config", config_path, "JSON run config")->required();
    app.add_option("-s,--set", overrides, "Override a config field, e.g. distill.k=20 (repeatable)");
    app.add_option("overrides", positional_overrides, "Further key.path=value overrides");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    overrides.insert(overrides.end(), positional_overrides.begin(), positional_overrides.end());

    std::vector<const char*> raw;
    for (const auto& o : overrides) raw.push_back(o.c_str());
    dblp_run* run = nullptr;
    dblp_status st = dblp_run_open(config_path.c_str(), raw.data(), raw.size(), &run);
    if (st != DBLP_OK) return report(st, "config");

    st = dblp_run_stage(run, command.c_str());
    if (st != DBLP_OK) {
        const int code = report(st, command.c_str());
        dblp_run_close(run);
        return code;
    }
    std::printf("%s\n", dblp_run_summary(run));
    std::fprintf(stderr, "dblp: %s done; manifest %s\n", command.c_str(), dblp_run_manifest_path(run));
    dblp_run_close(run);
    return kExitOk;
}
