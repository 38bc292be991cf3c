// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <map>
#include <sstream>

#include <Eigen/Core>

#include "dblp/bridge.hpp"
#include "dblp/errors.hpp"
#include "dblp/io.hpp"

namespace dblp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct StageContext {
    const RunConfig& cfg;
    RunLayout layout;
    NoiseSchedule schedule;
    Rng rng;
    std::vector<fs::path> files;
    json summary = json::object();

    void add(const fs::path& p) { files.push_back(p); }
    void add(const std::vector<fs::path>& ps) { files.insert(files.end(), ps.begin(), ps.end()); }
};

NoiseSchedule schedule_of(const RunConfig& cfg) {
    return build_linear_schedule(cfg.schedule.n_steps, cfg.schedule.beta_start, cfg.schedule.beta_end);
}

void require_artifact(const fs::path& p, const std::string& producer) {
    if (!fs::exists(p)) {
        throw NotFoundError("checkpoint not found: " + p.string() + " (run `" + producer + "` first)");
    }
}

Dataset load_split(const StageContext& ctx, const std::string& name) {
    require_artifact(ctx.layout.data() / (name + "_x.json"), "gen-data");
    return load_dataset(ctx.layout.data(), name);
}

Dataset eval_subset(const StageContext& ctx) {
    Dataset test = load_split(ctx, "test");
    const auto n = std::min<std::size_t>(test.size(), static_cast<std::size_t>(ctx.cfg.eval.n_examples));
    return test.subset(0, n);
}

ToyClassifier load_victim(const StageContext& ctx) {
    const auto stem = ctx.layout.models() / "classifier";
    require_artifact(io::with_suffix(stem, ".json"), "train-classifier");
    return load_classifier(stem);
}

DenoiserNet load_net(const StageContext& ctx, const std::string& name, const std::string& producer) {
    const auto stem = ctx.layout.models() / name;
    require_artifact(io::with_suffix(stem, ".json"), producer);
    return load_denoiser(stem);
}

std::vector<fs::path> checkpoint_files(const fs::path& stem) {
    return {io::with_suffix(stem, ".bin"), io::with_suffix(stem, ".json")};
}

Tensor add_rows(const Tensor& x, const Tensor& delta) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
    return out;
}

void dump_images(StageContext& ctx, const Dataset& d, const Tensor& x, const std::string& prefix, int count) {
    if (!d.is_image()) return;
    fs::create_directories(ctx.layout.images());
    const auto n = std::min<std::size_t>(x.rows(), static_cast<std::size_t>(std::max(0, count)));
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = ctx.layout.images() / (prefix + "_" + std::to_string(i) + ".pgm");
        io::write_pgm(p, row_as_image(x, i, d.image_height, d.image_width));
        ctx.add(p);
    }
}

void stage_gen_data(StageContext& ctx) {
    const DataSplit split = ctx.cfg.dataset == DatasetKind::Toy2d ? generate_toy2d(ctx.cfg.toy2d, ctx.rng)
                                                                   : generate_shapes32(ctx.cfg.shapes32, ctx.rng);
    fs::create_directories(ctx.layout.data());
    ctx.add(save_dataset(split.train, ctx.layout.data(), "train"));
    ctx.add(save_dataset(split.test, ctx.layout.data(), "test"));
    ctx.summary = {{"n_train", split.train.size()}, {"n_test", split.test.size()}, {"dim", split.train.dim()}};
}

void stage_train_classifier(StageContext& ctx) {
    const Dataset train = load_split(ctx, "train");
    const Dataset test = load_split(ctx, "test");
    const ToyClassifier clf = train_toy_classifier(train, test, ctx.cfg.classifier, ctx.rng);
    fs::create_directories(ctx.layout.models());
    const auto stem = ctx.layout.models() / "classifier";
    save_classifier(clf, stem, ctx.cfg.source);
    ctx.add(checkpoint_files(stem));
    ctx.summary = {{"train_accuracy", clf.accuracy(train.x, train.labels)},
                   {"held_out_accuracy", clf.accuracy(test.x, test.labels)}};
}

void stage_train_teacher(StageContext& ctx) {
    const Dataset train = load_split(ctx, "train");
    TeacherReport rep;
    const DenoiserNet teacher = train_teacher(train, ctx.schedule, ctx.cfg.teacher, ctx.cfg.skip, ctx.rng, &rep);
    fs::create_directories(ctx.layout.models());
    fs::create_directories(ctx.layout.logs());
    const auto stem = ctx.layout.models() / "teacher";
    save_denoiser(teacher, stem, ctx.cfg.source);
    ctx.add(checkpoint_files(stem));
    std::ostringstream log;
    log.precision(10);
    log << "iter,loss\n";
    for (const auto& r : rep.log) log << r.iter << ',' << r.loss << '\n';
    const auto log_path = ctx.layout.logs() / "teacher_log.csv";
    io::write_text(log_path, log.str());
    ctx.add(log_path);
    ctx.summary = {{"initial_val_mse", rep.initial_val_mse},
                   {"final_val_mse", rep.final_val_mse},
                   {"mse_ratio", rep.initial_val_mse > 0 ? rep.final_val_mse / rep.initial_val_mse : 0.0}};
}

void stage_distill(StageContext& ctx) {
    const Dataset train = load_split(ctx, "train");
    const DenoiserNet teacher = load_net(ctx, "teacher", "train-teacher");
    const ToyClassifier victim = load_victim(ctx);
    std::optional<Tensor> edges;
    if (ctx.cfg.distill.use_condition) edges = edge_conditions(train, ctx.cfg.semantic);
    const DistillResult res = run_distillation(train, teacher, victim, ctx.cfg.attack.distill_budget(), ctx.cfg.distill,
                                               ctx.schedule, ctx.rng, edges ? &*edges : nullptr);
    fs::create_directories(ctx.layout.models());
    fs::create_directories(ctx.layout.logs());
    const auto student = ctx.layout.models() / "student";
    const auto ema = ctx.layout.models() / "student_ema";
    save_denoiser(res.student, student, ctx.cfg.source);
    save_denoiser(res.ema.shadow, ema, ctx.cfg.source);
    ctx.add(checkpoint_files(student));
    ctx.add(checkpoint_files(ema));
    std::ostringstream log;
    log.precision(10);
    log << "iter,L_CD,L_rec,total\n";
    for (const auto& r : res.log) log << r.iter << ',' << r.cd << ',' << r.rec << ',' << r.total << '\n';
    const auto log_path = ctx.layout.logs() / "distill_log.csv";
    io::write_text(log_path, log.str());
    ctx.add(log_path);
    ctx.summary = {{"victim_accuracy", res.victim_accuracy},
                   {"first_decile_loss", res.first_decile_loss},
                   {"last_decile_loss", res.last_decile_loss},
                   {"loss_decreased", res.last_decile_loss < res.first_decile_loss}};
}

void stage_attack(StageContext& ctx) {
    Dataset test = eval_subset(ctx);
    const ToyClassifier victim = load_victim(ctx);
    const AttackBudget budget = ctx.cfg.attack.eval_budget();
    const Tensor delta = pgd(victim, test.x, test.labels, budget, ctx.rng);
    Dataset attacked = test;
    attacked.x = add_rows(test.x, delta);
    ctx.add(save_dataset(attacked, ctx.layout.data(), "attacked"));
    ctx.summary = {{"n_examples", test.size()},
                   {"epsilon", budget.epsilon},
                   {"n_iters", budget.n_iters},
                   {"clean_accuracy", victim.accuracy(test.x, test.labels)},
                   {"attacked_accuracy", victim.accuracy(attacked.x, attacked.labels)}};
}

std::optional<Tensor> saved_attack(const StageContext& ctx, const Dataset& test) {
    if (!fs::exists(ctx.layout.data() / "attacked_x.json")) return std::nullopt;
    Dataset attacked = load_dataset(ctx.layout.data(), "attacked");
    if (attacked.x.shape() != test.x.shape() || attacked.labels != test.labels) return std::nullopt;
    return attacked.x;
}

ConsistencyPurifier make_purifier(const StageContext& ctx, const DenoiserNet& student, const Dataset& d,
                                  PurifyConfig pcfg) {
    return ConsistencyPurifier::from_student(student, ctx.schedule, std::move(pcfg), DataGeometry::of(d));
}

void stage_purify(StageContext& ctx) {
    require_artifact(ctx.layout.data() / "attacked_x.json", "attack");
    const Dataset attacked = load_dataset(ctx.layout.data(), "attacked");
    const DenoiserNet student = load_net(ctx, "student", "distill");
    const ConsistencyPurifier purifier = make_purifier(ctx, student, attacked, ctx.cfg.purify);
    Dataset purified = attacked;
    purified.x = purifier.purify(attacked.x, ctx.rng);
    ctx.add(save_dataset(purified, ctx.layout.data(), "purified"));
    dump_images(ctx, purified, purified.x, "purified", ctx.cfg.eval.dump_images);
    ctx.summary = {{"n_examples", purified.size()}, {"n_inference_steps", ctx.cfg.purify.n_inference_steps}};
    const auto victim_path = ctx.layout.models() / "classifier.json";
    if (fs::exists(victim_path)) {
        ctx.summary["purified_accuracy"] = load_victim(ctx).accuracy(purified.x, purified.labels);
    }
}

std::string mode_name(ConditionMode m) { return m == ConditionMode::None ? "none" : "fused_edge"; }

void stage_eval(StageContext& ctx) {
    const Dataset test = eval_subset(ctx);
    const ToyClassifier victim = load_victim(ctx);
    const DenoiserNet student = load_net(ctx, "student", "distill");
    const AttackBudget budget = ctx.cfg.attack.eval_budget();

    Tensor x_adv;
    if (auto saved = saved_attack(ctx, test)) {
        x_adv = std::move(*saved);
    } else {
        Rng attack_rng = ctx.rng.split();
        x_adv = add_rows(test.x, pgd(victim, test.x, test.labels, budget, attack_rng));
    }
    EvalOptions opts;
    opts.timing_images = ctx.cfg.eval.timing_images;
    opts.x_adv = &x_adv;

    std::vector<EvalReport> reports;
    const std::uint64_t eval_seed = ctx.rng.engine()();
    auto run = [&](const Purifier& p, int steps, const std::string& mode, Tensor* out) {
        Rng r(eval_seed);
        EvalReport rep = evaluate(p, victim, test, budget, r, opts, out);
        rep.n_inference_steps = steps;
        rep.condition_mode = mode;
        reports.push_back(rep);
    };

    Tensor purified;
    run(make_purifier(ctx, student, test, ctx.cfg.purify), ctx.cfg.purify.n_inference_steps,
        mode_name(ctx.cfg.purify.condition_mode), &purified);
    if (ctx.cfg.purify.condition_mode == ConditionMode::FusedEdge) {
        PurifyConfig plain = ctx.cfg.purify;
        plain.condition_mode = ConditionMode::None;
        run(make_purifier(ctx, student, test, plain), plain.n_inference_steps, "none", nullptr);
    }
    for (int steps : ctx.cfg.eval.step_sweep) {
        if (steps == ctx.cfg.purify.n_inference_steps) continue;
        PurifyConfig swept = ctx.cfg.purify;
        swept.n_inference_steps = steps;
        swept.renoise_schedule.clear();
        run(make_purifier(ctx, student, test, swept), steps, mode_name(swept.condition_mode), nullptr);
    }
    if (ctx.cfg.eval.identity_baseline) run(IdentityPurifier(), 0, "none", nullptr);
    if (ctx.cfg.eval.ddim_baseline) {
        const DenoiserNet teacher = load_net(ctx, "teacher", "train-teacher");
        run(DdimPurifier(teacher, ctx.schedule, ctx.cfg.purify.ddim_steps, DataGeometry::of(test)),
            ctx.cfg.purify.ddim_steps, "none", nullptr);
    }

    fs::create_directories(ctx.layout.reports());
    const auto csv = ctx.layout.reports() / "eval.csv";
    write_eval_csv(csv, reports);
    ctx.add(csv);
    json arr = json::array();
    for (const auto& r : reports) arr.push_back(r.to_json());
    const auto js = ctx.layout.reports() / "eval.json";
    io::write_json(js, {{"reports", arr}, {"config_hash", ctx.cfg.hash()}});
    ctx.add(js);
    dump_images(ctx, test, test.x, "eval_clean", ctx.cfg.eval.dump_images);
    dump_images(ctx, test, x_adv, "eval_adversarial", ctx.cfg.eval.dump_images);
    dump_images(ctx, test, purified, "eval_purified", ctx.cfg.eval.dump_images);
    if (test.is_image() && ctx.cfg.purify.condition_mode == ConditionMode::FusedEdge) {
        const auto n = std::min<std::size_t>(test.size(), static_cast<std::size_t>(ctx.cfg.eval.dump_images));
        for (std::size_t i = 0; i < n; ++i) {
            const auto p = ctx.layout.images() / ("eval_edges_" + std::to_string(i) + ".pgm");
            const GrayImage adv = row_as_image(x_adv, i, test.image_height, test.image_width);
            io::write_pgm(p, semantic::build_condition(adv, ctx.cfg.semantic).fused);
            ctx.add(p);
        }
    }
    ctx.summary = {{"reports", arr}};
}

void stage_verify(StageContext& ctx) {
    constexpr double kTol = 1e-10;
    double max_residual = 0.0, max_coeff = 0.0;
    auto check_schedule = [&](const NoiseSchedule& s) {
        for (double r : k_recursion_residual(s)) max_residual = std::max(max_residual, r);
        for (int t = 1; t < s.num_steps(); ++t) {
            max_coeff = std::max(max_coeff, std::abs(epsilon_a_posterior_coefficient(t, s)));
        }
    };
    check_schedule(ctx.schedule);
    for (int i = 0; i < 10; ++i) {
        const int n = std::array{10, 100, 500}[static_cast<std::size_t>(i % 3)];
        const double b0 = 1e-5 + 1e-3 * ctx.rng.uniform();
        const double b1 = b0 + (0.05 - b0) * ctx.rng.uniform();
        check_schedule(build_linear_schedule(n, b0, b1));
    }

    // Bridge at T equals the forward diffusion of the adversarial input.
    const Tensor z0 = ctx.rng.normal_like(Tensor({16, 4}));
    const Tensor eps = ctx.rng.normal_like(z0), eps_a = ctx.rng.normal_like(z0);
    const int T = ctx.schedule.last();
    const Tensor adv = add_rows(z0, eps_a);
    const bool endpoint_ok = bridge_latent(z0, eps, eps_a, T, ctx.schedule) == diffuse(adv, T, eps, ctx.schedule);

    // Leapfrog with h = 1 reproduces DDIM exactly.
    const std::vector<int> hidden{16, 16};
    const DenoiserNet net = DenoiserNet::create(4, 8, 0, hidden, ctx.rng);
    bool solver_ok = true;
    for (int i = 0; i < 100 && solver_ok; ++i) {
        const Tensor z = ctx.rng.normal_like(z0);
        const int tf = ctx.rng.uniform_int(1, T);
        const int tt = ctx.rng.uniform_int(0, tf - 1);
        solver_ok = leapfrog_solve(net, z, tf, tt, 1.0, nullptr, ctx.schedule) ==
                    ddim_solve(net, z, tf, tt, nullptr, ctx.schedule);
    }

    ctx.summary = {{"max_recursion_residual", max_residual},
                   {"max_epsilon_a_coefficient", max_coeff},
                   {"bridge_endpoint_bitwise", endpoint_ok},
                   {"leapfrog_h1_equals_ddim", solver_ok},
                   {"tolerance", kTol}};
    fs::create_directories(ctx.layout.reports());
    const auto p = ctx.layout.reports() / "verify.json";
    io::write_json(p, ctx.summary);
    ctx.add(p);
    std::vector<std::string> failures;
    if (!(max_residual < kTol)) failures.push_back("recursion residual");
    if (!(max_coeff < kTol)) failures.push_back("epsilon_a cancellation");
    if (!endpoint_ok) failures.push_back("bridge endpoint");
    if (!solver_ok) failures.push_back("leapfrog/DDIM equivalence");
    if (!failures.empty()) {
        std::string msg = "verification failed:";
        for (const auto& f : failures) msg += " " + f + ";";
        throw StageError(msg);
    }
}

std::string relative_to(const fs::path& p, const fs::path& root) {
    return fs::relative(p, root).generic_string();
}

}  // namespace

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"gen-data", "train-classifier", "train-teacher", "distill",
                                                "attack",   "purify",           "eval",          "verify"};
    return names;
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
    std::uint64_t h = 1469598103934665603ULL ^ seed;
    for (unsigned char c : stage) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

int requested_threads() {
    const char* v = std::getenv("DBLP_NUM_THREADS");
    if (!v) return 1;
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    return (end != v && *end == '\0' && n >= 1 && n <= 1024) ? static_cast<int>(n) : 1;
}

StageResult run_stage(const std::string& stage, const RunConfig& cfg) {
    static const std::map<std::string, std::function<void(StageContext&)>> table{
        {"gen-data", stage_gen_data}, {"train-classifier", stage_train_classifier},
        {"train-teacher", stage_train_teacher}, {"distill", stage_distill},
        {"attack", stage_attack}, {"purify", stage_purify},
        {"eval", stage_eval}, {"verify", stage_verify}};
    const auto it = table.find(stage);
    if (it == table.end()) throw ConfigError("command", "unknown stage \"" + stage + "\"");

    const int threads = requested_threads();
    Eigen::setNbThreads(threads);
    StageContext ctx{cfg, RunLayout{cfg.output_dir}, schedule_of(cfg), Rng(stage_seed(cfg.seed, stage)), {}, json::object()};
    std::error_code ec;
    fs::create_directories(ctx.layout.manifests(), ec);
    if (ec) throw ConfigError("output_dir", "cannot create " + ctx.layout.root.string() + ": " + ec.message());

    it->second(ctx);

    StageResult res{stage, ctx.summary, ctx.files, ctx.layout.manifests() / (stage + ".json")};
    json files = json::array();
    for (const auto& f : ctx.files) files.push_back(relative_to(f, ctx.layout.root));
    io::write_json(res.manifest, {{"stage", stage},
                                  {"config_hash", cfg.hash()},
                                  {"seed", cfg.seed},
                                  {"dataset", dataset_name(cfg.dataset)},
                                  {"threads", threads},
                                  {"files", files},
                                  {"summary", ctx.summary}});
    return res;
}

}  // namespace dblp
