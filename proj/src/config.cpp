// Copyright (C) 2026 dblp contributors
// SPDX-License-Identifier: Apache-2.0

#include "dblp/config.hpp"

#include <set>

#include "dblp/errors.hpp"
#include "dblp/io.hpp"

namespace dblp {

namespace {

using nlohmann::json;

// Reads fields of one JSON object, remembering which keys were consumed.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    }

    std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const json& raw(const std::string& key) const { return j_.at(key); }

    template <class T>
    void get(const std::string& key, T& out) {
        if (!has(key)) return;
        const json& v = j_.at(key);
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(at(key), "expected a boolean");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError(at(key), "expected an integer");
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(at(key), "expected a number");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(at(key), "expected a string");
        }
        try {
            out = v.get<T>();
        } catch (const json::exception&) {
            throw ConfigError(at(key), "has the wrong type");
        }
    }

    void finish() const {
        for (const auto& [k, _] : j_.items()) {
            if (!seen_.count(k)) throw ConfigError(at(k), "unknown key");
        }
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

template <class F>
void section(Fields& parent, const std::string& key, F&& body) {
    if (!parent.has(key)) return;
    Fields f(parent.raw(key), parent.at(key));
    body(f);
    f.finish();
}

}  // namespace

std::string dataset_name(DatasetKind kind) { return kind == DatasetKind::Toy2d ? "toy2d" : "shapes32"; }

AttackBudget AttackConfig::distill_budget() const {
    AttackBudget b = budget;
    if (step_size_auto) b.step_size = b.epsilon > 0.0 ? 2.5 * b.epsilon / b.n_iters : 1.0;
    return b;
}

AttackBudget AttackConfig::eval_budget() const {
    AttackBudget b = budget;
    b.n_iters = eval_n_iters;
    if (step_size_auto) b.step_size = b.epsilon > 0.0 ? 2.5 * b.epsilon / b.n_iters : 1.0;
    return b;
}

RunConfig default_config(DatasetKind kind) {
    RunConfig c;
    c.dataset = kind;
    if (kind == DatasetKind::Toy2d) {
        c.output_dir = "runs/toy2d";
        c.attack.budget.epsilon = 0.3;
        c.distill.use_condition = false;
        c.distill.cond_dropout_p = 1.0;
        c.distill.learning_rate = 0.01;
        c.purify.condition_mode = ConditionMode::None;
        c.eval.n_examples = 500;
    } else {
        c.output_dir = "runs/shapes32";
        c.attack.budget.epsilon = 8.0 / 255.0;
        c.attack.budget.clip = std::make_pair(0.0, 1.0);
        c.classifier.hidden = {128, 64};
        c.classifier.epochs = 20;
        c.classifier.learning_rate = 0.02;
        c.teacher.hidden = {256, 256};
        c.teacher.n_iters = 3000;
        c.teacher.batch_size = 64;
        c.teacher.learning_rate = 0.005;
        c.distill.use_condition = true;
        c.distill.cond_dropout_p = 0.5;
        c.distill.n_iters = 1500;
        c.distill.learning_rate = 0.03;
        c.distill.batch_size = 32;
        c.purify.condition_mode = ConditionMode::FusedEdge;
        c.eval.n_examples = 300;
    }
    c.attack.budget.n_iters = 10;
    return c;
}

RunConfig parse_config(const json& j) {
    if (!j.is_object()) throw ConfigError("", "config root must be a JSON object");
    Fields root(j, "");
    std::string dataset = "toy2d";
    root.get("dataset", dataset);
    DatasetKind kind;
    if (dataset == "toy2d") {
        kind = DatasetKind::Toy2d;
    } else if (dataset == "shapes32") {
        kind = DatasetKind::Shapes32;
    } else {
        throw ConfigError("dataset", "must be \"toy2d\" or \"shapes32\"");
    }
    RunConfig c = default_config(kind);
    c.source = j;

    root.get("seed", c.seed);
    std::string out = c.output_dir.string();
    root.get("output_dir", out);
    c.output_dir = out;

    section(root, "data", [&](Fields& f) {
        if (kind == DatasetKind::Toy2d) {
            f.get("n_train", c.toy2d.n_train);
            f.get("n_test", c.toy2d.n_test);
            f.get("separation", c.toy2d.separation);
            f.get("major_std", c.toy2d.major_std);
            f.get("minor_offset", c.toy2d.minor_offset);
            f.get("minor_std", c.toy2d.minor_std);
        } else {
            f.get("n_train", c.shapes32.n_train);
            f.get("n_test", c.shapes32.n_test);
            f.get("size", c.shapes32.size);
            f.get("min_radius", c.shapes32.min_radius);
            f.get("max_radius", c.shapes32.max_radius);
            f.get("max_offset", c.shapes32.max_offset);
            f.get("background_noise", c.shapes32.background_noise);
        }
    });
    section(root, "schedule", [&](Fields& f) {
        f.get("n_steps", c.schedule.n_steps);
        f.get("beta_start", c.schedule.beta_start);
        f.get("beta_end", c.schedule.beta_end);
    });
    section(root, "net", [&](Fields& f) {
        f.get("hidden", c.teacher.hidden);
        f.get("time_embed_dim", c.teacher.time_embed_dim);
        f.get("sigma_data", c.skip.sigma_data);
        f.get("time_scale", c.skip.time_scale);
        f.get("gaussian_baseline", c.teacher.gaussian_baseline);
    });
    section(root, "classifier", [&](Fields& f) {
        f.get("hidden", c.classifier.hidden);
        f.get("epochs", c.classifier.epochs);
        f.get("batch_size", c.classifier.batch_size);
        f.get("learning_rate", c.classifier.learning_rate);
        f.get("momentum", c.classifier.momentum);
        f.get("standardize", c.classifier.standardize);
        f.get("min_accuracy", c.classifier.min_accuracy);
    });
    section(root, "teacher", [&](Fields& f) {
        f.get("n_iters", c.teacher.n_iters);
        f.get("batch_size", c.teacher.batch_size);
        f.get("learning_rate", c.teacher.learning_rate);
        f.get("momentum", c.teacher.momentum);
        f.get("n_validation", c.teacher.n_validation);
        f.get("log_every", c.teacher.log_every);
    });
    section(root, "attack", [&](Fields& f) {
        auto& b = c.attack.budget;
        f.get("epsilon", b.epsilon);
        f.get("n_iters", b.n_iters);
        f.get("eval_n_iters", c.attack.eval_n_iters);
        if (f.has("step_size")) {
            f.get("step_size", b.step_size);
            c.attack.step_size_auto = false;
        }
        std::string norm = b.norm == AttackNorm::Linf ? "linf" : "l2";
        f.get("norm", norm);
        if (norm == "linf") {
            b.norm = AttackNorm::Linf;
        } else if (norm == "l2") {
            b.norm = AttackNorm::L2;
        } else {
            throw ConfigError(f.at("norm"), "must be \"linf\" or \"l2\"");
        }
        f.get("random_start", b.random_start);
        if (f.has("clip")) {
            std::vector<double> r;
            f.get("clip", r);
            if (r.size() != 2) throw ConfigError(f.at("clip"), "expected [lo, hi] or null");
            b.clip = std::make_pair(r[0], r[1]);
        }
    });
    section(root, "distill", [&](Fields& f) {
        auto& d = c.distill;
        f.get("k", d.k);
        f.get("leapfrog_h", d.leapfrog_h);
        f.get("ema_rate", d.ema_rate);
        f.get("lambda_rec", d.lambda_rec);
        f.get("n_iters", d.n_iters);
        f.get("batch_size", d.batch_size);
        f.get("learning_rate", d.learning_rate);
        f.get("momentum", d.momentum);
        f.get("cond_dropout_p", d.cond_dropout_p);
        f.get("use_condition", d.use_condition);
        f.get("min_victim_accuracy", d.min_victim_accuracy);
        std::string metric = d.distance.kind == DistanceKind::SquaredL2 ? "squared_l2" : "huber";
        f.get("distance_metric", metric);
        if (metric == "squared_l2") {
            d.distance.kind = DistanceKind::SquaredL2;
        } else if (metric == "huber") {
            d.distance.kind = DistanceKind::Huber;
        } else {
            throw ConfigError(f.at("distance_metric"), "must be \"squared_l2\" or \"huber\"");
        }
        f.get("huber_delta", d.distance.delta);
    });
    section(root, "semantic", [&](Fields& f) {
        f.get("sigmas", c.semantic.sigmas);
        f.get("temperature", c.semantic.temperature);
        f.get("subsample", c.semantic.subsample);
    });
    section(root, "purify", [&](Fields& f) {
        f.get("n_inference_steps", c.purify.n_inference_steps);
        std::string mode = c.purify.condition_mode == ConditionMode::None ? "none" : "fused_edge";
        f.get("condition_mode", mode);
        if (mode == "none") {
            c.purify.condition_mode = ConditionMode::None;
        } else if (mode == "fused_edge") {
            c.purify.condition_mode = ConditionMode::FusedEdge;
        } else {
            throw ConfigError(f.at("condition_mode"), "must be \"none\" or \"fused_edge\"");
        }
        f.get("renoise_schedule", c.purify.renoise_schedule);
        f.get("ddim_steps", c.purify.ddim_steps);
    });
    section(root, "eval", [&](Fields& f) {
        f.get("n_examples", c.eval.n_examples);
        f.get("timing_images", c.eval.timing_images);
        f.get("dump_images", c.eval.dump_images);
        f.get("step_sweep", c.eval.step_sweep);
        f.get("ddim_baseline", c.eval.ddim_baseline);
        f.get("identity_baseline", c.eval.identity_baseline);
    });
    root.finish();
    c.purify.semantic = c.semantic;
    return c;
}

void RunConfig::validate() const {
    if (output_dir.empty()) throw ConfigError("output_dir", "must not be empty");
    if (schedule.n_steps < 2) throw ConfigError("schedule.n_steps", "must be >= 2");
    if (!(schedule.beta_start > 0.0 && schedule.beta_start <= schedule.beta_end && schedule.beta_end < 1.0)) {
        throw ConfigError("schedule.beta_start", "need 0 < beta_start <= beta_end < 1");
    }
    if (!(skip.sigma_data > 0.0)) throw ConfigError("net.sigma_data", "must be > 0");
    if (!(skip.time_scale > 0.0)) throw ConfigError("net.time_scale", "must be > 0");
    if (teacher.time_embed_dim < 2 || teacher.time_embed_dim % 2) {
        throw ConfigError("net.time_embed_dim", "must be a positive even integer");
    }
    for (int h : teacher.hidden) {
        if (h < 1) throw ConfigError("net.hidden", "layer widths must be positive");
    }
    for (int h : classifier.hidden) {
        if (h < 1) throw ConfigError("classifier.hidden", "layer widths must be positive");
    }
    if (classifier.epochs < 1) throw ConfigError("classifier.epochs", "must be >= 1");
    if (classifier.batch_size < 1) throw ConfigError("classifier.batch_size", "must be >= 1");
    if (!(classifier.learning_rate > 0.0)) throw ConfigError("classifier.learning_rate", "must be > 0");
    if (teacher.n_iters < 0) throw ConfigError("teacher.n_iters", "must be >= 0");
    if (teacher.batch_size < 1) throw ConfigError("teacher.batch_size", "must be >= 1");
    if (!(teacher.learning_rate > 0.0)) throw ConfigError("teacher.learning_rate", "must be > 0");
    if (!(teacher.momentum >= 0.0 && teacher.momentum < 1.0)) throw ConfigError("teacher.momentum", "must lie in [0, 1)");
    attack.distill_budget().validate();
    if (attack.eval_n_iters < 1) throw ConfigError("attack.eval_n_iters", "must be >= 1");
    attack.eval_budget().validate();
    distill.validate(schedule.n_steps);
    purify.validate(schedule.n_steps);
    if (eval.n_examples < 1) throw ConfigError("eval.n_examples", "must be >= 1");
    if (eval.timing_images < 1) throw ConfigError("eval.timing_images", "must be >= 1");
    if (eval.dump_images < 0) throw ConfigError("eval.dump_images", "must be >= 0");
    for (int s : eval.step_sweep) {
        if (s < 1 || s > schedule.n_steps) throw ConfigError("eval.step_sweep", "step counts must lie in [1, n_steps]");
    }
    if (dataset == DatasetKind::Toy2d) {
        if (purify.condition_mode != ConditionMode::None) {
            throw ConfigError("purify.condition_mode", "toy2d has no images to condition on");
        }
        if (distill.use_condition) throw ConfigError("distill.use_condition", "toy2d has no images to condition on");
        if (toy2d.n_train < 2 || toy2d.n_test < 2) throw ConfigError("data.n_train", "need at least 2 examples per split");
    } else {
        if (shapes32.size < 11) throw ConfigError("data.size", "images must be at least 11 pixels wide");
        if (shapes32.n_train < 3 || shapes32.n_test < 3) throw ConfigError("data.n_train", "need at least 3 examples per split");
        if (purify.condition_mode == ConditionMode::FusedEdge && !distill.use_condition) {
            throw ConfigError("purify.condition_mode", "fused_edge inference needs distill.use_condition");
        }
    }
}

std::string RunConfig::hash() const { return io::fnv1a_hex(source.dump()); }

void apply_overrides(json& j, const std::vector<std::string>& overrides) {
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) throw ConfigError(o, "override must look like key.path=value");
        const std::string key = o.substr(0, eq);
        const std::string text = o.substr(eq + 1);
        json value;
        try {
            value = json::parse(text);
        } catch (const json::parse_error&) {
            value = text;
        }
        json* node = &j;
        std::size_t start = 0;
        while (true) {
            const auto dot = key.find('.', start);
            const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
            if (part.empty()) throw ConfigError(key, "empty component in override key");
            if (!node->is_object()) throw ConfigError(key, "override descends into a non-object");
            if (dot == std::string::npos) {
                (*node)[part] = value;
                break;
            }
            node = &(*node)[part];
            if (node->is_null()) *node = json::object();
            start = dot + 1;
        }
    }
}

RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    if (!std::filesystem::exists(path)) throw ConfigError("", "config file not found: " + path.string());
    json j = io::read_json(path);
    apply_overrides(j, overrides);
    RunConfig c = parse_config(j);
    c.validate();
    return c;
}

}  // namespace dblp
