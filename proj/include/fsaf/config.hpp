// config.hpp - experiment configuration: presets, JSON round-trip with
// unknown-key rejection, and a stable hash of the effective settings.
#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsaf/env.hpp"
#include "fsaf/meta.hpp"
#include "fsaf/qnet.hpp"
#include "fsaf/util.hpp"

namespace fsaf::harness {

using nlohmann::json;

struct ExperimentConfig {
    std::string preset = "desk";

    // training hyperparameters
    int batch_size = 64;
    int target_update_interval = 5;
    double eta = 0.01;    // lower-level learning rate
    double beta = 0.001;  // upper-level learning rate
    std::size_t buffer_capacity = 1000;
    double gamma = 0.98;
    int num_particles = 5;
    int budget = 30;     // T
    int grid_size = 64;  // Sobol grid cardinality
    int adapt_steps = 5;   // K
    int leader_steps = 1;  // S
    double kappa = 1.0 / 128.0;
    double alpha = 1.0;
    double temperature = 1.0;

    // architecture
    std::string arch = "desk";  // "desk" (2x32) or "paper" (4x200)
    int hidden_layers = 2;
    int hidden_width = 32;

    // tasks and protocol
    std::vector<std::string> tasks;
    std::uint64_t seed = 0;
    int trials = 100;
    int iterations = 200;
    int task_batch_size = 3;
    int episodes_per_task = 4;
    int domain_dim = 1;
    double noise_variance = 1e-4;
    int metric_step = 30;
    int checkpoint_interval = 10;

    // modes
    std::string meta_grad_mode = "exact";  // or "first_order"
    std::string meta_loss = "chaser";      // or "td"
    std::string ensemble_mode = "mean";    // or "sample"
    double ucb_delta = 0.0;                // 0: grid-search over {1e-1 .. 1e-6}

    // continuous-domain AF maximization
    int n_coarse = 2000;
    int n_m = 10;
    int n_local = 1000;

    static ExperimentConfig from_preset(const std::string& name) {
        ExperimentConfig c;
        c.preset = name;
        c.tasks = env::default_training_tasks();
        if (name == "desk") {
            c.batch_size = 64;
            c.budget = 30;
            c.grid_size = 64;
            c.domain_dim = 1;
            c.arch = "desk";
            c.hidden_layers = 2;
            c.hidden_width = 32;
            c.iterations = 200;
        } else if (name == "paper") {
            c.batch_size = 128;
            c.budget = 100;
            c.grid_size = 200;
            c.domain_dim = 3;
            c.arch = "paper";
            c.hidden_layers = 4;
            c.hidden_width = 200;
            c.iterations = 1000;
        } else {
            throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
        }
        return c;
    }

    qnet::Arch net_arch() const { return qnet::Arch{hidden_layers, hidden_width}; }

    env::TaskDefaults task_defaults() const {
        return env::TaskDefaults{domain_dim, grid_size, budget, noise_variance};
    }

    std::vector<env::TaskSpec> parsed_tasks() const {
        std::vector<env::TaskSpec> out;
        for (const auto& t : tasks) out.push_back(env::parse_task_spec(t, task_defaults()));
        return out;
    }

    meta::TrainSettings train_settings() const {
        meta::TrainSettings s;
        s.arch = net_arch();
        s.num_particles = num_particles;
        s.adapt_steps = adapt_steps;
        s.leader_steps = leader_steps;
        s.alpha = alpha;
        s.eta = eta;
        s.beta = beta;
        s.gamma = gamma;
        s.kappa = kappa;
        s.temperature = temperature;
        s.batch_size = batch_size;
        s.buffer_capacity = buffer_capacity;
        s.target_update_interval = target_update_interval;
        s.iterations = iterations;
        s.task_batch_size = task_batch_size;
        s.episodes_per_task = episodes_per_task;
        s.budget = budget;
        s.metric_step = metric_step;
        s.seed = seed;
        s.first_order = (meta_grad_mode == "first_order");
        s.chaser = (meta_loss == "chaser");
        s.tasks = parsed_tasks();
        return s;
    }

    json to_json() const {
        json j;
        j["preset"] = preset;
        j["batch_size"] = batch_size;
        j["target_update_interval"] = target_update_interval;
        j["eta"] = eta;
        j["beta"] = beta;
        j["buffer_capacity"] = buffer_capacity;
        j["gamma"] = gamma;
        j["num_particles"] = num_particles;
        j["budget"] = budget;
        j["grid_size"] = grid_size;
        j["adapt_steps"] = adapt_steps;
        j["leader_steps"] = leader_steps;
        j["kappa"] = kappa;
        j["alpha"] = alpha;
        j["temperature"] = temperature;
        j["arch"] = arch;
        j["hidden_layers"] = hidden_layers;
        j["hidden_width"] = hidden_width;
        j["tasks"] = tasks;
        j["seed"] = seed;
        j["trials"] = trials;
        j["iterations"] = iterations;
        j["task_batch_size"] = task_batch_size;
        j["episodes_per_task"] = episodes_per_task;
        j["domain_dim"] = domain_dim;
        j["noise_variance"] = noise_variance;
        j["metric_step"] = metric_step;
        j["checkpoint_interval"] = checkpoint_interval;
        j["meta_grad_mode"] = meta_grad_mode;
        j["meta_loss"] = meta_loss;
        j["ensemble_mode"] = ensemble_mode;
        j["ucb_delta"] = ucb_delta;
        j["n_coarse"] = n_coarse;
        j["n_m"] = n_m;
        j["n_local"] = n_local;
        return j;
    }

    std::string dump() const { return to_json().dump(2) + "\n"; }

    /// FNV-1a of the canonical dump: changes iff any effective field changes.
    std::string hash() const {
        std::uint64_t h = hash_tag(to_json().dump());
        char buf[17];
        std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
        return std::string(buf);
    }

    /// Applies key overrides from JSON; unknown keys are rejected by name.
    /// Returns the list of keys that were overridden.
    std::vector<std::string> apply(const json& j) {
        std::vector<std::string> overridden;
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            if (key == "preset") continue;  // handled by the loader
            overridden.push_back(key);
            if (key == "batch_size") batch_size = *it;
            else if (key == "target_update_interval") target_update_interval = *it;
            else if (key == "eta") eta = *it;
            else if (key == "beta") beta = *it;
            else if (key == "buffer_capacity") buffer_capacity = *it;
            else if (key == "gamma") gamma = *it;
            else if (key == "num_particles") num_particles = *it;
            else if (key == "budget") budget = *it;
            else if (key == "grid_size") grid_size = *it;
            else if (key == "adapt_steps") adapt_steps = *it;
            else if (key == "leader_steps") leader_steps = *it;
            else if (key == "kappa") kappa = *it;
            else if (key == "alpha") alpha = *it;
            else if (key == "temperature") temperature = *it;
            else if (key == "arch") {
                arch = it->get<std::string>();
                if (arch == "desk") { hidden_layers = 2; hidden_width = 32; }
                else if (arch == "paper") { hidden_layers = 4; hidden_width = 200; }
                else throw ConfigError("unknown arch preset '" + arch + "'");
            }
            else if (key == "hidden_layers") hidden_layers = *it;
            else if (key == "hidden_width") hidden_width = *it;
            else if (key == "tasks") tasks = it->get<std::vector<std::string>>();
            else if (key == "seed") seed = *it;
            else if (key == "trials") trials = *it;
            else if (key == "iterations") iterations = *it;
            else if (key == "task_batch_size") task_batch_size = *it;
            else if (key == "episodes_per_task") episodes_per_task = *it;
            else if (key == "domain_dim") domain_dim = *it;
            else if (key == "noise_variance") noise_variance = *it;
            else if (key == "metric_step") metric_step = *it;
            else if (key == "checkpoint_interval") checkpoint_interval = *it;
            else if (key == "meta_grad_mode") meta_grad_mode = it->get<std::string>();
            else if (key == "meta_loss") meta_loss = it->get<std::string>();
            else if (key == "ensemble_mode") ensemble_mode = it->get<std::string>();
            else if (key == "ucb_delta") ucb_delta = *it;
            else if (key == "n_coarse") n_coarse = *it;
            else if (key == "n_m") n_m = *it;
            else if (key == "n_local") n_local = *it;
            else throw ConfigError("unknown config key '" + key + "'");
        }
        return overridden;
    }

    static ExperimentConfig load(const std::string& path, std::vector<std::string>* overridden = nullptr) {
        std::ifstream in(path);
        if (!in) throw IoError("config: cannot open " + path);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw ParseError("config: " + path + ": " + e.what());
        }
        std::string preset = j.value("preset", std::string("desk"));
        ExperimentConfig c = from_preset(preset);
        auto keys = c.apply(j);
        if (overridden) *overridden = keys;
        return c;
    }
};

}  // namespace fsaf::harness
