// checkpoint.hpp - versioned particle-set container: config hash, layer
// shapes, flattened parameter arrays for every particle and target, training
// iteration counter, and the rng derivation state (master seed + iteration).
#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsaf/bdqn.hpp"
#include "fsaf/util.hpp"

namespace fsaf::harness {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

struct Checkpoint {
    bdqn::ParticleSet set;
    std::string config_hash;
    std::uint64_t master_seed = 0;
};

namespace ckpt_detail {

inline std::vector<double> flatten(const qnet::ParamVec& params) {
    std::vector<double> flat;
    for (const auto& t : params) flat.insert(flat.end(), t.data.begin(), t.data.end());
    return flat;
}

inline qnet::ParamVec unflatten(const qnet::Arch& arch, const std::vector<double>& flat) {
    qnet::ParamVec out;
    std::size_t at = 0;
    for (auto [r, c] : arch.layer_shapes()) {
        std::size_t count = static_cast<std::size_t>(r) * c;
        if (at + count > flat.size()) throw ParseError("checkpoint: parameter array too short");
        out.emplace_back(r, c, std::vector<double>(flat.begin() + at, flat.begin() + at + count));
        at += count;
    }
    if (at != flat.size()) throw ParseError("checkpoint: parameter array length mismatch");
    return out;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const auto& set = ckpt.set;
    json j;
    j["version"] = kCheckpointVersion;
    j["config_hash"] = ckpt.config_hash;
    j["master_seed"] = ckpt.master_seed;
    j["iteration"] = set.iteration;
    j["arch"] = {{"hidden_layers", set.arch.hidden_layers}, {"hidden_width", set.arch.hidden_width}};
    json shapes = json::array();
    for (auto [r, c] : set.arch.layer_shapes()) shapes.push_back({r, c});
    j["layer_shapes"] = shapes;
    j["num_particles"] = set.num_particles();
    json particles = json::array(), targets = json::array();
    for (int n = 0; n < set.num_particles(); ++n) {
        particles.push_back(ckpt_detail::flatten(qnet::values_of(set.particles[n])));
        targets.push_back(ckpt_detail::flatten(set.targets[n]));
    }
    j["particles"] = std::move(particles);
    j["targets"] = std::move(targets);

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw IoError("checkpoint: cannot write " + tmp);
        out << j.dump() << "\n";
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw IoError("checkpoint: cannot move " + tmp + " into place");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("checkpoint: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ParseError("checkpoint: " + path + ": " + e.what());
    }
    if (j.value("version", -1) != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported version in " + path);

    Checkpoint ckpt;
    ckpt.config_hash = j.value("config_hash", std::string());
    ckpt.master_seed = j.value("master_seed", std::uint64_t{0});
    ckpt.set.arch = qnet::Arch{j["arch"]["hidden_layers"], j["arch"]["hidden_width"]};
    ckpt.set.iteration = j["iteration"];

    auto expected = ckpt.set.arch.layer_shapes();
    auto shapes = j["layer_shapes"];
    if (shapes.size() != expected.size()) throw ParseError("checkpoint: layer shape list mismatch");
    for (std::size_t i = 0; i < expected.size(); ++i)
        if (shapes[i][0] != expected[i].first || shapes[i][1] != expected[i].second)
            throw ParseError("checkpoint: layer shape mismatch at index " + std::to_string(i));

    int n = j["num_particles"];
    for (int i = 0; i < n; ++i) {
        ckpt.set.particles.push_back(qnet::as_leaves(
            ckpt_detail::unflatten(ckpt.set.arch, j["particles"][i].get<std::vector<double>>())));
        ckpt.set.targets.push_back(
            ckpt_detail::unflatten(ckpt.set.arch, j["targets"][i].get<std::vector<double>>()));
    }
    return ckpt;
}

}  // namespace fsaf::harness
