// report.hpp - trial records (line-delimited JSON, one trial per line) and
// percentile aggregation into plot-ready table/series files.
#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsaf/env.hpp"
#include "fsaf/util.hpp"

namespace fsaf::harness {

using nlohmann::json;

struct TrialRecord {
    std::string method;
    std::string task_id;
    int trial = 0;
    std::uint64_t seed = 0;
    std::string config_hash;
    double wall_ms = 0.0;
    env::RegretCurve curve;
};

inline json trial_to_json(const TrialRecord& rec) {
    json j;
    j["method"] = rec.method;
    j["task"] = rec.task_id;
    j["trial"] = rec.trial;
    j["seed"] = rec.seed;
    j["config_hash"] = rec.config_hash;
    j["wall_ms"] = rec.wall_ms;
    json steps = json::array();
    for (const auto& s : rec.curve.steps) {
        json st;
        st["t"] = s.t;
        st["action"] = s.action_index;
        st["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
        st["y"] = s.y;
        st["best"] = s.best;
        st["regret"] = s.regret;
        st["reward"] = s.reward;
        steps.push_back(std::move(st));
    }
    j["steps"] = std::move(steps);
    return j;
}

inline TrialRecord trial_from_json(const json& j) {
    TrialRecord rec;
    rec.method = j.at("method");
    rec.task_id = j.at("task");
    rec.trial = j.at("trial");
    rec.seed = j.at("seed");
    rec.config_hash = j.value("config_hash", std::string());
    rec.wall_ms = j.value("wall_ms", 0.0);
    for (const auto& st : j.at("steps")) {
        env::RegretStep s;
        s.t = st.at("t");
        s.action_index = st.at("action");
        auto xs = st.at("x").get<std::vector<double>>();
        s.x = Eigen::Map<Eigen::VectorXd>(xs.data(), xs.size());
        s.y = st.at("y");
        s.best = st.at("best");
        s.regret = st.at("regret");
        s.reward = st.at("reward");
        rec.curve.steps.push_back(std::move(s));
    }
    return rec;
}

inline void append_records(const std::string& path, const std::vector<TrialRecord>& records) {
    std::ofstream out(path, std::ios::app);
    if (!out) throw IoError("results: cannot open " + path + " for append");
    for (const auto& rec : records) out << trial_to_json(rec).dump() << "\n";
}

inline std::vector<TrialRecord> read_records(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("results: cannot open " + path);
    std::vector<TrialRecord> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            out.push_back(trial_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw ParseError("results: " + path + " line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ValueError("percentile: no values");
    if (p < 0.0 || p > 100.0) throw ValueError("percentile: p outside [0, 100]");
    std::sort(values.begin(), values.end());
    double h = (static_cast<double>(values.size()) - 1.0) * p / 100.0;
    std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    double frac = h - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

struct ReportOptions {
    std::vector<double> percentiles{25, 50, 75, 90};
    bool scale_by_100 = false;
    std::vector<int> table_steps;  // empty: final step only
};

struct ReportResult {
    std::string table_csv;
    std::string series_csv;
};

/// Aggregates per (method, task, step): the requested regret percentiles
/// across trials. The table holds the chosen steps; the series holds every
/// step for external plotting. Record order does not matter.
inline ReportResult make_report(const std::vector<TrialRecord>& records, const ReportOptions& opts) {
    if (records.empty()) throw ValueError("report: no records in selection");

    // (method, task) -> t -> regrets across trials
    std::map<std::pair<std::string, std::string>, std::map<int, std::vector<double>>> groups;
    std::set<std::tuple<std::string, std::string, int>> seen;
    for (const auto& rec : records) {
        auto key = std::make_tuple(rec.method, rec.task_id, rec.trial);
        if (!seen.insert(key).second)
            throw ValueError("report: duplicate record for method=" + rec.method + " task=" + rec.task_id +
                             " trial=" + std::to_string(rec.trial));
        auto& per_step = groups[{rec.method, rec.task_id}];
        for (const auto& s : rec.curve.steps) per_step[s.t].push_back(s.regret);
    }

    double scale = opts.scale_by_100 ? 100.0 : 1.0;
    std::ostringstream series;
    series << "method,task,t";
    for (double p : opts.percentiles) series << ",p" << p;
    series << "\n";
    for (const auto& [key, per_step] : groups) {
        for (const auto& [t, regrets] : per_step) {
            series << key.first << "," << key.second << "," << t;
            for (double p : opts.percentiles) series << "," << scale * percentile(regrets, p);
            series << "\n";
        }
    }

    std::ostringstream table;
    table << "method,task,t";
    for (double p : opts.percentiles) table << ",p" << p;
    table << "\n";
    for (const auto& [key, per_step] : groups) {
        std::vector<int> steps = opts.table_steps;
        if (steps.empty()) steps = {per_step.rbegin()->first};
        for (int t : steps) {
            auto it = per_step.find(t);
            if (it == per_step.end())
                throw ValueError("report: no records at step " + std::to_string(t) + " for method=" +
                                 key.first);
            table << key.first << "," << key.second << "," << t;
            for (double p : opts.percentiles) table << "," << scale * percentile(it->second, p);
            table << "\n";
        }
    }
    return {table.str(), series.str()};
}

}  // namespace fsaf::harness
