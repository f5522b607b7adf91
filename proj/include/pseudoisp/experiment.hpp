// Copyright (c) 2026 The Pseudo-ISP Project Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Ablation driver: simulate -> adapt -> evaluate, one row per axis value.
// Outputs report.json, table.txt and curve.csv in the experiment directory.

#include <sstream>

#include "pseudoisp/config.hpp"

namespace pseudoisp {

enum class AblationAxis { none, sharing_scope, r, t, loss_variant };

inline std::string to_string(AblationAxis a) {
    switch (a) {
        case AblationAxis::none: return "none";
        case AblationAxis::sharing_scope: return "sharing_scope";
        case AblationAxis::r: return "r";
        case AblationAxis::t: return "t";
        case AblationAxis::loss_variant: return "loss_variant";
    }
    return "?";
}

inline AblationAxis ablation_axis_from_string(const std::string& s) {
    if (s == "none") return AblationAxis::none;
    if (s == "sharing_scope") return AblationAxis::sharing_scope;
    if (s == "r") return AblationAxis::r;
    if (s == "t") return AblationAxis::t;
    if (s == "loss_variant") return AblationAxis::loss_variant;
    throw std::invalid_argument("unknown ablation axis '" + s + "'");
}

/// Values swept when none are given.
inline std::vector<std::string> default_axis_values(AblationAxis a) {
    switch (a) {
        case AblationAxis::none: return {};
        case AblationAxis::sharing_scope: return {"patch", "image", "set"};
        case AblationAxis::r: return {"0.25", "0.5", "0.75", "1.0"};
        case AblationAxis::t: return {"1", "2", "3", "4"};
        case AblationAxis::loss_variant: return {"folded_normal", "squared_residual"};
    }
    return {};
}

struct ExperimentSpec {
    RunConfig config;
    AblationAxis axis = AblationAxis::none;
    std::vector<std::string> values;  // empty: default_axis_values(axis)
    std::filesystem::path out_dir;
    std::function<void(const std::string&)> on_log;
};

struct ExperimentRow {
    std::string value;  // axis value, "-" for the no-axis run
    double psnr_db = 0;
    double ssim = 0;
    int rounds = 0;
    std::vector<RoundMetrics> curve;  // per-round metrics of the run behind this row
};

struct ExperimentReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    AblationAxis axis = AblationAxis::none;
    RoundMetrics baseline;
    std::vector<ExperimentRow> rows;

    nlohmann::json to_json() const {
        nlohmann::json j{{"config_hash", config_hash}, {"seed", seed}, {"axis", to_string(axis)}};
        j["baseline"] = {{"psnr_db", baseline.psnr_db}, {"ssim", baseline.ssim}};
        j["rows"] = nlohmann::json::array();
        for (const auto& r : rows) {
            nlohmann::json row{{"value", r.value}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}, {"rounds", r.rounds}};
            row["curve"] = nlohmann::json::array();
            for (const auto& m : r.curve) row["curve"].push_back({{"t", m.round}, {"psnr_db", m.psnr_db}, {"ssim", m.ssim}});
            j["rows"].push_back(std::move(row));
        }
        return j;
    }

    /// Plain-text table; one row per axis value.
    std::string table() const {
        const std::string head = axis == AblationAxis::none ? "run" : to_string(axis);
        std::ostringstream os;
        char line[160];
        std::snprintf(line, sizeof line, "%-18s %10s %8s\n", head.c_str(), "PSNR(dB)", "SSIM");
        os << line;
        std::snprintf(line, sizeof line, "%-18s %10.2f %8.4f\n", "baseline (t=0)", baseline.psnr_db, baseline.ssim);
        os << line;
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "%-18s %10.2f %8.4f\n", r.value.c_str(), r.psnr_db, r.ssim);
            os << line;
        }
        return os.str();
    }

    /// CSV: value,t,psnr_db,ssim, with t=0 as the shared baseline.
    std::string curve_csv() const {
        std::ostringstream os;
        os << "value,t,psnr_db,ssim\n";
        char line[160];
        for (const auto& r : rows) {
            std::snprintf(line, sizeof line, "%s,0,%.6f,%.6f\n", r.value.c_str(), baseline.psnr_db, baseline.ssim);
            os << line;
            for (const auto& m : r.curve) {
                std::snprintf(line, sizeof line, "%s,%d,%.6f,%.6f\n", r.value.c_str(), m.round, m.psnr_db, m.ssim);
                os << line;
            }
        }
        return os.str();
    }
};

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline RunConfig apply_axis_value(RunConfig c, AblationAxis axis, const std::string& v) {
    switch (axis) {
        case AblationAxis::none:
        case AblationAxis::t: break;
        case AblationAxis::sharing_scope: c.adaption.pseudo_isp.sharing_scope = sharing_scope_from_string(v); break;
        case AblationAxis::r: {
            std::size_t used = 0;
            const double r = std::stod(v, &used);
            if (used != v.size()) throw std::invalid_argument("experiment: bad r value '" + v + "'");
            c.adaption.r = r;
            break;
        }
        case AblationAxis::loss_variant: c.adaption.pseudo_isp.loss_variant = noise_loss_from_string(v); break;
    }
    c.validate();
    return c;
}

}  // namespace detail

/// Runs the experiment. Every row uses the same simulated dataset and seeds; only
/// the axis value differs. The t axis is one run of max(t) rounds with early
/// stopping disabled, read out after each round.
inline ExperimentReport run_experiment(const ExperimentSpec& spec) {
    namespace fs = std::filesystem;
    auto values = spec.values.empty() ? default_axis_values(spec.axis) : spec.values;
    if (spec.axis != AblationAxis::none && values.empty()) throw std::invalid_argument("experiment: no axis values");
    if (spec.axis == AblationAxis::none && !values.empty())
        throw std::invalid_argument("experiment: values given without an ablation axis");

    ExperimentReport report;
    report.config_hash = config_hash(spec.config);
    report.seed = spec.config.seed;
    report.axis = spec.axis;
    auto log = [&](const std::string& s) {
        if (spec.on_log) spec.on_log(s);
    };

    const SimulatedDataset ds = [&] {
        try {
            return build_dataset(spec.config);
        } catch (const std::exception& e) {
            throw std::runtime_error(std::string("experiment: dataset stage: ") + e.what());
        }
    }();
    const auto sets = benchmark_sets(ds);
    const bool persist = !spec.out_dir.empty();
    if (persist) fs::create_directories(spec.out_dir);

    auto run_one = [&](const RunConfig& cfg, const std::string& tag) {
        AdaptionRun run;
        run.config_hash = config_hash(cfg);
        if (persist) run.run_dir = spec.out_dir / "runs" / tag;
        run.on_log = [&](const std::string& s) { log("[" + tag + "] " + s); };
        try {
            return run_adaption(sets.noisy, sets.clean, initial_denoiser(cfg), cfg.adaption, sets.heldout, run,
                                &sets.noisy_references);
        } catch (const std::exception& e) {
            throw std::runtime_error("experiment: run '" + tag + "': " + e.what());
        }
    };

    if (spec.axis == AblationAxis::t) {
        std::vector<int> ts;
        for (const auto& v : values) {
            const int t = std::stoi(v);
            if (t < 1) throw std::invalid_argument("experiment: t values must be >= 1");
            ts.push_back(t);
        }
        RunConfig cfg = spec.config;
        cfg.adaption.t_max = *std::max_element(ts.begin(), ts.end());
        cfg.adaption.early_stop = false;
        const auto state = run_one(cfg, "t");
        report.baseline = state.baseline;
        for (int t : ts) {
            const auto& m = state.rounds.at(t - 1);
            report.rows.push_back({std::to_string(t), m.psnr_db, m.ssim, t,
                                   std::vector<RoundMetrics>(state.rounds.begin(), state.rounds.begin() + t)});
        }
    } else if (spec.axis == AblationAxis::none) {
        const auto state = run_one(spec.config, "base");
        report.baseline = state.baseline;
        const auto& last = state.rounds.back();
        report.rows.push_back({"-", last.psnr_db, last.ssim, static_cast<int>(state.rounds.size()), state.rounds});
    } else {
        for (const auto& v : values) {
            const RunConfig cfg = detail::apply_axis_value(spec.config, spec.axis, v);
            const auto state = run_one(cfg, to_string(spec.axis) + "-" + v);
            report.baseline = state.baseline;
            const auto& last = state.rounds.back();
            report.rows.push_back({v, last.psnr_db, last.ssim, static_cast<int>(state.rounds.size()), state.rounds});
        }
    }

    if (persist) {
        detail::write_json(spec.out_dir / "report.json", report.to_json());
        detail::write_text(spec.out_dir / "table.txt", report.table());
        detail::write_text(spec.out_dir / "curve.csv", report.curve_csv());
    }
    return report;
}

}  // namespace pseudoisp
