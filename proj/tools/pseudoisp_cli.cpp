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

// Command-line driver. Exit codes: 0 success, 1 usage error, 2 runtime failure.

#include <CLI11.hpp>

#include <chrono>
#include <iostream>

#include "pseudoisp/experiment.hpp"
#include "pseudoisp/verify.hpp"

namespace fs = std::filesystem;
using namespace pseudoisp;

namespace {

struct GlobalOptions {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool paper_scale = false;
    std::string out = "out";
};

RunConfig resolve_config(const GlobalOptions& g) {
    RunConfig c = g.config.empty() ? preset_config("desk") : load_config(g.config);
    if (g.seed) c.set_seed(*g.seed);
    if (g.paper_scale) c.paper_scale();
    c.validate();
    return c;
}

void log_line(const std::string& s) {
    static const auto start = std::chrono::steady_clock::now();
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::fprintf(stderr, "[%8.1fs] %s\n", t, s.c_str());
}

// Noisy/clean sets from a dataset directory when given, else simulated from the config.
SimulatedDataset dataset_for(const RunConfig& c, const std::string& dir) {
    if (!dir.empty()) return load_dataset(dir);
    log_line("simulating dataset (" + std::to_string(c.dataset.noisy) + " noisy, " + std::to_string(c.dataset.heldout) +
             " held-out, " + std::to_string(c.dataset.clean) + " clean)");
    return build_dataset(c);
}

void write_config(const fs::path& out, const RunConfig& c) {
    fs::create_directories(out);
    detail::write_json(out / "config.json", to_json(c));
}

int cmd_simulate(const GlobalOptions& g) {
    const RunConfig c = resolve_config(g);
    const int total = c.dataset.noisy + c.dataset.heldout + c.dataset.clean;
    const auto scenes = make_scene_set(total, c.dataset.height, c.dataset.width, derive_seed(c.seed, {5}));
    const auto manifest = generate_dataset(c.profile, scenes, g.out, DatasetSplit{c.dataset.noisy, c.dataset.heldout},
                                           derive_seed(c.seed, {6}));
    log_line("wrote " + std::to_string((manifest.at("entries").size() - 1)) + " images to " + g.out);
    return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& dataset_dir, const std::string& targets) {
    const RunConfig c = resolve_config(g);
    const auto ds = dataset_for(c, dataset_dir);
    const auto sets = benchmark_sets(ds);
    std::vector<PseudoPair> pairs;
    if (targets == "oracle") {
        for (const auto& s : ds.noisy) pairs.push_back({s.srgb, s.clean_srgb, s.id});
    } else {
        pairs = build_pseudo_pairs(initial_denoiser(c), sets.noisy);
    }
    const fs::path out = g.out;
    write_config(out, c);
    fs::create_directories(out / "pseudoisp-ckpts");
    const auto models = train_pseudoisp_scoped(pairs, c.adaption.pseudo_isp);
    nlohmann::json report = nlohmann::json::array();
    for (std::size_t i = 0; i < models.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "model_%03zu.ckpt", i);
        models[i].trained.model.to_checkpoint().save(out / "pseudoisp-ckpts" / name);
        report.push_back({{"id", models[i].id},
                          {"checkpoint", std::string("pseudoisp-ckpts/") + name},
                          {"initial_loss", models[i].trained.report.initial_smoothed},
                          {"final_loss", models[i].trained.report.final_smoothed}});
    }
    detail::write_json(out / "train_report.json", {{"config_hash", config_hash(c)}, {"models", report}});
    log_line("trained " + std::to_string(models.size()) + " Pseudo-ISP model(s) into " + out.string());
    return 0;
}

int cmd_synthesize(const GlobalOptions& g, const std::string& dataset_dir, const std::vector<std::string>& model_paths) {
    const RunConfig c = resolve_config(g);
    std::vector<PseudoIspModel<float>> models;
    for (const auto& p : model_paths) models.push_back(PseudoIspModel<float>::from_checkpoint(Checkpoint::load(p)));
    const auto ds = dataset_for(c, dataset_dir);
    const auto sets = benchmark_sets(ds);
    const auto pairs = synthesize_set(models, sets.clean, c.adaption.synthetic_per_clean, derive_seed(c.seed, {8}));
    const fs::path out = g.out;
    fs::create_directories(out);
    nlohmann::json manifest = nlohmann::json::array();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "synthetic_%04zu.png", i);
        write_png(out / name, pairs[i].noisy, 16);
        manifest.push_back({{"file", name},
                            {"clean_id", sets.clean[i / (pairs.size() / sets.clean.size())].id},
                            {"model_id", pairs[i].model_id},
                            {"seed", pairs[i].seed}});
    }
    detail::write_json(out / "manifest.json", {{"config_hash", config_hash(c)}, {"images", manifest}});
    log_line("synthesized " + std::to_string(pairs.size()) + " noisy images into " + out.string());
    return 0;
}

int cmd_adapt(const GlobalOptions& g, const std::string& dataset_dir) {
    const RunConfig c = resolve_config(g);
    const auto ds = dataset_for(c, dataset_dir);
    const auto sets = benchmark_sets(ds);
    write_config(g.out, c);
    AdaptionRun run;
    run.run_dir = g.out;
    run.config_hash = config_hash(c);
    run.on_log = log_line;
    const auto state =
        run_adaption(sets.noisy, sets.clean, initial_denoiser(c), c.adaption, sets.heldout, run, &sets.noisy_references);
    state.denoiser.save(fs::path(g.out) / "denoiser.ckpt");
    char line[128];
    std::snprintf(line, sizeof line, "baseline %.3f dB -> final %.3f dB after %zu round(s)", state.baseline.psnr_db,
                  state.rounds.empty() ? state.baseline.psnr_db : state.rounds.back().psnr_db, state.rounds.size());
    log_line(line);
    return 0;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& dataset_dir, const std::string& denoiser_path) {
    const RunConfig c = resolve_config(g);
    const Denoiser d = denoiser_path.empty() ? Denoiser::gaussian() : Denoiser::load(denoiser_path);
    const auto ds = dataset_for(c, dataset_dir);
    const auto sets = benchmark_sets(ds);
    const auto summary = evaluate_denoiser(d, sets.heldout, 0);
    fs::create_directories(g.out);
    auto j = to_json(summary);
    j["denoiser"] = to_string(d.kind);
    j["config_hash"] = config_hash(c);
    detail::write_json(fs::path(g.out) / "metrics.json", j);
    std::printf("%s PSNR %.3f dB SSIM %.4f on %zu held-out images\n", to_string(d.kind).c_str(), summary.mean_psnr,
                summary.mean_ssim, summary.records.size());
    return 0;
}

int cmd_verify(const GlobalOptions& g) {
    const RunConfig c = resolve_config(g);
    write_config(g.out, c);
    const auto r = verify_assumptions(c, g.out, log_line);
    std::printf("map: held-out forward %.2f dB, round trip %.2f dB\n", r.min_heldout_forward_psnr,
                r.min_heldout_roundtrip_psnr);
    std::printf("noise: max bin relative error %.3f, median pixel relative error %.3f, sRGB check %.2f dB\n",
                r.taylor.max_bin_rel_error, r.taylor.median_pixel_rel_error, r.taylor.srgb_psnr);
    return 0;
}

int cmd_experiment(const GlobalOptions& g, const std::string& axis, const std::vector<std::string>& values) {
    ExperimentSpec spec;
    spec.config = resolve_config(g);
    spec.axis = ablation_axis_from_string(axis);
    spec.values = values;
    spec.out_dir = g.out;
    spec.on_log = log_line;
    write_config(g.out, spec.config);
    const auto report = run_experiment(spec);
    std::cout << report.table();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Pseudo-ISP noise modelling and denoiser adaption"};
    app.require_subcommand(1);
    app.fallthrough();
    GlobalOptions g;
    std::uint64_t seed = 0;
    app.add_option("--config", g.config, "JSON run configuration (default: desk preset)");
    auto* seed_opt = app.add_option("--seed", seed, "Master seed; re-derives every sub-seed");
    app.add_flag("--paper-scale", g.paper_scale, "Use the published iteration counts");
    app.add_option("--out", g.out, "Output directory")->capture_default_str();

    std::string dataset_dir, targets = "blur", denoiser_path, axis = "none";
    std::vector<std::string> model_paths, values;

    auto* simulate = app.add_subcommand("simulate", "Write a simulated noisy/clean dataset");
    auto* train = app.add_subcommand("train-pseudoisp", "Train Pseudo-ISP models on pseudo pairs");
    train->add_option("--dataset", dataset_dir, "Dataset directory from 'simulate' (default: simulate in memory)");
    train->add_option("--targets", targets, "Pseudo-clean targets: blur (initial denoiser) or oracle (true clean)")
        ->check(CLI::IsMember({"blur", "oracle"}));
    auto* synthesize = app.add_subcommand("synthesize", "Synthesize noisy images from the clean set");
    synthesize->add_option("--dataset", dataset_dir, "Dataset directory from 'simulate'");
    synthesize->add_option("--model", model_paths, "Pseudo-ISP checkpoint(s)")->required()->check(CLI::ExistingFile);
    auto* adapt = app.add_subcommand("adapt", "Run the alternating denoiser adaption");
    adapt->add_option("--dataset", dataset_dir, "Dataset directory from 'simulate'");
    auto* evaluate = app.add_subcommand("evaluate", "Score a denoiser on the held-out split");
    evaluate->add_option("--dataset", dataset_dir, "Dataset directory from 'simulate'");
    evaluate->add_option("--denoiser", denoiser_path, "Denoiser checkpoint (default: Gaussian blur)")
        ->check(CLI::ExistingFile);
    auto* verify = app.add_subcommand("verify-assumptions", "Check the element-wise map and Taylor noise model");
    auto* experiment = app.add_subcommand("experiment", "Run an ablation sweep");
    experiment->add_option("--axis", axis, "none, sharing_scope, r, t or loss_variant")
        ->check(CLI::IsMember({"none", "sharing_scope", "r", "t", "loss_variant"}));
    experiment->add_option("--values", values, "Axis values (default: the standard sweep)")->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e, std::cerr, std::cerr);
        std::cerr << app.help();
        return 1;
    }
    if (seed_opt->count()) g.seed = seed;

    try {
        if (simulate->parsed()) return cmd_simulate(g);
        if (train->parsed()) return cmd_train(g, dataset_dir, targets);
        if (synthesize->parsed()) return cmd_synthesize(g, dataset_dir, model_paths);
        if (adapt->parsed()) return cmd_adapt(g, dataset_dir);
        if (evaluate->parsed()) return cmd_evaluate(g, dataset_dir, denoiser_path);
        if (verify->parsed()) return cmd_verify(g);
        if (experiment->parsed()) return cmd_experiment(g, axis, values);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 1;
}
