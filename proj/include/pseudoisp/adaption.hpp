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

// The alternating unpaired adaption loop. Each round:
//   1. pseudo pairs (Y, denoise(Y)) from the current denoiser,
//   2. Pseudo-ISP training on those pairs,
//   3. synthetic pairs (X, Y_hat) for every clean image,
//   4. denoiser finetuning on a stratified mix of both pair stores.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>

#include "pseudoisp/denoiser.hpp"
#include "pseudoisp/metrics.hpp"
#include "pseudoisp/synthesis.hpp"

namespace pseudoisp {

struct NamedImage {
    std::string id;
    Image image;
};

inline std::vector<NamedImage> name_images(const std::vector<Image>& images, const std::string& prefix) {
    std::vector<NamedImage> out;
    char id[64];
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::snprintf(id, sizeof id, "%s_%03zu", prefix.c_str(), i);
        out.push_back({id, images[i]});
    }
    return out;
}

/// One pseudo pair per noisy image; pseudo_clean = d(noisy).
inline std::vector<PseudoPair> build_pseudo_pairs(const Denoiser& d, const std::vector<NamedImage>& noisy_set) {
    if (noisy_set.empty()) throw std::invalid_argument("build_pseudo_pairs: empty noisy set");
    std::vector<PseudoPair> pairs(noisy_set.size());
    parallel_for(noisy_set.size(), [&](std::size_t i) {
        pairs[i] = PseudoPair{noisy_set[i].image, d.denoise(noisy_set[i].image), noisy_set[i].id, 0, 0};
    });
    return pairs;
}

struct FinetuneConfig {
    int iterations = 300;
    int batch = 16;
    int patch_size = 48;
    double learning_rate = 1e-3;
};

struct AdaptionConfig {
    int t_max = 3;
    double r = 0.5;  // synthetic share of every mini-batch
    FinetuneConfig finetune;
    CompactCnnArch denoiser_arch;
    TrainConfig pseudo_isp;
    int synthetic_per_clean = 0;  // models used per clean image; 0 = all
    bool warm_start_pseudoisp = false;
    bool early_stop = true;
    double early_stop_db = 0.02;
    bool write_synthetic_images = true;
    std::uint64_t seed = 0;

    void validate() const {
        if (t_max < 1) throw std::invalid_argument("adaption config: t_max must be >= 1");
        if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("adaption config: r must lie in [0, 1]");
        if (finetune.iterations < 0 || finetune.batch < 1 || finetune.patch_size < 2)
            throw std::invalid_argument("adaption config: invalid finetune schedule");
        if (!(finetune.learning_rate > 0)) throw std::invalid_argument("adaption config: finetune lr must be positive");
        if (synthetic_per_clean < 0) throw std::invalid_argument("adaption config: synthetic_per_clean must be >= 0");
        pseudo_isp.validate();
    }
};

/// Exact-count batch mixing: batch k holds floor((k+1)*B*r) - floor(k*B*r)
/// synthetic samples, so over K batches the synthetic count is floor(K*B*r).
class StratifiedSampler {
public:
    StratifiedSampler(int batch, double r) : batch_(batch), r_(r) {}

    int synthetic_in_batch(long long k) const {
        return static_cast<int>(quota(k + 1) - quota(k));
    }

private:
    long long quota(long long k) const {
        return static_cast<long long>(std::floor(static_cast<double>(k) * batch_ * r_ + 1e-9));
    }
    int batch_;
    double r_;
};

struct SamplerCounts {
    long long synthetic = 0;
    long long pseudo = 0;
};

struct FinetuneResult {
    Denoiser denoiser;
    SamplerCounts counts;
    std::vector<double> loss;
};

/// Minimises |d(Y_hat) - X|^2 over synthetic pairs plus |d(Y) - X_hat|^2 over
/// pseudo pairs, mixed per batch by ratio r. A non-trainable starting
/// denoiser is replaced by a fresh compact CNN.
inline FinetuneResult finetune_denoiser(const Denoiser& d, const std::vector<PseudoPair>& pseudo,
                                        const std::vector<SyntheticPair>& synthetic, const AdaptionConfig& config,
                                        std::uint64_t seed) {
    if (pseudo.empty() && synthetic.empty()) throw std::invalid_argument("finetune_denoiser: both pair stores are empty");
    const auto& ft = config.finetune;
    StratifiedSampler sampler(ft.batch, config.r);
    if (config.r > 0 && synthetic.empty()) throw std::invalid_argument("finetune_denoiser: r > 0 but no synthetic pairs");
    if (config.r < 1 && pseudo.empty()) throw std::invalid_argument("finetune_denoiser: r < 1 but no pseudo pairs");

    FinetuneResult out;
    out.denoiser = d.trainable() ? d.clone() : Denoiser::compact_cnn(config.denoiser_arch, derive_seed(seed, {0}));
    Rng rng(derive_seed(seed, {1}));
    auto params = out.denoiser.net.parameters();
    AdamState<float> adam(params, AdamOptions{ft.learning_rate});
    std::vector<Image> inputs(ft.batch), targets(ft.batch);
    auto sample = [&](const Image& in, const Image& target, Image& pin, Image& ptarget) {
        const int p = ft.patch_size;
        auto pick = [&](int extent) {
            if (extent <= p) return 0;
            return std::uniform_int_distribution<int>(0, extent - p)(rng);
        };
        const int top = pick(in.height), left = pick(in.width);
        pin = crop_reflect(in, top, left, p, p);
        ptarget = crop_reflect(target, top, left, p, p);
    };
    for (long long k = 0; k < ft.iterations; ++k) {
        const int s = sampler.synthetic_in_batch(k);
        for (int b = 0; b < ft.batch; ++b) {
            if (b < s) {
                const auto& sp = synthetic[std::uniform_int_distribution<std::size_t>(0, synthetic.size() - 1)(rng)];
                sample(sp.noisy, sp.clean, inputs[b], targets[b]);
            } else {
                const auto& pp = pseudo[std::uniform_int_distribution<std::size_t>(0, pseudo.size() - 1)(rng)];
                sample(pp.noisy, pp.pseudo_clean, inputs[b], targets[b]);
            }
        }
        out.counts.synthetic += s;
        out.counts.pseudo += ft.batch - s;
        std::vector<const Image*> ip, tp;
        for (int b = 0; b < ft.batch; ++b) {
            ip.push_back(&inputs[b]);
            tp.push_back(&targets[b]);
        }
        auto loss = mse_loss(out.denoiser.forward(to_tensor<float>(ip)), to_tensor<float>(tp));
        const double value = loss.item();
        if (!std::isfinite(value))
            throw NumericError("finetune_denoiser: non-finite loss at iteration " + std::to_string(k));
        zero_grad<float>(params);
        backward(loss);
        adam_step<float>(params, adam);
        out.loss.push_back(value);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct MetricsRecord {
    std::string image_id;
    int round = 0;
    double psnr_db = 0;
    double ssim = 0;
};

/// Noisy images with their hidden clean references.
struct EvaluationSet {
    std::vector<NamedImage> noisy;
    std::vector<Image> clean;

    bool empty() const { return noisy.empty(); }
};

struct EvaluationSummary {
    std::vector<MetricsRecord> records;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

inline EvaluationSummary evaluate_denoiser(const Denoiser& d, const EvaluationSet& set, int round) {
    if (set.noisy.size() != set.clean.size()) throw std::invalid_argument("evaluate: noisy/clean count mismatch");
    EvaluationSummary s;
    s.records.resize(set.noisy.size());
    parallel_for(set.noisy.size(), [&](std::size_t i) {
        const Image out = d.denoise(set.noisy[i].image);
        s.records[i] = {set.noisy[i].id, round, psnr(out, set.clean[i]), ssim(out, set.clean[i])};
    });
    for (const auto& r : s.records) {
        s.mean_psnr += r.psnr_db;
        s.mean_ssim += r.ssim;
    }
    if (!s.records.empty()) {
        s.mean_psnr /= s.records.size();
        s.mean_ssim /= s.records.size();
    }
    return s;
}

inline nlohmann::json to_json(const EvaluationSummary& s) {
    nlohmann::json j;
    j["mean_psnr_db"] = s.mean_psnr;
    j["mean_ssim"] = s.mean_ssim;
    j["images"] = nlohmann::json::array();
    for (const auto& r : s.records)
        j["images"].push_back({{"image_id", r.image_id}, {"round", r.round}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}});
    return j;
}

// ---------------------------------------------------------------------------
// The loop

struct RoundMetrics {
    int round = 0;
    double psnr_db = 0;
    double ssim = 0;
    double pseudo_clean_psnr_db = -1;  // mean PSNR(d(Y), hidden clean) when references exist
    double pseudoisp_final_loss = 0;   // mean smoothed loss over the round's models
    std::size_t pseudo_pairs = 0;
    std::size_t synthetic_pairs = 0;
    SamplerCounts sampler;
    double finetune_final_loss = 0;
    std::vector<MetricsRecord> images;
};

inline nlohmann::json to_json(const RoundMetrics& m) {
    nlohmann::json j{{"round", m.round},
                     {"psnr_db", m.psnr_db},
                     {"ssim", m.ssim},
                     {"pseudoisp_final_loss", m.pseudoisp_final_loss},
                     {"pseudo_pairs", m.pseudo_pairs},
                     {"synthetic_pairs", m.synthetic_pairs},
                     {"sampler", {{"synthetic", m.sampler.synthetic}, {"pseudo", m.sampler.pseudo}}},
                     {"finetune_final_loss", m.finetune_final_loss}};
    if (m.pseudo_clean_psnr_db >= 0) j["pseudo_clean_psnr_db"] = m.pseudo_clean_psnr_db;
    j["images"] = nlohmann::json::array();
    for (const auto& r : m.images)
        j["images"].push_back({{"image_id", r.image_id}, {"round", r.round}, {"psnr_db", r.psnr_db}, {"ssim", r.ssim}});
    return j;
}

inline RoundMetrics round_metrics_from_json(const nlohmann::json& j) {
    RoundMetrics m;
    m.round = j.at("round").get<int>();
    m.psnr_db = j.at("psnr_db").get<double>();
    m.ssim = j.at("ssim").get<double>();
    m.pseudo_clean_psnr_db = j.value("pseudo_clean_psnr_db", -1.0);
    m.pseudoisp_final_loss = j.at("pseudoisp_final_loss").get<double>();
    m.pseudo_pairs = j.at("pseudo_pairs").get<std::size_t>();
    m.synthetic_pairs = j.at("synthetic_pairs").get<std::size_t>();
    m.sampler.synthetic = j.at("sampler").at("synthetic").get<long long>();
    m.sampler.pseudo = j.at("sampler").at("pseudo").get<long long>();
    m.finetune_final_loss = j.at("finetune_final_loss").get<double>();
    for (const auto& r : j.at("images"))
        m.images.push_back({r.at("image_id").get<std::string>(), r.at("round").get<int>(), r.at("psnr_db").get<double>(),
                            r.at("ssim").get<double>()});
    return m;
}

struct AdaptionState {
    Denoiser denoiser;
    std::vector<PseudoPair> pseudo_pairs;
    std::vector<SyntheticPair> synthetic_pairs;
    std::vector<PseudoIspModel<float>> pseudo_isps;
    RoundMetrics baseline;             // round 0: the starting denoiser
    std::vector<RoundMetrics> rounds;  // rounds 1..t actually run
    std::vector<std::string> log;
    int resumed_rounds = 0;
    bool stopped_early = false;
};

struct AdaptionRun {
    std::filesystem::path run_dir;  // empty: nothing written
    std::string config_hash;        // recorded in every metrics file
    std::function<void(const std::string&)> on_log;
};

class AdaptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Synthetic pairs for every clean image under each model (up to
/// synthetic_per_clean models per image, chosen round-robin).
inline std::vector<SyntheticPair> synthesize_set(const std::vector<PseudoIspModel<float>>& models,
                                                 const std::vector<NamedImage>& clean_set, int per_clean,
                                                 std::uint64_t seed) {
    if (models.empty()) throw std::invalid_argument("synthesize_set: no models");
    const std::size_t m = per_clean > 0 ? std::min<std::size_t>(per_clean, models.size()) : models.size();
    std::vector<SyntheticPair> out(clean_set.size() * m);
    parallel_for(out.size(), [&](std::size_t k) {
        const std::size_t i = k / m, j = (i + k % m) % models.size();
        out[k] = synthesize_noisy(models[j], clean_set[i].image, derive_seed(seed, {i, j}));
    });
    return out;
}

namespace detail {

inline std::filesystem::path round_dir(const std::filesystem::path& run, int t) {
    char name[32];
    std::snprintf(name, sizeof name, "round-%02d", t);
    return run / name;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << j.dump(2) << '\n';
    if (!f) throw std::runtime_error("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    return nlohmann::json::parse(f);
}

}  // namespace detail

/// Runs rounds 1..t_max. With a run directory, each completed round is
/// written to round-NN/ and a later call with the same config hash resumes
/// after the last completed round.
inline AdaptionState run_adaption(const std::vector<NamedImage>& noisy_set, const std::vector<NamedImage>& clean_set,
                                  const Denoiser& d0, const AdaptionConfig& config, const EvaluationSet& eval = {},
                                  const AdaptionRun& run = {}, const std::vector<Image>* noisy_references = nullptr) {
    namespace fs = std::filesystem;
    config.validate();
    if (noisy_set.empty() || clean_set.empty()) throw std::invalid_argument("run_adaption: empty noisy or clean set");
    for (const auto& n : noisy_set)
        for (const auto& c : clean_set)
            if (n.id == c.id) throw std::invalid_argument("run_adaption: noisy and clean sets share id '" + n.id + "'");

    AdaptionState state;
    state.denoiser = d0.clone();
    auto log = [&](const std::string& line) {
        state.log.push_back(line);
        if (run.on_log) run.on_log(line);
    };
    auto evaluate = [&](const Denoiser& d, int t) {
        RoundMetrics m;
        m.round = t;
        if (!eval.empty()) {
            auto s = evaluate_denoiser(d, eval, t);
            m.psnr_db = s.mean_psnr;
            m.ssim = s.mean_ssim;
            m.images = std::move(s.records);
        }
        return m;
    };
    state.baseline = evaluate(state.denoiser, 0);

    const bool persist = !run.run_dir.empty();
    int start = 1;
    if (persist) {
        fs::create_directories(run.run_dir);
        for (int t = 1; t <= config.t_max; ++t) {
            const auto dir = detail::round_dir(run.run_dir, t);
            if (!fs::exists(dir / "metrics.json") || !fs::exists(dir / "denoiser.ckpt")) break;
            const auto j = detail::read_json(dir / "metrics.json");
            if (j.value("config_hash", std::string()) != run.config_hash) break;
            state.denoiser = Denoiser::load(dir / "denoiser.ckpt");
            state.rounds.push_back(round_metrics_from_json(j.at("round_metrics")));
            start = t + 1;
            ++state.resumed_rounds;
            log("round " + std::to_string(t) + ": resumed from " + dir.string());
        }
    }

    std::vector<PseudoIspModel<float>> previous_models;
    for (int t = start; t <= config.t_max; ++t) {
        const std::string where = "round " + std::to_string(t);
        const std::uint64_t round_seed = derive_seed(config.seed, {std::uint64_t(t)});
        RoundMetrics m;
        try {
            // 1. pseudo pairs from the current denoiser
            state.pseudo_pairs = build_pseudo_pairs(state.denoiser, noisy_set);
            log(where + " stage 1: built " + std::to_string(state.pseudo_pairs.size()) + " pseudo pairs");

            // 2. Pseudo-ISP training
            TrainConfig tc = config.pseudo_isp;
            tc.seed = derive_seed(round_seed, {2});
            const bool warm = config.warm_start_pseudoisp && !previous_models.empty();
            auto trained = train_pseudoisp_scoped(state.pseudo_pairs, tc, warm ? &previous_models : nullptr);
            state.pseudo_isps.clear();
            double loss_sum = 0;
            for (auto& s : trained) {
                loss_sum += s.trained.report.final_smoothed;
                state.pseudo_isps.push_back(std::move(s.trained.model));
            }
            previous_models = state.pseudo_isps;
            log(where + " stage 2: trained " + std::to_string(state.pseudo_isps.size()) + " Pseudo-ISP model(s)");

            // 3. synthetic pairs
            state.synthetic_pairs =
                synthesize_set(state.pseudo_isps, clean_set, config.synthetic_per_clean, derive_seed(round_seed, {3}));
            log(where + " stage 3: synthesized " + std::to_string(state.synthetic_pairs.size()) + " noisy images");

            // 4. denoiser finetuning
            auto ft = finetune_denoiser(state.denoiser, state.pseudo_pairs, state.synthetic_pairs, config,
                                        derive_seed(round_seed, {4}));
            state.denoiser = std::move(ft.denoiser);
            log(where + " stage 4: finetuned denoiser for " + std::to_string(ft.loss.size()) + " iterations");

            m = evaluate(state.denoiser, t);
            m.pseudoisp_final_loss = loss_sum / static_cast<double>(trained.size());
            m.pseudo_pairs = state.pseudo_pairs.size();
            m.synthetic_pairs = state.synthetic_pairs.size();
            m.sampler = ft.counts;
            m.finetune_final_loss = detail::window_mean(ft.loss, false);
            if (noisy_references && noisy_references->size() == state.pseudo_pairs.size()) {
                double s = 0;
                for (std::size_t i = 0; i < state.pseudo_pairs.size(); ++i)
                    s += psnr(state.pseudo_pairs[i].pseudo_clean, (*noisy_references)[i]);
                m.pseudo_clean_psnr_db = s / static_cast<double>(state.pseudo_pairs.size());
            }

            if (persist) {
                const auto dir = detail::round_dir(run.run_dir, t);
                fs::create_directories(dir / "pseudoisp-ckpts");
                fs::create_directories(dir / "synthetic");
                for (std::size_t i = 0; i < state.pseudo_isps.size(); ++i) {
                    char name[32];
                    std::snprintf(name, sizeof name, "model_%03zu.ckpt", i);
                    state.pseudo_isps[i].to_checkpoint().save(dir / "pseudoisp-ckpts" / name);
                }
                if (config.write_synthetic_images)
                    for (std::size_t i = 0; i < state.synthetic_pairs.size(); ++i) {
                        char name[32];
                        std::snprintf(name, sizeof name, "synthetic_%04zu.png", i);
                        write_png(dir / "synthetic" / name, state.synthetic_pairs[i].noisy, 16);
                    }
                state.denoiser.save(dir / "denoiser.ckpt");
                detail::write_json(dir / "metrics.json", {{"config_hash", run.config_hash},
                                                          {"seed", config.seed},
                                                          {"round_metrics", to_json(m)}});
            }
        } catch (const std::exception& e) {
            throw AdaptionError(where + ": " + e.what());
        }
        const double prev = state.rounds.empty() ? state.baseline.psnr_db : state.rounds.back().psnr_db;
        state.rounds.push_back(m);
        log(where + ": held-out PSNR " + std::to_string(m.psnr_db) + " dB");
        if (config.early_stop && !eval.empty() && t > 1 && m.psnr_db - prev < config.early_stop_db) {
            state.stopped_early = true;
            log(where + ": gain below " + std::to_string(config.early_stop_db) + " dB, stopping");
            break;
        }
    }
    if (persist) {
        nlohmann::json summary{{"config_hash", run.config_hash}, {"seed", config.seed}};
        summary["baseline"] = to_json(state.baseline);
        summary["rounds"] = nlohmann::json::array();
        for (const auto& r : state.rounds) summary["rounds"].push_back(to_json(r));
        summary["final_psnr_db"] = state.rounds.empty() ? state.baseline.psnr_db : state.rounds.back().psnr_db;
        summary["stopped_early"] = state.stopped_early;
        detail::write_json(run.run_dir / "metrics.json", summary);
    }
    return state;
}

}  // namespace pseudoisp
