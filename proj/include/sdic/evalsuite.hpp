#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdic/losses.hpp"
#include "sdic/pipeline.hpp"
#include "sdic/trainer.hpp"

namespace sdic {

// Pixel values live in [-1, 1], so the dynamic range is 2.
inline constexpr double kPixelRange = 2.0;
inline constexpr double kPsnrCap = 99.0;

// 3 x H x W images. 10 log10(range^2 / mse), capped at 99 dB.
double psnr(const torch::Tensor& a, const torch::Tensor& b);

// Top-left corners of the 8x8 SSIM windows along an axis of length n: every
// 4th position plus n - 8 when the stride does not land there.
std::vector<int64_t> ssim_window_starts(int64_t n);

// Mean SSIM over channels and 8x8 windows, C1 = (0.01 range)^2, C2 = (0.03 range)^2.
double ssim(const torch::Tensor& a, const torch::Tensor& b);

struct MetricRow {
    std::string method;
    double id_cosine = 0;
    double ssim = 0;
    double psnr_db = 0;
    double lpips_proxy = 0;
    double l2 = 0;
    double wall_time_s = 0;  // per image

    static std::string csv_header();
    std::string csv_row() const;
};

struct EvalReport {
    MetricRow sdic;
    MetricRow baseline;

    std::string csv() const;
};

// Image-averaged metrics of `reconstructions` against `images`.
MetricRow score(const std::string& method, const torch::Tensor& images, const torch::Tensor& reconstructions,
                FeatureNet& net);

EvalReport evaluate(SdicModels& models, FeatureNet& net, const torch::Tensor& images, int64_t chunk = 32);

struct AblationEntry {
    std::string group;  // "variant" or "layer"
    std::string name;
    Variant variant = Variant::kFull;
    int64_t layer = 0;
    MetricRow metrics;
};

struct AblationReport {
    std::vector<AblationEntry> entries;
    bool variant_order_ok = false;  // full <= no-att <= no-sc, 5% slack
    bool layer_order_ok = false;    // l2 non-increasing over layers 1, 2, 3

    std::string csv() const;
    bool passed() const { return variant_order_ok && layer_order_ok; }
};

inline constexpr double kVariantTieSlack = 0.05;
bool variant_order_holds(double full, double no_att, double no_sc);
bool layer_order_holds(const std::vector<double>& l2_by_layer);

// Trains (or reloads from `cache_dir`) the three variants at the configured
// injection layer and the full model at layers 1-3, then scores each on the
// held-out split.
AblationReport ablation_suite(const RunConfig& base, const Checkpoint& encoder, const std::filesystem::path& cache_dir,
                              const TrainObserver& observer = {});

// Returns the checkpoint in `dir` when its config matches, otherwise trains and stores it.
Checkpoint cached_training(const RunConfig& config, const Checkpoint& encoder, const std::filesystem::path& dir,
                           const TrainObserver& observer = {});

// Linear read-out of one latent factor z[f] from the encoder's row-mean code.
struct FactorProbe {
    torch::Tensor weights;  // d, float64
    double bias = 0;

    torch::Tensor predict(const torch::Tensor& codes) const;  // N x K x d -> N
};

FactorProbe fit_factor_probe(SdicModels& models, const Dataset& clean, int64_t factor);

// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
double spearman(const std::vector<double>& x, const std::vector<double>& y);

struct EditSweep {
    std::vector<double> alphas;
    std::vector<std::vector<double>> responses;  // per image, per alpha
    std::vector<double> correlations;            // per image
    double mean_correlation = 0;
};

EditSweep edit_response_sweep(SdicModels& models, const torch::Tensor& images, const EditDirection& direction,
                              const std::vector<double>& alphas, const FactorProbe& probe, int64_t chunk = 32);

// Style vectors map(z) of `count` fresh samples and the sign of z[factor], for
// building a hyperplane direction.
struct LabelledCorpus {
    torch::Tensor codes;  // N x d
    std::vector<bool> labels;
};
LabelledCorpus factor_corpus(SdicModels& models, const DataConfig& data, int64_t count, int64_t factor);

}  // namespace sdic
