#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdic/config.hpp"

namespace sdic {

struct Features {
    std::vector<torch::Tensor> taps;  // after blocks 1-3
    torch::Tensor embedding;          // N x c4, spatial mean of block 4
};

// Frozen random convolutional feature extractor used for the perceptual and
// identity terms. Four stride-2 3x3 convolutions; leaky rectifier after the
// first three. Not a learned perceptual metric.
class FeatureNetImpl : public torch::nn::Module {
  public:
    explicit FeatureNetImpl(const ModelConfig& config);

    Features extract(const torch::Tensor& images);
    torch::Tensor forward(const torch::Tensor& images) { return extract(images).embedding; }

  private:
    torch::nn::ModuleList convs_;
};
TORCH_MODULE(FeatureNet);

// x / sqrt(sum_c x^2 + 1e-10) at every spatial position.
torch::Tensor unit_normalize_channels(const torch::Tensor& x);

// Mean over taps of the mean squared difference of channel-normalised features.
torch::Tensor perceptual_distance(const Features& a, const Features& b);
torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, FeatureNet& net);

// Per-sample cosine similarity of two N x c embeddings. Throws NumericalError on
// a zero-norm row.
torch::Tensor embedding_cosine(const torch::Tensor& a, const torch::Tensor& b);
// Batch mean of 1 - cos.
torch::Tensor cosine_distance(const torch::Tensor& a, const torch::Tensor& b);
torch::Tensor id_loss(const torch::Tensor& a, const torch::Tensor& b, FeatureNet& net);

struct LossBreakdown {
    double l2 = 0;
    double lpips_proxy = 0;
    double id = 0;
    double rec = 0;
    double edit_w = 0;
    double edit_f = 0;
    double edit = 0;
    double joint = 0;

    static std::string csv_header();  // without the leading step column
    std::string csv_row() const;
};

struct LossTerms {
    torch::Tensor l2;
    torch::Tensor lpips_proxy;
    torch::Tensor id;
    torch::Tensor rec;
    torch::Tensor edit_w;
    torch::Tensor edit_f;
    torch::Tensor edit;
    torch::Tensor joint;

    LossBreakdown values() const;
};

// rec = l2 + lambda_lpips * lpips_proxy + lambda_id * id; edit terms left zero
// and joint = rec.
LossTerms rec_loss(const torch::Tensor& image, const torch::Tensor& reconstruction, FeatureNet& net,
                   const LossWeights& weights);

// rec plus lambda_edit * (mean|w - w_enh| + mean|F - F_enh|).
LossTerms joint_loss(const torch::Tensor& w, const torch::Tensor& w_enhanced, const torch::Tensor& map,
                     const torch::Tensor& map_enhanced, const torch::Tensor& image, const torch::Tensor& reconstruction,
                     FeatureNet& net, const LossWeights& weights);

}  // namespace sdic
