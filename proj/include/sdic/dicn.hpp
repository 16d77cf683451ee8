#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "sdic/config.hpp"

namespace sdic {

struct AffineParams {
    torch::Tensor gamma;  // N x K x d
    torch::Tensor theta;  // N x K x d
};

// w_enhanced = gamma * w + theta, row by row.
torch::Tensor affine_compensate(const torch::Tensor& w, const AffineParams& a);

// F_enhanced = A * M + F.
torch::Tensor compensate_with(const torch::Tensor& map, const torch::Tensor& embedding, const torch::Tensor& gate);

// F_enh_E = F_enh_R + (F_E - F_R). Grouping the difference first makes a
// zero edit return F_enh_R bit for bit.
torch::Tensor compose_edited_map(const torch::Tensor& enhanced_base, const torch::Tensor& edited, const torch::Tensor& base);

// Two stride-2 3x3 convolutions (3 -> hidden -> K) followed by a per-row
// linear projection of the flattened (H/4)^2 field to d values. The
// projection is applied with a 1/sqrt(P) multiplier so its weights are
// unit-scale and adaptive optimiser steps move the output by O(lr).
class AffineHeadImpl : public torch::nn::Module {
  public:
    AffineHeadImpl(const ModelConfig& config, uint64_t seed);

    torch::Tensor forward(const torch::Tensor& discrepancy);

    torch::Tensor& projection() { return projection_; }
    torch::Tensor& projection_bias() { return projection_bias_; }

  private:
    ModelConfig config_;
    torch::nn::Conv2d conv1_{nullptr};
    torch::nn::Conv2d conv2_{nullptr};
    torch::Tensor projection_;       // K x P x d
    torch::Tensor projection_bias_;  // K x d
    double scale_ = 1.0;
};
TORCH_MODULE(AffineHead);

// Discrepancy compensation. gamma/theta heads adjust the latent code; the map
// embedding f_c2 and the gate f_c1 adjust the generator activation at the
// injection layer. Without attention, f_c2 emits a scale and a shift instead.
class DicnImpl : public torch::nn::Module {
  public:
    DicnImpl(const ModelConfig& config, bool attention);

    AffineParams predict_affine(const torch::Tensor& discrepancy);
    // f_c2(D), landing on the latent-map grid (2 C_F channels without attention).
    torch::Tensor embed_discrepancy(const torch::Tensor& discrepancy);
    // sigma(f_c1(F + M)).
    torch::Tensor gate(const torch::Tensor& map, const torch::Tensor& embedding);
    torch::Tensor compensate_latent_map(const torch::Tensor& map, const torch::Tensor& discrepancy);

    bool attention() const { return attention_; }
    std::vector<int64_t> embed_strides() const { return strides_; }

  private:
    ModelConfig config_;
    bool attention_;
    std::vector<int64_t> strides_;
    AffineHead gamma_head_{nullptr};
    AffineHead theta_head_{nullptr};
    torch::nn::ModuleList embed_;
    torch::nn::Conv2d gate1_{nullptr};
    torch::nn::Conv2d gate2_{nullptr};
};
TORCH_MODULE(Dicn);

}  // namespace sdic
