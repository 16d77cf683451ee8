#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

#include "sdic/config.hpp"

namespace sdic {

// Multi-resolution outputs of one context branch. `context[0]` is the
// bottleneck (1/8 resolution), `context[1]` and `context[2]` come from the
// upsampler at 1/4 and 1/2 resolution.
struct BranchOutput {
    torch::Tensor features;               // N x C x H x W
    std::vector<torch::Tensor> context;   // coarse to fine
};

// Hourglass feature extractor: five 3x3 conv blocks (strides 1,2,1,2,2) and an
// upsampler of nearest x2, 4x4 conv and a 3x3 merge with the matching
// encoder activation.
class ContextBranchImpl : public torch::nn::Module {
  public:
    explicit ContextBranchImpl(const ModelConfig& config);

    BranchOutput forward(const torch::Tensor& image);

  private:
    ModelConfig config_;
    torch::nn::ModuleList down_;
    torch::nn::ModuleList up_;
    torch::nn::ModuleList merge_;
};
TORCH_MODULE(ContextBranch);

// G' = W * C + G.
torch::Tensor attention_fuse(const torch::Tensor& weights, const torch::Tensor& context, const torch::Tensor& volume);

struct DiscrepancyTrace {
    torch::Tensor discrepancy;                // N x 3 x H x W
    torch::Tensor volume;                     // N x 1 x depth x H x W input volume
    std::vector<torch::Tensor> stages;        // G_1 .. G_3 before fusion, then the final upsampled volume
    std::vector<torch::Tensor> contexts;      // lifted context per stage (empty without spatial context)
    std::vector<torch::Tensor> attention;     // sigmoid weights per stage (empty without spatial context)
};

// Predicts the discrepancy map D from an input image I and its initial
// reconstruction R. With spatial context the two branch outputs are stacked
// along a depth axis, encoded by a 3D hourglass and decoded with attention
// fusion of the branch contexts at every stage.
class DipnImpl : public torch::nn::Module {
  public:
    DipnImpl(const ModelConfig& config, bool spatial_context);

    torch::Tensor forward(const torch::Tensor& image, const torch::Tensor& reconstruction);
    DiscrepancyTrace trace(const torch::Tensor& image, const torch::Tensor& reconstruction);

    bool spatial_context() const { return spatial_context_; }
    int64_t volume_depth() const;

  private:
    torch::Tensor lift(int64_t stage, const torch::Tensor& context, const torch::Tensor& volume);

    ModelConfig config_;
    bool spatial_context_;
    ContextBranch image_branch_{nullptr};
    ContextBranch recon_branch_{nullptr};
    torch::nn::ModuleList down_;
    torch::nn::ModuleList lift_;
    torch::nn::ModuleList attend_;
    torch::nn::ModuleList up_;
    torch::nn::Conv2d project_{nullptr};
};
TORCH_MODULE(Dipn);

// Converts every 3D convolution weight of `module` to channels-last-3d layout.
void use_channels_last_3d(torch::nn::Module& module);

}  // namespace sdic
