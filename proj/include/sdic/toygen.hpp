#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include <torch/torch.h>

#include "sdic/config.hpp"

namespace sdic {

/// Activations recorded during synthesis. `blocks[j]` is the output of
/// synthesis block j; the latent map is `blocks[injection_layer]`.
struct SynthTrace {
    torch::Tensor styled_constant;
    std::vector<torch::Tensor> blocks;
    int64_t injection_layer = 0;

    const torch::Tensor& latent_map() const { return blocks.at(static_cast<std::size_t>(injection_layer)); }
};

struct SynthResult {
    torch::Tensor image;  // N x 3 x H x W in [-1, 1]
    SynthTrace trace;
};

// Miniature StyleGAN-like generator. A learned 4x4 constant is modulated by
// latent row 0; block j (nearest x2 upsample except block 0, 3x3 conv,
// per-channel scale/shift from one latent row, leaky ReLU) is driven by row
// min(j + 1, K - 1). A 1x1 conv and tanh produce RGB. Parameters are fixed at
// construction and never receive gradients.
class ToyGeneratorImpl : public torch::nn::Module {
  public:
    explicit ToyGeneratorImpl(const ModelConfig& config);

    // z: N x d -> N x K x d, the mapped style broadcast to every row.
    torch::Tensor map_latent(const torch::Tensor& z);

    SynthResult synthesize(const torch::Tensor& w, const std::optional<torch::Tensor>& inject = std::nullopt);

    // Output of block `layer` (the latent map when layer == injection layer).
    torch::Tensor latent_map(const torch::Tensor& w, int64_t layer);
    // Runs blocks layer+1.. and the RGB head starting from a block-`layer` activation.
    torch::Tensor render_from(const torch::Tensor& map, const torch::Tensor& w, int64_t layer);

    torch::Tensor forward(const torch::Tensor& w) { return synthesize(w).image; }

    std::vector<int64_t> latent_map_shape(int64_t layer) const;
    const ModelConfig& config() const { return config_; }

  private:
    torch::Tensor styled_constant(const torch::Tensor& w);
    torch::Tensor run_block(int64_t block, torch::Tensor x, const torch::Tensor& w);
    torch::Tensor modulate(const torch::Tensor& x, torch::nn::LinearImpl& affine, const torch::Tensor& row);
    void check_code(const torch::Tensor& w) const;

    ModelConfig config_;
    torch::nn::Linear mapping_in_{nullptr};
    torch::nn::Linear mapping_out_{nullptr};
    torch::Tensor constant_;
    torch::nn::Linear constant_style_{nullptr};
    torch::nn::ModuleList convs_;
    torch::nn::ModuleList styles_;
    torch::nn::Conv2d to_rgb_{nullptr};
};
TORCH_MODULE(ToyGenerator);

// e4e stand-in: stride-2 3x3 convolutions down to 2x2, then an affine head per latent row.
class InversionEncoderImpl : public torch::nn::Module {
  public:
    explicit InversionEncoderImpl(const ModelConfig& config);

    torch::Tensor forward(const torch::Tensor& image);

  private:
    ModelConfig config_;
    torch::nn::ModuleList convs_;
    torch::nn::Linear heads_{nullptr};
};
TORCH_MODULE(InversionEncoder);

struct SyntheticSample {
    torch::Tensor image;  // 3 x H x W
    torch::Tensor z;      // d
};

// Independent stream per (base, stream, index) so samples never depend on
// generation order.
uint64_t derive_seed(uint64_t base, uint64_t stream, uint64_t index);

torch::Tensor sample_z(uint64_t seed, int64_t dim);

// Composites 1-4 axis-aligned rectangles, stripes or discs with uniform
// colour and alpha in [min_alpha, max_alpha] onto a 3 x H x W image, then
// clamps to [-1, 1].
torch::Tensor overlay_sprites(const torch::Tensor& image, std::mt19937_64& rng, const DataConfig& data);

SyntheticSample sample_synthetic(ToyGenerator& generator, const DataConfig& data, uint64_t seed, bool overlay);

enum class Split { kTrain, kHeldout };

struct Dataset {
    torch::Tensor images;  // N x 3 x H x W
    torch::Tensor z;       // N x d
};

// Deterministic train / held-out split; sample i uses derive_seed(data.seed, split, i).
Dataset make_dataset(ToyGenerator& generator, const DataConfig& data, Split split, bool overlay,
                     std::optional<int64_t> count = std::nullopt);

// Marks every parameter as not requiring gradients.
void freeze(torch::nn::Module& module);

// FNV-1a over the raw bytes of every parameter and buffer, in registration order.
uint64_t checksum(const torch::nn::Module& module);

}  // namespace sdic
