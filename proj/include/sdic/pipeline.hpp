#pragma once

#include <functional>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdic/config.hpp"
#include "sdic/dicn.hpp"
#include "sdic/dipn.hpp"
#include "sdic/editing.hpp"
#include "sdic/tensor_io.hpp"
#include "sdic/toygen.hpp"

namespace sdic {

// Frozen generator and encoder plus the trainable discrepancy networks.
struct SdicModels {
    SdicModels(const ModelConfig& config, Variant variant);

    ModelConfig config;
    Variant variant;
    ToyGenerator generator;
    InversionEncoder encoder;
    Dipn dipn;
    Dicn dicn;

    std::vector<torch::Tensor> trainable_parameters() const;
    // "dipn.<param>" and "dicn.<param>".
    io::NamedTensors named_trainable() const;
    io::NamedTensors named_encoder() const;
    // Copies values into the matching parameters; names and shapes must agree.
    void load_trainable(const io::NamedTensors& tensors);
    void load_encoder(const io::NamedTensors& tensors);

    void to(torch::Dtype dtype);
};

struct InversionArtifacts {
    torch::Tensor w;                       // encoder code
    torch::Tensor initial_reconstruction;  // G(w)
    torch::Tensor discrepancy;             // D
    AffineParams affine;
    torch::Tensor w_enhanced;
    torch::Tensor map;           // F: injection-layer activation of the w_enhanced forward
    torch::Tensor map_enhanced;  // F_enhanced
};

struct Inversion {
    torch::Tensor image;  // R_f
    InversionArtifacts artifacts;
};

Inversion invert(SdicModels& models, const torch::Tensor& images);
// As invert, with the encoder code supplied by the caller.
Inversion invert_with_code(SdicModels& models, const torch::Tensor& images, const torch::Tensor& w);
// Encoder-only reconstruction G(E(I)).
torch::Tensor reconstruct_baseline(SdicModels& models, const torch::Tensor& images);

// Moves the enhanced code along `direction` and carries the compensation over
// to the edited map as F_enh_R + (F_E - F_R).
torch::Tensor edit(SdicModels& models, const torch::Tensor& images, const EditDirection& direction, double alpha);
torch::Tensor edit_from(SdicModels& models, const Inversion& inversion, const EditDirection& direction, double alpha);

// Runs `fn` over `images` in chunks without autograd and concatenates the results.
torch::Tensor batched(const torch::Tensor& images, int64_t chunk,
                      const std::function<torch::Tensor(const torch::Tensor&)>& fn);

}  // namespace sdic
