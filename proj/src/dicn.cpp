#include "sdic/dicn.hpp"

#include <cmath>

#include "init.hpp"
#include "sdic/errors.hpp"
#include "sdic/toygen.hpp"

namespace sdic {

using detail::kLeakySlope;
using detail::leaky_gain;
using detail::ParamInit;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

torch::nn::Conv2d conv3x3(int64_t in, int64_t out, int64_t stride) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(stride).padding(1));
}

}  // namespace

torch::Tensor affine_compensate(const torch::Tensor& w, const AffineParams& a) {
    expect_same_shape(a.gamma, w, "affine_compensate gamma");
    expect_same_shape(a.theta, w, "affine_compensate theta");
    return a.gamma * w + a.theta;
}

torch::Tensor compensate_with(const torch::Tensor& map, const torch::Tensor& embedding, const torch::Tensor& gate) {
    expect_same_shape(embedding, map, "compensate_with embedding");
    expect_same_shape(gate, map, "compensate_with gate");
    return gate * embedding + map;
}

torch::Tensor compose_edited_map(const torch::Tensor& enhanced_base, const torch::Tensor& edited, const torch::Tensor& base) {
    expect_same_shape(edited, enhanced_base, "compose_edited_map edited");
    expect_same_shape(base, enhanced_base, "compose_edited_map base");
    return enhanced_base + (edited - base);
}

AffineHeadImpl::AffineHeadImpl(const ModelConfig& config, uint64_t seed) : config_(config) {
    const auto k = config_.style_rows;
    const auto side = config_.image_size / 4;
    const auto p = side * side;
    conv1_ = register_module("conv1", conv3x3(3, config_.affine_hidden, 2));
    conv2_ = register_module("conv2", conv3x3(config_.affine_hidden, k, 2));
    projection_ = register_parameter("projection", torch::zeros({k, p, config_.style_dim}));
    projection_bias_ = register_parameter("projection_bias", torch::zeros({k, config_.style_dim}));
    scale_ = 1.0 / std::sqrt(static_cast<double>(p));

    ParamInit init(seed);
    init.conv2d(*conv1_, leaky_gain());
    init.conv2d(*conv2_, leaky_gain());
    if (!config_.identity_init) {
        init.uniform_std(projection_, 1.0);
        init.uniform_std(projection_bias_, 0.1);
    }
}

torch::Tensor AffineHeadImpl::forward(const torch::Tensor& discrepancy) {
    expect_shape(discrepancy, {-1, 3, config_.image_size, config_.image_size}, "affine head input");
    auto a = lrelu(conv2_(lrelu(conv1_(discrepancy)))).flatten(2);
    return torch::einsum("nkp,kpd->nkd", {a, projection_}) * scale_ + projection_bias_;
}

DicnImpl::DicnImpl(const ModelConfig& config, bool attention) : config_(config), attention_(attention) {
    config_.validate();
    const auto layer = config_.injection_layer;
    const auto map_channels = config_.block_channels(layer);
    int64_t downs = 0;
    for (auto r = config_.block_resolution(layer); r < config_.image_size; r *= 2) ++downs;

    gamma_head_ = register_module("gamma_head", AffineHead(config_, derive_seed(config_.sdic_seed, 2, 0)));
    theta_head_ = register_module("theta_head", AffineHead(config_, derive_seed(config_.sdic_seed, 2, 1)));

    const auto& e = config_.map_embed_channels;
    const int64_t channels[5] = {3, e[0], e[1], e[2], attention_ ? map_channels : 2 * map_channels};
    strides_ = {1};
    for (int64_t i = 0; i < 3; ++i) strides_.push_back(i < downs ? 2 : 1);
    for (std::size_t i = 0; i < 4; ++i) embed_->push_back(conv3x3(channels[i], channels[i + 1], strides_[i]));
    register_module("embed", embed_);
    if (attention_) {
        gate1_ = register_module("gate1", conv3x3(map_channels, map_channels, 1));
        gate2_ = register_module("gate2", conv3x3(map_channels, map_channels, 1));
    }

    ParamInit init(derive_seed(config_.sdic_seed, 2, 2));
    for (std::size_t i = 0; i < 3; ++i) init.conv2d(*embed_[i]->as<torch::nn::Conv2d>(), leaky_gain());
    auto& last = *embed_[3]->as<torch::nn::Conv2d>();
    if (config_.identity_init) {
        ParamInit::zero_layer(last);
    } else {
        init.conv2d(last, 1.0);
    }
    if (attention_) {
        init.conv2d(*gate1_, leaky_gain());
        init.conv2d(*gate2_, 1.0);
    }
}

AffineParams DicnImpl::predict_affine(const torch::Tensor& discrepancy) {
    return {1.0 + gamma_head_(discrepancy), theta_head_(discrepancy)};
}

torch::Tensor DicnImpl::embed_discrepancy(const torch::Tensor& discrepancy) {
    expect_shape(discrepancy, {-1, 3, config_.image_size, config_.image_size}, "map embedding input");
    auto m = discrepancy;
    for (std::size_t i = 0; i < 4; ++i) {
        m = embed_[i]->as<torch::nn::Conv2d>()->forward(m);
        if (i < 3) m = lrelu(m);
    }
    return m;
}

torch::Tensor DicnImpl::gate(const torch::Tensor& map, const torch::Tensor& embedding) {
    if (!attention_) throw std::logic_error("gate: model built without attention");
    expect_same_shape(embedding, map, "gate embedding");
    return torch::sigmoid(gate2_(lrelu(gate1_(map + embedding))));
}

torch::Tensor DicnImpl::compensate_latent_map(const torch::Tensor& map, const torch::Tensor& discrepancy) {
    const auto layer = config_.injection_layer;
    const auto r = config_.block_resolution(layer);
    expect_shape(map, {discrepancy.size(0), config_.block_channels(layer), r, r}, "latent map");
    auto m = embed_discrepancy(discrepancy);
    if (attention_) return compensate_with(map, m, gate(map, m));
    auto parts = m.chunk(2, 1);
    expect_same_shape(parts[0], map, "scale/shift embedding");
    return (1.0 + parts[0]) * map + parts[1];
}

}  // namespace sdic
