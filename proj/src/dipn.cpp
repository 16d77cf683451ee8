#include "sdic/dipn.hpp"

#include "init.hpp"
#include "sdic/errors.hpp"
#include "sdic/toygen.hpp"

namespace sdic {

namespace F = torch::nn::functional;
using detail::kLeakySlope;
using detail::leaky_gain;
using detail::ParamInit;

namespace {

torch::Tensor lrelu(const torch::Tensor& x) { return torch::leaky_relu(x, kLeakySlope); }

torch::Tensor upsample2x(const torch::Tensor& x) {
    return F::interpolate(x, F::InterpolateFuncOptions()
                                 .scale_factor(std::vector<double>{2.0, 2.0})
                                 .mode(torch::kNearest));
}

torch::nn::Conv2d conv2d(int64_t in, int64_t out, int64_t k, int64_t stride, int64_t pad) {
    return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k).stride(stride).padding(pad));
}

torch::nn::Conv3d conv3d(int64_t in, int64_t out, int64_t k, int64_t stride) {
    return torch::nn::Conv3d(torch::nn::Conv3dOptions(in, out, k).stride(stride).padding(k / 2));
}

constexpr auto kChannelsLast3d = at::MemoryFormat::ChannelsLast3d;

}  // namespace

void use_channels_last_3d(torch::nn::Module& module) {
    torch::NoGradGuard guard;
    for (const auto& m : module.modules(false)) {
        torch::Tensor* weight = nullptr;
        if (auto* c = m->as<torch::nn::Conv3d>()) weight = &c->weight;
        if (auto* c = m->as<torch::nn::ConvTranspose3d>()) weight = &c->weight;
        if (weight) weight->set_data(weight->contiguous(kChannelsLast3d));
    }
}

ContextBranchImpl::ContextBranchImpl(const ModelConfig& config) : config_(config) {
    const auto& b = config_.branch_channels;
    const int64_t strides[5] = {1, 2, 1, 2, 2};
    int64_t in = 3;
    for (int i = 0; i < 5; ++i) {
        down_->push_back(conv2d(in, b[i], 3, strides[i], 1));
        in = b[i];
    }
    // Upsampler widths b4 -> b3 -> b2 -> C, merging with encoder blocks 4, 3 and 1.
    const int64_t up_out[3] = {b[3], b[2], config_.context_channels};
    const int64_t skip[3] = {b[3], b[2], b[0]};
    for (int j = 0; j < 3; ++j) {
        up_->push_back(conv2d(in, up_out[j], 4, 1, 0));
        merge_->push_back(conv2d(up_out[j] + skip[j], up_out[j], 3, 1, 1));
        in = up_out[j];
    }
    register_module("down", down_);
    register_module("up", up_);
    register_module("merge", merge_);

    // Dipn re-initialises its own branches; this covers standalone use.
    ParamInit init(derive_seed(config_.sdic_seed, 1, 9));
    for (const auto& m : modules(false))
        if (auto* c = m->as<torch::nn::Conv2d>()) init.conv2d(*c, leaky_gain());
}

BranchOutput ContextBranchImpl::forward(const torch::Tensor& image) {
    expect_shape(image, {-1, 3, config_.image_size, config_.image_size}, "context branch input");
    std::vector<torch::Tensor> acts;
    auto x = image;
    for (const auto& m : *down_) {
        x = lrelu(m->as<torch::nn::Conv2d>()->forward(x));
        acts.push_back(x);
    }
    BranchOutput out;
    out.context.push_back(x);
    const std::size_t skip[3] = {3, 2, 0};
    for (std::size_t j = 0; j < 3; ++j) {
        // 4x4 kernel on a (1, 2, 1, 2) padded input keeps the size after the x2 upsample.
        x = F::pad(upsample2x(x), F::PadFuncOptions({1, 2, 1, 2}));
        x = lrelu(up_[j]->as<torch::nn::Conv2d>()->forward(x));
        x = lrelu(merge_[j]->as<torch::nn::Conv2d>()->forward(torch::cat({x, acts[skip[j]]}, 1)));
        if (j < 2) out.context.push_back(x);
    }
    out.features = x;
    return out;
}

torch::Tensor attention_fuse(const torch::Tensor& weights, const torch::Tensor& context, const torch::Tensor& volume) {
    expect_same_shape(weights, context, "attention_fuse weights/context");
    expect_same_shape(context, volume, "attention_fuse context/volume");
    return weights * context + volume;
}

DipnImpl::DipnImpl(const ModelConfig& config, bool spatial_context)
    : config_(config), spatial_context_(spatial_context) {
    config_.validate();
    const auto& v = config_.volume_channels;
    const int64_t down_channels[4] = {1, v[0], v[1], v[2]};
    for (int i = 0; i < 3; ++i) {
        down_->push_back(conv3d(down_channels[i], down_channels[i + 1], 3, 2));
        down_->push_back(conv3d(down_channels[i + 1], down_channels[i + 1], 3, 1));
    }
    // Decoder stages run v2 -> v1 -> v0 -> 1 channels; stage i fuses context i first.
    const int64_t stage_channels[4] = {v[2], v[1], v[0], 1};
    for (int i = 0; i < 3; ++i) {
        up_->push_back(torch::nn::ConvTranspose3d(
            torch::nn::ConvTranspose3dOptions(stage_channels[i], stage_channels[i + 1], 4).stride(2).padding(1)));
        if (spatial_context_) {
            lift_->push_back(torch::nn::Conv3d(torch::nn::Conv3dOptions(1, stage_channels[i], 1)));
            attend_->push_back(conv3d(stage_channels[i], stage_channels[i], 5, 1));
        }
    }
    register_module("down", down_);
    register_module("up", up_);
    if (spatial_context_) {
        image_branch_ = register_module("image_branch", ContextBranch(config_));
        recon_branch_ = register_module("recon_branch", ContextBranch(config_));
        register_module("lift", lift_);
        register_module("attend", attend_);
    }
    project_ = register_module("project", conv2d(volume_depth(), 3, 3, 1, 1));

    ParamInit init(derive_seed(config_.sdic_seed, 1, 0));
    for (const auto& m : modules(false)) {
        if (auto* c = m->as<torch::nn::Conv2d>()) init.conv2d(*c, leaky_gain());
        if (auto* c = m->as<torch::nn::Conv3d>()) init.conv3d(*c, leaky_gain());
        if (auto* c = m->as<torch::nn::ConvTranspose3d>()) init.conv_transpose3d(*c, leaky_gain(), 2);
    }
    init.conv2d(*project_, 1.0);
    use_channels_last_3d(*this);
}

int64_t DipnImpl::volume_depth() const { return spatial_context_ ? 2 * config_.context_channels : 8; }

torch::Tensor DipnImpl::lift(int64_t stage, const torch::Tensor& context, const torch::Tensor& volume) {
    auto c = context.unsqueeze(1);
    c = F::interpolate(c, F::InterpolateFuncOptions()
                              .size(std::vector<int64_t>{volume.size(2), volume.size(3), volume.size(4)})
                              .mode(torch::kNearest));
    return lift_[stage]->as<torch::nn::Conv3d>()->forward(c.contiguous(kChannelsLast3d));
}

DiscrepancyTrace DipnImpl::trace(const torch::Tensor& image, const torch::Tensor& reconstruction) {
    const auto h = config_.image_size;
    expect_shape(image, {-1, 3, h, h}, "dipn image");
    expect_same_shape(image, reconstruction, "dipn reconstruction");

    DiscrepancyTrace out;
    std::vector<torch::Tensor> contexts;
    torch::Tensor planes;
    if (spatial_context_) {
        auto a = image_branch_(image);
        auto b = recon_branch_(reconstruction);
        planes = torch::cat({a.features, b.features}, 1);
        contexts = a.context;  // only the original image supplies context
    } else {
        planes = torch::cat({image, reconstruction, torch::zeros({image.size(0), 2, h, h}, image.options())}, 1);
    }
    out.volume = planes.unsqueeze(1).contiguous(kChannelsLast3d);

    auto g = out.volume;
    for (const auto& m : *down_) g = lrelu(m->as<torch::nn::Conv3d>()->forward(g));
    for (int64_t i = 0; i < 3; ++i) {
        out.stages.push_back(g);
        if (spatial_context_) {
            auto c = lift(i, contexts[static_cast<std::size_t>(i)], g);
            auto w = torch::sigmoid(attend_[i]->as<torch::nn::Conv3d>()->forward(g + c));
            g = attention_fuse(w, c, g);
            out.contexts.push_back(c);
            out.attention.push_back(w);
        }
        g = up_[i]->as<torch::nn::ConvTranspose3d>()->forward(g);
        if (i < 2) g = lrelu(g);
    }
    out.stages.push_back(g);
    out.discrepancy = project_(g.squeeze(1).contiguous());
    return out;
}

torch::Tensor DipnImpl::forward(const torch::Tensor& image, const torch::Tensor& reconstruction) {
    return trace(image, reconstruction).discrepancy;
}

}  // namespace sdic
