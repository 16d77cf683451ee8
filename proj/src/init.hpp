#pragma once

#include <cstdint>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

namespace sdic::detail {

inline constexpr double kLeakySlope = 0.2;

// He gain for a leaky rectifier with slope 0.2.
inline double leaky_gain() { return std::sqrt(2.0 / (1.0 + kLeakySlope * kLeakySlope)); }

// Seeded fan-in-scaled uniform initialisation; biases are zeroed.
class ParamInit {
  public:
    explicit ParamInit(uint64_t seed) : gen_(at::make_generator<at::CPUGeneratorImpl>(seed)) {}

    void uniform_std(const torch::Tensor& t, double std) {
        torch::NoGradGuard guard;
        const double bound = std * std::sqrt(3.0);
        t.uniform_(-bound, bound, gen_);
    }

    void normal(const torch::Tensor& t, double std) {
        torch::NoGradGuard guard;
        t.normal_(0.0, std, gen_);
    }

    static void zero(const torch::Tensor& t) {
        torch::NoGradGuard guard;
        t.zero_();
    }

    template <typename Layer>
    void layer(Layer& l, double gain, int64_t fan_in) {
        uniform_std(l.weight, gain / std::sqrt(static_cast<double>(fan_in)));
        if (l.bias.defined()) zero(l.bias);
    }

    void conv2d(torch::nn::Conv2dImpl& c, double gain) { layer(c, gain, c.weight[0].numel()); }
    void conv3d(torch::nn::Conv3dImpl& c, double gain) { layer(c, gain, c.weight[0].numel()); }
    void linear(torch::nn::LinearImpl& l, double gain) { layer(l, gain, l.weight.size(1)); }
    // Effective fan-in of a stride-s transposed convolution: in_channels * k^3 / s^3.
    void conv_transpose3d(torch::nn::ConvTranspose3dImpl& c, double gain, int64_t stride) {
        layer(c, gain, c.weight.size(0) * c.weight[0][0].numel() / (stride * stride * stride));
    }

    template <typename Layer>
    static void zero_layer(Layer& l) {
        zero(l.weight);
        if (l.bias.defined()) zero(l.bias);
    }

  private:
    at::Generator gen_;
};

}  // namespace sdic::detail
