#include "sdic/losses.hpp"

#include <cstdio>

#include "init.hpp"
#include "sdic/errors.hpp"
#include "sdic/toygen.hpp"

namespace sdic {

using detail::kLeakySlope;
using detail::leaky_gain;
using detail::ParamInit;

FeatureNetImpl::FeatureNetImpl(const ModelConfig& config) {
    ParamInit init(config.feature_seed);
    int64_t in = 3;
    for (auto out : config.feature_channels) {
        auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1));
        init.conv2d(*conv, leaky_gain());
        convs_->push_back(conv);
        in = out;
    }
    register_module("convs", convs_);
    freeze(*this);
}

Features FeatureNetImpl::extract(const torch::Tensor& images) {
    expect_shape(images, {-1, 3, -1, -1}, "feature net input");
    Features out;
    auto x = images;
    for (std::size_t i = 0; i < convs_->size(); ++i) {
        x = convs_[i]->as<torch::nn::Conv2d>()->forward(x);
        if (i + 1 < convs_->size()) {
            x = torch::leaky_relu(x, kLeakySlope);
            out.taps.push_back(x);
        }
    }
    out.embedding = x.mean({2, 3});
    return out;
}

torch::Tensor unit_normalize_channels(const torch::Tensor& x) {
    return x / torch::sqrt(x.square().sum(1, true) + 1e-10);
}

torch::Tensor perceptual_distance(const Features& a, const Features& b) {
    if (a.taps.size() != b.taps.size() || a.taps.empty()) throw ShapeError("perceptual_distance: tap count mismatch");
    torch::Tensor total;
    for (std::size_t i = 0; i < a.taps.size(); ++i) {
        expect_same_shape(a.taps[i], b.taps[i], "perceptual_distance tap");
        auto term = (unit_normalize_channels(a.taps[i]) - unit_normalize_channels(b.taps[i])).square().mean();
        total = total.defined() ? total + term : term;
    }
    return total / static_cast<double>(a.taps.size());
}

torch::Tensor perceptual_distance(const torch::Tensor& a, const torch::Tensor& b, FeatureNet& net) {
    expect_same_shape(a, b, "perceptual_distance");
    return perceptual_distance(net->extract(a), net->extract(b));
}

torch::Tensor embedding_cosine(const torch::Tensor& a, const torch::Tensor& b) {
    expect_shape(a, {-1, -1}, "embedding_cosine embedding");
    expect_same_shape(a, b, "embedding_cosine");
    auto na = a.norm(2, 1);
    auto nb = b.norm(2, 1);
    if ((na.min().item<double>() < 1e-12) || (nb.min().item<double>() < 1e-12)) {
        throw NumericalError("embedding_cosine: zero-norm embedding");
    }
    return (a * b).sum(1) / (na * nb);
}

torch::Tensor cosine_distance(const torch::Tensor& a, const torch::Tensor& b) {
    return (1.0 - embedding_cosine(a, b)).mean();
}

torch::Tensor id_loss(const torch::Tensor& a, const torch::Tensor& b, FeatureNet& net) {
    expect_same_shape(a, b, "id_loss");
    return cosine_distance(net->extract(a).embedding, net->extract(b).embedding);
}

std::string LossBreakdown::csv_header() { return "l2,lpips_proxy,id,rec,edit_w,edit_f,joint"; }

std::string LossBreakdown::csv_row() const {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%.8g,%.8g,%.8g,%.8g,%.8g,%.8g,%.8g", l2, lpips_proxy, id, rec, edit_w, edit_f, joint);
    return buf;
}

LossBreakdown LossTerms::values() const {
    auto v = [](const torch::Tensor& t) { return t.defined() ? t.item<double>() : 0.0; };
    return {v(l2), v(lpips_proxy), v(id), v(rec), v(edit_w), v(edit_f), v(edit), v(joint)};
}

LossTerms rec_loss(const torch::Tensor& image, const torch::Tensor& reconstruction, FeatureNet& net,
                   const LossWeights& weights) {
    expect_same_shape(image, reconstruction, "rec_loss");
    auto fa = net->extract(image);
    auto fb = net->extract(reconstruction);
    LossTerms t;
    t.l2 = (image - reconstruction).square().mean();
    t.lpips_proxy = perceptual_distance(fa, fb);
    t.id = cosine_distance(fa.embedding, fb.embedding);
    t.rec = t.l2 + weights.lpips * t.lpips_proxy + weights.id * t.id;
    t.edit_w = torch::zeros_like(t.l2);
    t.edit_f = torch::zeros_like(t.l2);
    t.edit = torch::zeros_like(t.l2);
    t.joint = t.rec;
    return t;
}

LossTerms joint_loss(const torch::Tensor& w, const torch::Tensor& w_enhanced, const torch::Tensor& map,
                     const torch::Tensor& map_enhanced, const torch::Tensor& image, const torch::Tensor& reconstruction,
                     FeatureNet& net, const LossWeights& weights) {
    expect_same_shape(w, w_enhanced, "joint_loss codes");
    expect_same_shape(map, map_enhanced, "joint_loss maps");
    auto t = rec_loss(image, reconstruction, net, weights);
    t.edit_w = (w - w_enhanced).abs().mean();
    t.edit_f = (map - map_enhanced).abs().mean();
    t.edit = t.edit_w + t.edit_f;
    t.joint = t.rec + weights.edit * t.edit;
    return t;
}

}  // namespace sdic
