#include "sdic/ranger.hpp"

#include <cmath>
#include <stdexcept>

namespace sdic {

void centralize_gradient(torch::Tensor& grad) {
    if (grad.dim() < 2) return;
    std::vector<int64_t> dims;
    for (int64_t d = 1; d < grad.dim(); ++d) dims.push_back(d);
    grad.sub_(grad.mean(dims, true));
}

Ranger::Ranger(std::vector<torch::Tensor> params, RangerOptions options)
    : params_(std::move(params)), options_(options) {
    if (!(options_.lr > 0)) throw std::invalid_argument("Ranger: learning rate must be positive");
    if (options_.lookahead_k < 1) throw std::invalid_argument("Ranger: lookahead_k must be >= 1");
    if (!(options_.lookahead_alpha >= 0 && options_.lookahead_alpha <= 1)) {
        throw std::invalid_argument("Ranger: lookahead_alpha must lie in [0, 1]");
    }
    torch::NoGradGuard guard;
    for (const auto& p : params_) {
        state_.push_back({torch::zeros_like(p), torch::zeros_like(p), p.detach().clone()});
    }
}

void Ranger::zero_grad() {
    for (auto& p : params_) {
        if (p.grad().defined()) p.mutable_grad().zero_();
    }
}

void Ranger::step() {
    torch::NoGradGuard guard;
    ++step_;
    const double b1 = options_.beta1;
    const double b2 = options_.beta2;
    const double b2t = std::pow(b2, static_cast<double>(step_));
    const double sma_max = 2.0 / (1.0 - b2) - 1.0;
    const double sma = sma_max - 2.0 * static_cast<double>(step_) * b2t / (1.0 - b2t);
    const double bias1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const bool rectified = sma > options_.sma_threshold;
    double step_size = 1.0 / bias1;
    if (rectified) {
        step_size = std::sqrt((1.0 - b2t) * (sma - 4.0) / (sma_max - 4.0) * (sma - 2.0) / sma * sma_max / (sma_max - 2.0)) /
                    bias1;
    }
    const bool sync = step_ % options_.lookahead_k == 0;

    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        auto& s = state_[i];
        if (!p.grad().defined()) continue;
        auto grad = p.grad().clone();
        if (options_.gradient_centralization) centralize_gradient(grad);

        s.exp_avg.mul_(b1).add_(grad, 1.0 - b1);
        s.exp_avg_sq.mul_(b2).addcmul_(grad, grad, 1.0 - b2);
        if (options_.weight_decay != 0) p.add_(p, -options_.weight_decay * options_.lr);
        if (rectified) {
            p.addcdiv_(s.exp_avg, s.exp_avg_sq.sqrt().add_(options_.eps), -step_size * options_.lr);
        } else {
            p.add_(s.exp_avg, -step_size * options_.lr);
        }
        if (sync) {
            s.slow.add_(p - s.slow, options_.lookahead_alpha);
            p.copy_(s.slow);
        }
    }
}

}  // namespace sdic
