#pragma once

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace sdic {

struct RangerOptions {
    double lr = 1e-3;
    double beta1 = 0.95;
    double beta2 = 0.999;
    double eps = 1e-5;
    double weight_decay = 0.0;
    int64_t lookahead_k = 6;
    double lookahead_alpha = 0.5;
    double sma_threshold = 5.0;
    bool gradient_centralization = true;
};

// RAdam with gradient centralisation, wrapped in Lookahead.
// Centralisation subtracts the per-output mean from gradients of parameters with
// more than one dimension. Every lookahead_k steps the slow weights move
// lookahead_alpha of the way to the fast weights and the fast weights reset to them.
class Ranger {
  public:
    Ranger(std::vector<torch::Tensor> params, RangerOptions options);

    void zero_grad();
    void step();
    void set_lr(double lr) { options_.lr = lr; }
    double lr() const { return options_.lr; }
    int64_t steps() const { return step_; }

  private:
    struct State {
        torch::Tensor exp_avg;
        torch::Tensor exp_avg_sq;
        torch::Tensor slow;
    };

    std::vector<torch::Tensor> params_;
    std::vector<State> state_;
    RangerOptions options_;
    int64_t step_ = 0;
};

// In-place gradient centralisation; no-op for tensors with fewer than two dims.
void centralize_gradient(torch::Tensor& grad);

}  // namespace sdic
