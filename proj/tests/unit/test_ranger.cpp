#include <doctest.h>

#include <array>
#include <cmath>

#include "helpers.hpp"
#include "sdic/ranger.hpp"

using namespace sdic;

namespace {

constexpr int kRows = 2;
constexpr int kCols = 3;
using Grid = std::array<std::array<double, kCols>, kRows>;

// Loss sum(c * p^2 + b * p), gradient 2cp + b.
const Grid kC{{{0.5, 1.0, 2.0}, {1.5, 0.25, 3.0}}};
const Grid kB{{{0.3, -0.7, 0.1}, {-0.2, 0.4, 0.9}}};

// Straight-line replay of the update rule on plain doubles.
Grid oracle(Grid p, int steps, const RangerOptions& o) {
    Grid m{}, v{}, slow = p;
    for (int t = 1; t <= steps; ++t) {
        Grid g{};
        for (int r = 0; r < kRows; ++r) {
            double mean = 0;
            for (int c = 0; c < kCols; ++c) {
                g[r][c] = 2 * kC[r][c] * p[r][c] + kB[r][c];
                mean += g[r][c] / kCols;
            }
            for (int c = 0; c < kCols; ++c) g[r][c] -= mean;
        }
        const double b2t = std::pow(o.beta2, t);
        const double sma_max = 2 / (1 - o.beta2) - 1;
        const double sma = sma_max - 2 * t * b2t / (1 - b2t);
        const double bc1 = 1 - std::pow(o.beta1, t);
        for (int r = 0; r < kRows; ++r) {
            for (int c = 0; c < kCols; ++c) {
                m[r][c] = o.beta1 * m[r][c] + (1 - o.beta1) * g[r][c];
                v[r][c] = o.beta2 * v[r][c] + (1 - o.beta2) * g[r][c] * g[r][c];
                if (sma > o.sma_threshold) {
                    const double rt = std::sqrt((1 - b2t) * (sma - 4) / (sma_max - 4) * (sma - 2) / sma * sma_max / (sma_max - 2));
                    p[r][c] -= o.lr * rt / bc1 * m[r][c] / (std::sqrt(v[r][c]) + o.eps);
                } else {
                    p[r][c] -= o.lr / bc1 * m[r][c];
                }
                if (t % o.lookahead_k == 0) {
                    slow[r][c] += o.lookahead_alpha * (p[r][c] - slow[r][c]);
                    p[r][c] = slow[r][c];
                }
            }
        }
    }
    return p;
}

}  // namespace

TEST_CASE("ranger matches a plain-loop replay through warmup and lookahead syncs") {
    const Grid start{{{0.8, -1.2, 0.4}, {2.0, -0.5, 1.1}}};
    auto p = torch::empty({kRows, kCols}, torch::kFloat64);
    for (int r = 0; r < kRows; ++r)
        for (int c = 0; c < kCols; ++c) p[r][c] = start[r][c];
    p.requires_grad_(true);
    auto c = torch::empty_like(p).detach();
    auto b = torch::empty_like(p).detach();
    for (int r = 0; r < kRows; ++r)
        for (int k = 0; k < kCols; ++k) {
            c[r][k] = kC[r][k];
            b[r][k] = kB[r][k];
        }

    RangerOptions o;
    o.lr = 0.05;
    Ranger opt({p}, o);
    const int steps = 20;
    for (int t = 0; t < steps; ++t) {
        opt.zero_grad();
        (c * p.square() + b * p).sum().backward();
        opt.step();
    }
    CHECK(opt.steps() == steps);
    const auto want = oracle(start, steps, o);
    for (int r = 0; r < kRows; ++r)
        for (int k = 0; k < kCols; ++k) CHECK(std::abs(p[r][k].item<double>() - want[r][k]) <= 1e-12);
}

TEST_CASE("gradient centralisation zeroes per-output means and skips vectors") {
    auto g = test::seeded_normal({4, 3, 2, 2}, 1, torch::kFloat64);
    centralize_gradient(g);
    CHECK(g.mean({1, 2, 3}).abs().max().item<double>() < 1e-15);
    auto v = test::seeded_normal({5}, 2, torch::kFloat64);
    auto before = v.clone();
    centralize_gradient(v);
    CHECK(test::bit_equal(v, before));
}

TEST_CASE("ranger rejects bad options and skips parameters without gradients") {
    auto p = torch::ones({3}, torch::kFloat64).requires_grad_(true);
    RangerOptions bad;
    bad.lr = 0;
    CHECK_THROWS_AS(Ranger({p}, bad), std::invalid_argument);
    bad = RangerOptions{};
    bad.lookahead_k = 0;
    CHECK_THROWS_AS(Ranger({p}, bad), std::invalid_argument);
    Ranger opt({p}, RangerOptions{});
    opt.step();
    CHECK(test::bit_equal(p.detach(), torch::ones({3}, torch::kFloat64)));
}
