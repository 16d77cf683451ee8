#pragma once

// Plain-loop reference implementations used as independent oracles for the
// metric, perceptual and eigensolver code.

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdic/losses.hpp"

namespace sdic::oracle {

inline double px(const torch::Tensor& t, int64_t c, int64_t i, int64_t j) { return t[c][i][j].item<double>(); }

inline double reference_psnr(const torch::Tensor& a, const torch::Tensor& b) {
    double se = 0;
    int64_t n = 0;
    for (int64_t c = 0; c < a.size(0); ++c)
        for (int64_t i = 0; i < a.size(1); ++i)
            for (int64_t j = 0; j < a.size(2); ++j, ++n) se += std::pow(px(a, c, i, j) - px(b, c, i, j), 2);
    return 10 * std::log10(4.0 / (se / static_cast<double>(n)));
}

// One 8x8 window at (r, s) in channel c, textbook SSIM with population moments.
inline double window_ssim(const torch::Tensor& a, const torch::Tensor& b, int64_t c, int64_t r, int64_t s) {
    double ma = 0, mb = 0;
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j) {
            ma += px(a, c, r + i, s + j);
            mb += px(b, c, r + i, s + j);
        }
    ma /= 64;
    mb /= 64;
    double va = 0, vb = 0, cov = 0;
    for (int64_t i = 0; i < 8; ++i)
        for (int64_t j = 0; j < 8; ++j) {
            const double da = px(a, c, r + i, s + j) - ma;
            const double db = px(b, c, r + i, s + j) - mb;
            va += da * da;
            vb += db * db;
            cov += da * db;
        }
    va /= 64;
    vb /= 64;
    cov /= 64;
    const double c1 = 0.02 * 0.02;
    const double c2 = 0.06 * 0.06;
    return (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
}

inline double reference_ssim(const torch::Tensor& a, const torch::Tensor& b) {
    std::vector<int64_t> rs;
    for (int64_t r = 0; r + 8 <= a.size(1); r += 4) rs.push_back(r);
    if (rs.back() != a.size(1) - 8) rs.push_back(a.size(1) - 8);
    std::vector<int64_t> cs;
    for (int64_t s = 0; s + 8 <= a.size(2); s += 4) cs.push_back(s);
    if (cs.back() != a.size(2) - 8) cs.push_back(a.size(2) - 8);
    double total = 0;
    int64_t count = 0;
    for (int64_t c = 0; c < 3; ++c)
        for (auto r : rs)
            for (auto s : cs) {
                total += window_ssim(a, b, c, r, s);
                ++count;
            }
    return total / static_cast<double>(count);
}

// C x H x W feature map in plain doubles.
struct Map {
    int64_t c = 0, h = 0, w = 0;
    std::vector<double> v;
    double& at(int64_t k, int64_t i, int64_t j) { return v[static_cast<std::size_t>((k * h + i) * w + j)]; }
    double at(int64_t k, int64_t i, int64_t j) const { return v[static_cast<std::size_t>((k * h + i) * w + j)]; }
};

inline Map from_tensor(const torch::Tensor& image) {
    auto t = image.to(torch::kFloat64).contiguous();
    Map m{t.size(0), t.size(1), t.size(2), {}};
    m.v.assign(t.data_ptr<double>(), t.data_ptr<double>() + t.numel());
    return m;
}

// 3x3, stride 2, zero padding 1.
inline Map conv_s2(const Map& x, const torch::Tensor& weight, const torch::Tensor& bias) {
    auto wt = weight.to(torch::kFloat64).contiguous();
    auto bt = bias.to(torch::kFloat64).contiguous();
    const double* W = wt.data_ptr<double>();
    const double* B = bt.data_ptr<double>();
    Map y{wt.size(0), (x.h + 1) / 2, (x.w + 1) / 2, {}};
    y.v.assign(static_cast<std::size_t>(y.c * y.h * y.w), 0.0);
    for (int64_t o = 0; o < y.c; ++o)
        for (int64_t i = 0; i < y.h; ++i)
            for (int64_t j = 0; j < y.w; ++j) {
                double s = B[o];
                for (int64_t k = 0; k < x.c; ++k)
                    for (int64_t di = 0; di < 3; ++di)
                        for (int64_t dj = 0; dj < 3; ++dj) {
                            const int64_t r = 2 * i + di - 1;
                            const int64_t c = 2 * j + dj - 1;
                            if (r < 0 || c < 0 || r >= x.h || c >= x.w) continue;
                            s += W[((o * x.c + k) * 3 + di) * 3 + dj] * x.at(k, r, c);
                        }
                y.at(o, i, j) = s;
            }
    return y;
}

inline std::vector<Map> taps_of(const Map& image, FeatureNet& net) {
    std::map<std::string, torch::Tensor> p;
    for (const auto& item : net->named_parameters()) p[item.key()] = item.value();
    std::vector<Map> taps;
    Map x = image;
    for (int layer = 0; layer < 3; ++layer) {
        const auto prefix = "convs." + std::to_string(layer) + ".";
        x = conv_s2(x, p.at(prefix + "weight"), p.at(prefix + "bias"));
        for (auto& e : x.v) e = e >= 0 ? e : 0.2 * e;
        taps.push_back(x);
    }
    return taps;
}

inline double reference_perceptual(const Map& a, const Map& b, FeatureNet& net) {
    auto ta = taps_of(a, net);
    auto tb = taps_of(b, net);
    double total = 0;
    for (std::size_t t = 0; t < ta.size(); ++t) {
        const auto& x = ta[t];
        const auto& y = tb[t];
        double sum = 0;
        for (int64_t i = 0; i < x.h; ++i)
            for (int64_t j = 0; j < x.w; ++j) {
                double nx = 0, ny = 0;
                for (int64_t k = 0; k < x.c; ++k) {
                    nx += x.at(k, i, j) * x.at(k, i, j);
                    ny += y.at(k, i, j) * y.at(k, i, j);
                }
                nx = std::sqrt(nx + 1e-10);
                ny = std::sqrt(ny + 1e-10);
                for (int64_t k = 0; k < x.c; ++k) {
                    const double d = x.at(k, i, j) / nx - y.at(k, i, j) / ny;
                    sum += d * d;
                }
            }
        total += sum / static_cast<double>(x.c * x.h * x.w);
    }
    return total / static_cast<double>(ta.size());
}

using Mat3 = std::array<std::array<double, 3>, 3>;

// Cyclic Jacobi rotations on a symmetric 3x3 matrix. Columns of `vectors`
// are the eigenvectors.
inline void jacobi3(Mat3 a, std::array<double, 3>& values, Mat3& vectors) {
    vectors = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int p = 0; p < 3; ++p)
            for (int q = p + 1; q < 3; ++q) off += a[p][q] * a[p][q];
        if (off < 1e-30) break;
        for (int p = 0; p < 3; ++p) {
            for (int q = p + 1; q < 3; ++q) {
                if (std::abs(a[p][q]) < 1e-300) continue;
                const double theta = (a[q][q] - a[p][p]) / (2 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
                const double c = 1 / std::sqrt(t * t + 1);
                const double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    const double akp = a[k][p];
                    const double akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    const double apk = a[p][k];
                    const double aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for (int k = 0; k < 3; ++k) {
                    const double vkp = vectors[k][p];
                    const double vkq = vectors[k][q];
                    vectors[k][p] = c * vkp - s * vkq;
                    vectors[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    for (int i = 0; i < 3; ++i) values[i] = a[i][i];
}

}  // namespace sdic::oracle
