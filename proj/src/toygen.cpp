#include "sdic/toygen.hpp"

#include <cmath>

#include "init.hpp"
#include "sdic/errors.hpp"

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

}  // namespace

ToyGeneratorImpl::ToyGeneratorImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    const auto d = config_.style_dim;
    const auto& ch = config_.generator_channels;

    mapping_in_ = register_module("mapping_in", torch::nn::Linear(d, d));
    mapping_out_ = register_module("mapping_out", torch::nn::Linear(d, d));
    constant_ = register_parameter("constant", torch::empty({1, ch[0], 4, 4}));
    constant_style_ = register_module("constant_style", torch::nn::Linear(d, 2 * ch[0]));
    for (int64_t j = 0; j < config_.generator_blocks(); ++j) {
        convs_->push_back(torch::nn::Conv2d(torch::nn::Conv2dOptions(ch[j], ch[j + 1], 3).padding(1)));
        styles_->push_back(torch::nn::Linear(d, 2 * ch[j + 1]));
    }
    register_module("convs", convs_);
    register_module("styles", styles_);
    to_rgb_ = register_module("to_rgb", torch::nn::Conv2d(torch::nn::Conv2dOptions(ch.back(), 3, 1)));

    ParamInit init(config_.generator_seed);
    init.linear(*mapping_in_, leaky_gain());
    init.linear(*mapping_out_, 1.0);
    init.uniform_std(constant_, 1.0);
    init.linear(*constant_style_, config_.style_gain);
    for (int64_t j = 0; j < config_.generator_blocks(); ++j) {
        init.conv2d(*convs_[j]->as<torch::nn::Conv2d>(), leaky_gain());
        init.linear(*styles_[j]->as<torch::nn::Linear>(), config_.style_gain);
    }
    init.conv2d(*to_rgb_, config_.output_gain);
    freeze(*this);
}

void ToyGeneratorImpl::check_code(const torch::Tensor& w) const {
    expect_shape(w, {-1, config_.style_rows, config_.style_dim}, "latent code");
}

torch::Tensor ToyGeneratorImpl::map_latent(const torch::Tensor& z) {
    expect_shape(z, {-1, config_.style_dim}, "map_latent z");
    auto h = mapping_out_(lrelu(mapping_in_(z)));
    return h.unsqueeze(1).expand({-1, config_.style_rows, -1}).contiguous();
}

torch::Tensor ToyGeneratorImpl::modulate(const torch::Tensor& x, torch::nn::LinearImpl& affine, const torch::Tensor& row) {
    auto style = affine.forward(row);
    auto parts = style.chunk(2, 1);
    return x * (1 + parts[0].unsqueeze(-1).unsqueeze(-1)) + parts[1].unsqueeze(-1).unsqueeze(-1);
}

torch::Tensor ToyGeneratorImpl::styled_constant(const torch::Tensor& w) {
    auto c = constant_.expand({w.size(0), -1, -1, -1});
    return modulate(c, *constant_style_, w.select(1, 0));
}

torch::Tensor ToyGeneratorImpl::run_block(int64_t block, torch::Tensor x, const torch::Tensor& w) {
    if (block > 0) x = upsample2x(x);
    x = convs_[block]->as<torch::nn::Conv2d>()->forward(x);
    return lrelu(modulate(x, *styles_[block]->as<torch::nn::Linear>(), w.select(1, config_.style_row_for_block(block))));
}

std::vector<int64_t> ToyGeneratorImpl::latent_map_shape(int64_t layer) const {
    const auto r = config_.block_resolution(layer);
    return {config_.block_channels(layer), r, r};
}

SynthResult ToyGeneratorImpl::synthesize(const torch::Tensor& w, const std::optional<torch::Tensor>& inject) {
    check_code(w);
    const auto layer = config_.injection_layer;
    if (inject) {
        auto s = latent_map_shape(layer);
        expect_shape(*inject, {w.size(0), s[0], s[1], s[2]}, "injected latent map");
    }
    SynthResult out;
    out.trace.injection_layer = layer;
    out.trace.styled_constant = styled_constant(w);
    auto x = out.trace.styled_constant;
    for (int64_t j = 0; j < config_.generator_blocks(); ++j) {
        x = run_block(j, x, w);
        if (j == layer && inject) x = *inject;
        out.trace.blocks.push_back(x);
    }
    out.image = torch::tanh(to_rgb_(x));
    return out;
}

torch::Tensor ToyGeneratorImpl::latent_map(const torch::Tensor& w, int64_t layer) {
    check_code(w);
    if (layer < 0 || layer >= config_.generator_blocks()) throw ShapeError("latent_map: layer out of range");
    auto x = styled_constant(w);
    for (int64_t j = 0; j <= layer; ++j) x = run_block(j, x, w);
    return x;
}

torch::Tensor ToyGeneratorImpl::render_from(const torch::Tensor& map, const torch::Tensor& w, int64_t layer) {
    check_code(w);
    if (layer < 0 || layer >= config_.generator_blocks()) throw ShapeError("render_from: layer out of range");
    auto s = latent_map_shape(layer);
    expect_shape(map, {w.size(0), s[0], s[1], s[2]}, "render_from map");
    auto x = map;
    for (int64_t j = layer + 1; j < config_.generator_blocks(); ++j) x = run_block(j, x, w);
    return torch::tanh(to_rgb_(x));
}

InversionEncoderImpl::InversionEncoderImpl(const ModelConfig& config) : config_(config) {
    config_.validate();
    ParamInit init(config_.encoder_seed);
    int64_t in = 3;
    for (auto out : config_.encoder_channels) {
        auto conv = torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).stride(2).padding(1));
        init.conv2d(*conv, leaky_gain());
        convs_->push_back(conv);
        in = out;
    }
    register_module("convs", convs_);
    heads_ = register_module("heads", torch::nn::Linear(in * 4, config_.style_rows * config_.style_dim));
    init.linear(*heads_, 1.0);
}

torch::Tensor InversionEncoderImpl::forward(const torch::Tensor& image) {
    expect_shape(image, {-1, 3, config_.image_size, config_.image_size}, "encoder input");
    auto x = image;
    for (const auto& m : *convs_) x = lrelu(m->as<torch::nn::Conv2d>()->forward(x));
    return heads_(x.flatten(1)).view({-1, config_.style_rows, config_.style_dim});
}

uint64_t derive_seed(uint64_t base, uint64_t stream, uint64_t index) {
    // splitmix64 finaliser over a simple combination of the three inputs
    uint64_t x = base ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xD1B54A32D192ED03ULL);
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

namespace {

torch::Tensor draw_z(std::mt19937_64& rng, int64_t dim) {
    std::normal_distribution<double> normal(0.0, 1.0);
    auto z = torch::empty({dim}, torch::kFloat32);
    auto acc = z.accessor<float, 1>();
    for (int64_t i = 0; i < dim; ++i) acc[i] = static_cast<float>(normal(rng));
    return z;
}

}  // namespace

torch::Tensor sample_z(uint64_t seed, int64_t dim) {
    std::mt19937_64 rng(seed);
    return draw_z(rng, dim);
}

torch::Tensor overlay_sprites(const torch::Tensor& image, std::mt19937_64& rng, const DataConfig& data) {
    expect_shape(image, {3, -1, -1}, "overlay_sprites image");
    auto out = image.detach().to(torch::kFloat64).clone().contiguous();
    const auto h = out.size(1);
    const auto w = out.size(2);
    auto acc = out.accessor<double, 3>();

    std::uniform_int_distribution<int64_t> count_dist(data.min_sprites, data.max_sprites);
    std::uniform_int_distribution<int> kind_dist(0, 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int64_t n = count_dist(rng);
    for (int64_t s = 0; s < n; ++s) {
        const int kind = kind_dist(rng);
        const double cy = unit(rng) * static_cast<double>(h);
        const double cx = unit(rng) * static_cast<double>(w);
        const double sy = data.min_sprite_size + unit(rng) * static_cast<double>(data.max_sprite_size - data.min_sprite_size);
        const double sx = data.min_sprite_size + unit(rng) * static_cast<double>(data.max_sprite_size - data.min_sprite_size);
        const bool horizontal = unit(rng) < 0.5;
        double colour[3];
        for (double& c : colour) c = unit(rng) * 2.0 - 1.0;
        const double alpha = data.min_alpha + unit(rng) * (data.max_alpha - data.min_alpha);

        for (int64_t y = 0; y < h; ++y) {
            for (int64_t x = 0; x < w; ++x) {
                const double py = static_cast<double>(y) + 0.5;
                const double px = static_cast<double>(x) + 0.5;
                bool inside = false;
                switch (kind) {
                    case 0: inside = std::abs(py - cy) < sy / 2 && std::abs(px - cx) < sx / 2; break;
                    case 1: inside = horizontal ? std::abs(py - cy) < 1.5 : std::abs(px - cx) < 1.5; break;
                    default: inside = (py - cy) * (py - cy) + (px - cx) * (px - cx) < (sy / 2) * (sy / 2); break;
                }
                if (!inside) continue;
                for (int c = 0; c < 3; ++c) acc[c][y][x] = acc[c][y][x] * (1.0 - alpha) + colour[c] * alpha;
            }
        }
    }
    return out.clamp(-1.0, 1.0).to(image.scalar_type());
}

SyntheticSample sample_synthetic(ToyGenerator& generator, const DataConfig& data, uint64_t seed, bool overlay) {
    torch::NoGradGuard guard;
    std::mt19937_64 rng(seed);
    const auto dim = generator->config().style_dim;
    auto z = draw_z(rng, dim);
    auto image = generator->synthesize(generator->map_latent(z.unsqueeze(0))).image.squeeze(0);
    if (overlay) image = overlay_sprites(image, rng, data);
    return {image, z};
}

Dataset make_dataset(ToyGenerator& generator, const DataConfig& data, Split split, bool overlay,
                     std::optional<int64_t> count) {
    torch::NoGradGuard guard;
    const int64_t n = count.value_or(split == Split::kTrain ? data.train_count : data.heldout_count);
    const uint64_t stream = split == Split::kTrain ? 1 : 2;
    const auto dim = generator->config().style_dim;
    const auto size = generator->config().image_size;

    Dataset ds;
    ds.images = torch::empty({n, 3, size, size}, torch::kFloat32);
    ds.z = torch::empty({n, dim}, torch::kFloat32);
    std::vector<std::mt19937_64> rngs;
    rngs.reserve(static_cast<std::size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        rngs.emplace_back(derive_seed(data.seed, stream, static_cast<uint64_t>(i)));
        ds.z[i].copy_(draw_z(rngs.back(), dim));
    }
    constexpr int64_t kChunk = 64;
    for (int64_t b = 0; b < n; b += kChunk) {
        const auto e = std::min(n, b + kChunk);
        auto z = ds.z.slice(0, b, e);
        ds.images.slice(0, b, e).copy_(generator->synthesize(generator->map_latent(z)).image);
    }
    if (overlay) {
        for (int64_t i = 0; i < n; ++i) {
            ds.images[i].copy_(overlay_sprites(ds.images[i], rngs[static_cast<std::size_t>(i)], data));
        }
    }
    return ds;
}

void freeze(torch::nn::Module& module) {
    for (auto& p : module.parameters()) p.set_requires_grad(false);
}

uint64_t checksum(const torch::nn::Module& module) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const torch::Tensor& t) {
        auto c = t.detach().to(torch::kCPU).contiguous();
        const auto* bytes = static_cast<const unsigned char*>(c.data_ptr());
        const auto n = static_cast<std::size_t>(c.numel()) * c.element_size();
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& p : module.parameters()) mix(p);
    for (const auto& b : module.buffers()) mix(b);
    return h;
}

}  // namespace sdic
