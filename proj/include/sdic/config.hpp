#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sdic {

enum class Variant {
    kFull,               // two-branch context + attention compensation of the latent map
    kNoAttention,        // latent map compensated by a predicted scale/shift instead of gated addition
    kNoSpatialContext,   // no context branches and no attention (images go straight into the volume)
};

enum class EditBase {
    kEnhanced,  // F^R / F^E tapped from forwards of w_enhanced and w_enhanced + alpha * n
    kInitial,   // F^R / F^E tapped from forwards of w and w + alpha * n
};

std::string to_string(Variant v);
Variant parse_variant(std::string_view s);
std::string to_string(EditBase b);
EditBase parse_edit_base(std::string_view s);

/// Network sizes. Defaults are the 64x64 toy configuration.
struct ModelConfig {
    int64_t image_size = 64;
    int64_t style_rows = 6;    // K
    int64_t style_dim = 64;    // d
    int64_t injection_layer = 2;

    // Styled constant followed by one entry per synthesis block.
    std::vector<int64_t> generator_channels{128, 128, 96, 64, 48, 32};
    double style_gain = 0.4;
    double output_gain = 0.5;

    std::vector<int64_t> encoder_channels{16, 32, 64, 96, 128};

    // Two-branch hourglass: five conv-block widths, then the branch output width C.
    std::vector<int64_t> branch_channels{16, 24, 32, 48, 64};
    int64_t context_channels = 16;
    std::vector<int64_t> volume_channels{8, 16, 32};

    int64_t affine_hidden = 8;
    std::vector<int64_t> map_embed_channels{16, 32, 48};

    std::vector<int64_t> feature_channels{16, 32, 64, 128};

    // Zero the last layer of every residual head so an untrained model is the
    // encoder-only baseline (gamma = 1, theta = 0, f_c2(D) = 0).
    bool identity_init = true;

    EditBase edit_base = EditBase::kEnhanced;

    uint64_t generator_seed = 1;
    uint64_t encoder_seed = 2;
    uint64_t sdic_seed = 3;
    uint64_t feature_seed = 4;

    int64_t generator_blocks() const;
    int64_t encoder_layers() const;
    // Spatial side of the generator activation after block `layer`.
    int64_t block_resolution(int64_t layer) const;
    int64_t block_channels(int64_t layer) const;
    // Row of the latent code driving `block` (-1 selects the styled constant).
    int64_t style_row_for_block(int64_t block) const;

    void validate() const;
};

struct TrainConfig {
    uint64_t seed = 11;
    int64_t steps = 3000;
    int64_t batch_size = 8;
    double learning_rate = 1e-3;
    double weight_decay = 0.0;
    int64_t warmup_steps = 0;  // optional linear learning-rate ramp on top of the rectified warmup
    Variant variant = Variant::kFull;
    int64_t log_every = 50;

    int64_t pretrain_steps = 1500;
    int64_t pretrain_batch_size = 16;
    double pretrain_learning_rate = 1e-3;

    void validate() const;
};

struct DataConfig {
    uint64_t seed = 2024;
    int64_t train_count = 2048;
    int64_t heldout_count = 256;
    int64_t min_sprites = 1;
    int64_t max_sprites = 4;
    double min_alpha = 0.5;
    double max_alpha = 1.0;
    int64_t min_sprite_size = 4;
    int64_t max_sprite_size = 20;

    void validate() const;
};

struct LossWeights {
    double lpips = 0.8;
    double id = 0.2;
    double edit = 0.5;

    void validate() const;
};

/// Everything a run needs. Serialized as INI with [model] [train] [data] [loss].
struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    LossWeights loss;

    static RunConfig parse(std::string_view ini_text);
    static RunConfig load(const std::filesystem::path& path);
    std::string to_ini() const;
    void validate() const;
};

/// H=16, C=4, K=2, d=8 configuration used by gradient checks and fast tests.
RunConfig reduced_config();

}  // namespace sdic
