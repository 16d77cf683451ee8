#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <torch/torch.h>

#include "sdic/config.hpp"
#include "sdic/pipeline.hpp"
#include "sdic/tensor_io.hpp"

namespace sdic {

// On disk: a directory with config.ini, state.txt (stage, step, generator
// checksum) and the tensors as NTF files listed in manifest.tsv.
struct Checkpoint {
    RunConfig config;
    std::string stage;  // "encoder" or "sdic"
    int64_t step = 0;
    io::NamedTensors tensors;
};

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Builds the models for `checkpoint` and loads every tensor it carries.
SdicModels load_models(const Checkpoint& checkpoint);

struct TrainObserver {
    std::ostream* csv = nullptr;       // step,<LossBreakdown columns>
    std::ostream* progress = nullptr;  // human-readable lines
};

// Trains the encoder on clean generator samples by L2 reconstruction through
// the frozen generator. `losses` receives (step, loss) at every log point.
Checkpoint pretrain_encoder(const RunConfig& config, const TrainObserver& observer = {},
                            std::vector<std::pair<int64_t, double>>* losses = nullptr);

// Trains DIPN + DICN on overlay images under the joint loss with the encoder
// from `encoder` and the generator frozen.
Checkpoint train_sdic(const RunConfig& config, const Checkpoint& encoder, const TrainObserver& observer = {});

enum class Precision { kDouble, kFloat };

struct GradCheckOptions {
    Precision precision = Precision::kDouble;
    double tolerance = 1e-4;
    double step = 1e-6;
    int64_t coordinates = 10;  // per parameter group
    uint64_t seed = 7;
    // Test hook: sees every sampled analytic value before comparison and may alter it.
    std::function<void(const std::string& parameter, int64_t flat_index, double& analytic)> corrupt;

    static GradCheckOptions for_precision(Precision p);
};

struct GroupCheck {
    std::string group;
    int64_t coordinates = 0;
    double worst_error = 0;
    double analytic = 0;  // at the worst coordinate
    double numeric = 0;
    std::string worst_parameter;
    bool passed = true;
};

struct GradCheckReport {
    std::vector<GroupCheck> groups;
    double tolerance = 0;

    bool passed() const;
    std::string table() const;
};

// Parameter group: the first two dot-separated components of the name.
std::string parameter_group(const std::string& name);

// Compares autograd gradients of `objective` against central differences at
// randomly chosen coordinates. rel = |a - c| / max(|a|, |c|, 1e-8).
GradCheckReport check_gradients(const std::function<torch::Tensor()>& objective, const io::NamedTensors& params,
                                const GradCheckOptions& options);
// Variant taking the central differences from a separate `reference`
// objective over `reference_params` (same names and shapes), e.g. a 64-bit
// copy of a 32-bit model.
GradCheckReport check_gradients(const std::function<torch::Tensor()>& objective, const io::NamedTensors& params,
                                const std::function<torch::Tensor()>& reference,
                                const io::NamedTensors& reference_params, const GradCheckOptions& options);

// Joint loss through DIPN + DICN on the reduced configuration with randomly
// initialised heads. In 32-bit mode the analytic gradients come from a float32
// model and the differences from a float64 copy of it: float32 rounding of an
// O(1) loss alone exceeds the differences of any useful step.
GradCheckReport grad_check(const GradCheckOptions& options, Variant variant = Variant::kFull);

}  // namespace sdic
