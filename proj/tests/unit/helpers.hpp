#pragma once

#include <cstring>
#include <filesystem>
#include <random>
#include <string>

#include <ATen/CPUGeneratorImpl.h>
#include <torch/torch.h>

#include "sdic/config.hpp"

namespace sdic::test {

// Same dtype, shape and raw bytes.
inline bool bit_equal(const torch::Tensor& a, const torch::Tensor& b) {
    if (a.scalar_type() != b.scalar_type() || a.sizes() != b.sizes()) return false;
    auto x = a.contiguous();
    auto y = b.contiguous();
    return std::memcmp(x.data_ptr(), y.data_ptr(), x.numel() * x.element_size()) == 0;
}

inline torch::Tensor seeded_normal(std::vector<int64_t> shape, uint64_t seed, torch::Dtype dtype = torch::kFloat32) {
    auto gen = at::detail::createCPUGenerator(seed);
    return at::normal(0.0, 1.0, shape, gen).to(dtype);
}

inline torch::Tensor seeded_uniform(std::vector<int64_t> shape, uint64_t seed, double lo, double hi,
                                    torch::Dtype dtype = torch::kFloat32) {
    auto gen = at::detail::createCPUGenerator(seed);
    return (at::rand(shape, gen, torch::TensorOptions().dtype(torch::kFloat64)) * (hi - lo) + lo).to(dtype);
}

inline RunConfig small_config() { return reduced_config(); }

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("sdic_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace sdic::test
