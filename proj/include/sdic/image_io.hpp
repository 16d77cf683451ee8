#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <torch/torch.h>

namespace sdic::io {

// [-1, 1] -> [0, 255] with round-half-away-from-zero, clamped.
uint8_t to_byte(double v);
double from_byte(uint8_t b);

// Image tensors are 3xHxW in [-1, 1]; PNGs are 8-bit RGB.
void write_png(const std::filesystem::path& path, const torch::Tensor& image);
torch::Tensor read_png(const std::filesystem::path& path);

// Lays `images` (each 3xHxW) out row-major with `columns` per row and a 2px gap.
torch::Tensor contact_sheet(const std::vector<torch::Tensor>& images, int64_t columns);

}  // namespace sdic::io
