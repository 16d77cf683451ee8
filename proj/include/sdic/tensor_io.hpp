#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <torch/torch.h>

namespace sdic::io {

// NTF layout: "NTF1" | dtype u8 (1 = f32, 2 = f64) | rank u8 | 2 zero bytes |
// rank x u32 LE dims | row-major LE payload.
inline constexpr char kNtfMagic[4] = {'N', 'T', 'F', '1'};

std::string encode_ntf(const torch::Tensor& t);
torch::Tensor decode_ntf(std::string_view bytes);

void write_ntf(const std::filesystem::path& path, const torch::Tensor& t);
torch::Tensor read_ntf(const std::filesystem::path& path);

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

// Directory of NTF files plus a "manifest.tsv" of name<TAB>file<TAB>shape rows.
void write_tensor_dir(const std::filesystem::path& dir, const NamedTensors& tensors);
NamedTensors read_tensor_dir(const std::filesystem::path& dir);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace sdic::io
