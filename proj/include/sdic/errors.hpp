#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace sdic {

/// Tensor or config dimensions do not line up.
class ShapeError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Malformed or inconsistent configuration (unknown key, bad value).
class ConfigError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// Non-finite loss, zero-norm embedding, degenerate statistics.
class NumericalError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Unreadable or malformed file.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

std::string shape_string(c10::IntArrayRef sizes);

// Throws ShapeError naming `what` unless `t` has exactly `expected` sizes.
// A negative entry in `expected` matches any extent.
void expect_shape(const torch::Tensor& t, const std::vector<int64_t>& expected, std::string_view what);

void expect_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what);

}  // namespace sdic
