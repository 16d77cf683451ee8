#include "sdic/errors.hpp"

namespace sdic {

std::string shape_string(c10::IntArrayRef sizes) {
    std::string s;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(sizes[i]);
    }
    return s.empty() ? "scalar" : s;
}

void expect_shape(const torch::Tensor& t, const std::vector<int64_t>& expected, std::string_view what) {
    bool ok = t.defined() && t.dim() == static_cast<int64_t>(expected.size());
    for (std::size_t i = 0; ok && i < expected.size(); ++i) {
        if (expected[i] >= 0 && t.size(static_cast<int64_t>(i)) != expected[i]) ok = false;
    }
    if (!ok) {
        std::string want;
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (i) want += "x";
            want += expected[i] < 0 ? "*" : std::to_string(expected[i]);
        }
        throw ShapeError(std::string(what) + ": expected shape " + want + ", got " +
                         (t.defined() ? shape_string(t.sizes()) : std::string("undefined")));
    }
}

void expect_same_shape(const torch::Tensor& a, const torch::Tensor& b, std::string_view what) {
    if (!a.defined() || !b.defined() || a.sizes() != b.sizes()) {
        throw ShapeError(std::string(what) + ": operand shapes differ (" +
                         (a.defined() ? shape_string(a.sizes()) : "undefined") + " vs " +
                         (b.defined() ? shape_string(b.sizes()) : "undefined") + ")");
    }
}

}  // namespace sdic
