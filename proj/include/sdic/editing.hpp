#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>

namespace sdic {

struct EditDirection {
    torch::Tensor vector;        // d, float64, unit norm
    std::vector<bool> row_mask;  // empty = every row
    std::string label;

    bool applies_to(int64_t row) const;
    // Checks length, unit norm (1e-6) and mask size against a K x d code.
    void validate(int64_t rows, int64_t dim) const;
};

struct PrincipalDirection {
    EditDirection direction;
    double variance = 0;        // eigenvalue of the sample covariance
    double variance_ratio = 0;  // eigenvalue / trace
};

// Top-k eigenvectors of the sample covariance of an N x d corpus, in
// descending eigenvalue order, signed so the largest-magnitude entry is positive.
std::vector<PrincipalDirection> pca_directions(const torch::Tensor& corpus, int64_t k);

// Unit-normalised mean(positive) - mean(negative).
EditDirection hyperplane_direction(const torch::Tensor& corpus, const std::vector<bool>& labels);

// w (N x K x d) with alpha * direction added to every masked row.
torch::Tensor apply_direction(const torch::Tensor& w, const EditDirection& direction, double alpha);

// NTF vector at `path` plus `path` + ".txt" holding "label<TAB>rows".
void save_direction(const std::filesystem::path& path, const EditDirection& direction);
EditDirection load_direction(const std::filesystem::path& path);

}  // namespace sdic
