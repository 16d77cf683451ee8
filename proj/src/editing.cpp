#include "sdic/editing.hpp"

#include <cmath>
#include <sstream>

#include "sdic/errors.hpp"
#include "sdic/tensor_io.hpp"

namespace sdic {

bool EditDirection::applies_to(int64_t row) const {
    return row_mask.empty() || row_mask.at(static_cast<std::size_t>(row));
}

void EditDirection::validate(int64_t rows, int64_t dim) const {
    expect_shape(vector, {dim}, "edit direction");
    if (!row_mask.empty() && static_cast<int64_t>(row_mask.size()) != rows) {
        throw ShapeError("edit direction row mask has " + std::to_string(row_mask.size()) + " entries, code has " +
                         std::to_string(rows) + " rows");
    }
    const double n = vector.to(torch::kFloat64).norm().item<double>();
    if (std::abs(n - 1.0) > 1e-6) throw NumericalError("edit direction is not unit norm");
}

namespace {

torch::Tensor as_corpus(const torch::Tensor& corpus) {
    expect_shape(corpus, {-1, -1}, "code corpus");
    auto x = corpus.detach().to(torch::kCPU, torch::kFloat64);
    if (!torch::isfinite(x).all().item<bool>()) throw NumericalError("code corpus contains non-finite values");
    return x;
}

}  // namespace

std::vector<PrincipalDirection> pca_directions(const torch::Tensor& corpus, int64_t k) {
    auto x = as_corpus(corpus);
    const auto n = x.size(0);
    const auto d = x.size(1);
    if (k < 1 || k > d) throw std::invalid_argument("pca_directions: k must lie in [1, " + std::to_string(d) + "]");
    if (n < 2) throw std::invalid_argument("pca_directions: need at least 2 samples");

    auto centred = x - x.mean(0, true);
    auto cov = centred.t().matmul(centred) / static_cast<double>(n - 1);
    cov = 0.5 * (cov + cov.t());
    auto [evals, evecs] = torch::linalg_eigh(cov);
    const double total = evals.clamp_min(0).sum().item<double>();
    if (total <= 1e-12) throw NumericalError("pca_directions: corpus has zero variance");

    std::vector<PrincipalDirection> out;
    for (int64_t i = 0; i < k; ++i) {
        const auto col = d - 1 - i;  // eigh sorts ascending
        auto v = evecs.select(1, col).clone();
        if (v[v.abs().argmax()].item<double>() < 0) v = -v;
        PrincipalDirection p;
        p.direction.vector = v;
        p.direction.label = "pca" + std::to_string(i);
        p.variance = std::max(0.0, evals[col].item<double>());
        p.variance_ratio = p.variance / total;
        out.push_back(std::move(p));
    }
    return out;
}

EditDirection hyperplane_direction(const torch::Tensor& corpus, const std::vector<bool>& labels) {
    auto x = as_corpus(corpus);
    if (static_cast<int64_t>(labels.size()) != x.size(0)) throw ShapeError("hyperplane_direction: one label per row");
    std::vector<int64_t> pos;
    std::vector<int64_t> neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] ? pos : neg).push_back(static_cast<int64_t>(i));
    if (pos.empty() || neg.empty()) throw std::invalid_argument("hyperplane_direction: both classes must be non-empty");
    auto diff = x.index_select(0, torch::tensor(pos)).mean(0) - x.index_select(0, torch::tensor(neg)).mean(0);
    const double n = diff.norm().item<double>();
    if (n <= 1e-12) throw NumericalError("hyperplane_direction: class means coincide");
    return {diff / n, {}, "hyperplane"};
}

torch::Tensor apply_direction(const torch::Tensor& w, const EditDirection& direction, double alpha) {
    expect_shape(w, {-1, -1, direction.vector.numel()}, "apply_direction code");
    if (!std::isfinite(alpha)) throw std::invalid_argument("apply_direction: alpha must be finite");
    direction.validate(w.size(1), w.size(2));
    auto out = w.clone();
    if (alpha == 0.0) return out;
    auto step = (direction.vector.to(w.options().dtype(torch::kFloat64)) * alpha).to(w.scalar_type());
    for (int64_t r = 0; r < w.size(1); ++r) {
        if (direction.applies_to(r)) out.select(1, r).add_(step);
    }
    return out;
}

void save_direction(const std::filesystem::path& path, const EditDirection& direction) {
    io::write_ntf(path, direction.vector.to(torch::kFloat64));
    std::string rows = "all";
    if (!direction.row_mask.empty()) {
        rows.clear();
        for (std::size_t r = 0; r < direction.row_mask.size(); ++r) {
            if (!direction.row_mask[r]) continue;
            if (!rows.empty()) rows += ",";
            rows += std::to_string(r);
        }
        rows = std::to_string(direction.row_mask.size()) + ":" + rows;
    }
    io::write_text(path.string() + ".txt", direction.label + "\t" + rows + "\n");
}

EditDirection load_direction(const std::filesystem::path& path) {
    EditDirection dir;
    dir.vector = io::read_ntf(path).to(torch::kFloat64);
    if (dir.vector.dim() != 1) throw IoError(path.string() + ": direction must be a vector");
    std::string text = io::read_text(path.string() + ".txt");
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    const auto tab = text.find('\t');
    if (tab == std::string::npos) throw IoError(path.string() + ".txt: expected label<TAB>rows");
    dir.label = text.substr(0, tab);
    const std::string rows = text.substr(tab + 1);
    if (rows != "all") {
        const auto colon = rows.find(':');
        if (colon == std::string::npos) throw IoError(path.string() + ".txt: bad row list '" + rows + "'");
        try {
            dir.row_mask.assign(static_cast<std::size_t>(std::stoll(rows.substr(0, colon))), false);
            std::stringstream ss(rows.substr(colon + 1));
            std::string item;
            while (std::getline(ss, item, ',')) dir.row_mask.at(static_cast<std::size_t>(std::stoll(item))) = true;
        } catch (const std::exception&) {
            throw IoError(path.string() + ".txt: bad row list '" + rows + "'");
        }
    }
    if (std::abs(dir.vector.norm().item<double>() - 1.0) > 1e-6) throw IoError(path.string() + ": direction not unit norm");
    return dir;
}

}  // namespace sdic
