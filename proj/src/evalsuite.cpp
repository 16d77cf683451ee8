#include "sdic/evalsuite.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sdic/errors.hpp"
#include "sdic/toygen.hpp"

namespace sdic {

namespace {

constexpr int64_t kWindow = 8;
constexpr int64_t kWindowStride = 4;
constexpr uint64_t kCorpusStream = 5;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

torch::Tensor as_f64(const torch::Tensor& t) { return t.detach().to(torch::kCPU, torch::kFloat64); }

// N x C x H x W -> N x C x ny x nx windows of 8 x 8 pixels, reduced by `reduce`.
torch::Tensor window_means(const torch::Tensor& x, const torch::Tensor& rows, const torch::Tensor& cols) {
    const auto n = x.size(0);
    const auto c = x.size(1);
    const auto ny = rows.numel() / kWindow;
    const auto nx = cols.numel() / kWindow;
    auto w = x.index_select(2, rows).view({n, c, ny, kWindow, x.size(3)});
    w = w.index_select(4, cols).view({n, c, ny, kWindow, nx, kWindow});
    return w.mean({3, 5});
}

torch::Tensor window_index(int64_t n) {
    std::vector<int64_t> idx;
    for (auto s : ssim_window_starts(n)) {
        for (int64_t k = 0; k < kWindow; ++k) idx.push_back(s + k);
    }
    return torch::tensor(idx);
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b) {
    expect_shape(a, {3, -1, -1}, "psnr image");
    expect_same_shape(a, b, "psnr");
    const double mse = (as_f64(a) - as_f64(b)).square().mean().item<double>();
    if (mse < 1e-12) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(kPixelRange * kPixelRange / mse));
}

std::vector<int64_t> ssim_window_starts(int64_t n) {
    if (n < kWindow) throw ShapeError("ssim: image side " + std::to_string(n) + " smaller than the 8x8 window");
    std::vector<int64_t> out;
    for (int64_t s = 0; s + kWindow <= n; s += kWindowStride) out.push_back(s);
    if (out.back() != n - kWindow) out.push_back(n - kWindow);
    return out;
}

double ssim(const torch::Tensor& a, const torch::Tensor& b) {
    expect_shape(a, {3, -1, -1}, "ssim image");
    expect_same_shape(a, b, "ssim");
    const double c1 = std::pow(0.01 * kPixelRange, 2);
    const double c2 = std::pow(0.03 * kPixelRange, 2);
    auto x = as_f64(a).unsqueeze(0);
    auto y = as_f64(b).unsqueeze(0);
    const auto rows = window_index(x.size(2));
    const auto cols = window_index(x.size(3));
    auto mx = window_means(x, rows, cols);
    auto my = window_means(y, rows, cols);
    auto vx = window_means(x * x, rows, cols) - mx * mx;
    auto vy = window_means(y * y, rows, cols) - my * my;
    auto cxy = window_means(x * y, rows, cols) - mx * my;
    auto index = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
    return index.mean().item<double>();
}

std::string MetricRow::csv_header() { return "method,id_cosine,ssim,psnr_db,lpips_proxy,l2,wall_time_s"; }

std::string MetricRow::csv_row() const {
    return method + "," + fmt(id_cosine) + "," + fmt(ssim) + "," + fmt(psnr_db) + "," + fmt(lpips_proxy) + "," + fmt(l2) +
           "," + fmt(wall_time_s);
}

std::string EvalReport::csv() const {
    return MetricRow::csv_header() + "\n" + baseline.csv_row() + "\n" + sdic.csv_row() + "\n";
}

MetricRow score(const std::string& method, const torch::Tensor& images, const torch::Tensor& reconstructions,
                FeatureNet& net) {
    expect_same_shape(images, reconstructions, "score");
    torch::NoGradGuard guard;
    MetricRow row;
    row.method = method;
    const auto n = images.size(0);
    if (n == 0) throw ShapeError("score: empty image set");
    for (int64_t i = 0; i < n; ++i) {
        const auto a = images[i];
        const auto b = reconstructions[i];
        row.ssim += ssim(a, b);
        row.psnr_db += psnr(a, b);
        row.l2 += (as_f64(a) - as_f64(b)).square().mean().item<double>();
    }
    for (int64_t i = 0; i < n; i += 32) {
        auto a = images.slice(0, i, std::min(n, i + 32));
        auto b = reconstructions.slice(0, i, std::min(n, i + 32));
        auto fa = net->extract(a);
        auto fb = net->extract(b);
        const auto k = static_cast<double>(a.size(0));
        row.lpips_proxy += k * perceptual_distance(fa, fb).item<double>();
        row.id_cosine += embedding_cosine(fa.embedding, fb.embedding).sum().item<double>();
    }
    const auto count = static_cast<double>(n);
    row.ssim /= count;
    row.psnr_db /= count;
    row.l2 /= count;
    row.lpips_proxy /= count;
    row.id_cosine /= count;
    return row;
}

EvalReport evaluate(SdicModels& models, FeatureNet& net, const torch::Tensor& images, int64_t chunk) {
    const auto n = static_cast<double>(images.size(0));
    auto start = Clock::now();
    auto baseline = batched(images, chunk, [&](const torch::Tensor& x) { return reconstruct_baseline(models, x); });
    const double baseline_time = seconds_since(start) / n;
    start = Clock::now();
    auto sdic = batched(images, chunk, [&](const torch::Tensor& x) { return invert(models, x).image; });
    const double sdic_time = seconds_since(start) / n;

    EvalReport report;
    report.baseline = score("baseline", images, baseline, net);
    report.baseline.wall_time_s = baseline_time;
    report.sdic = score("sdic", images, sdic, net);
    report.sdic.wall_time_s = sdic_time;
    return report;
}

std::string AblationReport::csv() const {
    std::string out = "group,name,variant,layer," + MetricRow::csv_header().substr(std::string("method,").size()) + "\n";
    for (const auto& e : entries) {
        const auto row = e.metrics.csv_row();
        out += e.group + "," + e.name + "," + to_string(e.variant) + "," + std::to_string(e.layer) + "," +
               row.substr(row.find(',') + 1) + "\n";
    }
    return out;
}

bool variant_order_holds(double full, double no_att, double no_sc) {
    return full <= (1.0 + kVariantTieSlack) * no_att && no_att <= (1.0 + kVariantTieSlack) * no_sc;
}

bool layer_order_holds(const std::vector<double>& l2_by_layer) {
    for (std::size_t i = 1; i < l2_by_layer.size(); ++i) {
        if (l2_by_layer[i] > l2_by_layer[i - 1]) return false;
    }
    return true;
}

Checkpoint cached_training(const RunConfig& config, const Checkpoint& encoder, const std::filesystem::path& dir,
                           const TrainObserver& observer) {
    if (std::filesystem::exists(dir / "state.txt")) {
        auto c = load_checkpoint(dir);
        if (c.stage == "sdic" && c.config.to_ini() == config.to_ini()) return c;
    }
    auto c = train_sdic(config, encoder, observer);
    save_checkpoint(dir, c);
    return c;
}

AblationReport ablation_suite(const RunConfig& base, const Checkpoint& encoder, const std::filesystem::path& cache_dir,
                              const TrainObserver& observer) {
    AblationReport report;
    torch::Tensor heldout;
    {
        ToyGenerator generator(base.model);
        heldout = make_dataset(generator, base.data, Split::kHeldout, true).images;
    }
    FeatureNet net(base.model);

    auto run = [&](const std::string& group, Variant variant, int64_t layer) {
        auto config = base;
        config.train.variant = variant;
        config.model.injection_layer = layer;
        const auto name = to_string(variant) + "-L" + std::to_string(layer);
        auto ckpt = cached_training(config, encoder, cache_dir / name, observer);
        auto models = load_models(ckpt);
        AblationEntry e;
        e.group = group;
        e.name = name;
        e.variant = variant;
        e.layer = layer;
        e.metrics = evaluate(models, net, heldout).sdic;
        e.metrics.method = name;
        if (observer.progress) *observer.progress << "ablation " << name << " held-out l2 " << e.metrics.l2 << std::endl;
        report.entries.push_back(e);
        return e.metrics.l2;
    };

    const auto layer = base.model.injection_layer;
    const double full = run("variant", Variant::kFull, layer);
    const double no_att = run("variant", Variant::kNoAttention, layer);
    const double no_sc = run("variant", Variant::kNoSpatialContext, layer);
    report.variant_order_ok = variant_order_holds(full, no_att, no_sc);

    std::vector<double> by_layer;
    for (int64_t l = 1; l <= 3; ++l) by_layer.push_back(l == layer ? full : run("layer", Variant::kFull, l));
    report.layer_order_ok = layer_order_holds(by_layer);
    return report;
}

torch::Tensor FactorProbe::predict(const torch::Tensor& codes) const {
    expect_shape(codes, {-1, -1, weights.numel()}, "factor probe codes");
    return as_f64(codes).mean(1).matmul(weights) + bias;
}

FactorProbe fit_factor_probe(SdicModels& models, const Dataset& clean, int64_t factor) {
    if (factor < 0 || factor >= clean.z.size(1)) throw std::invalid_argument("fit_factor_probe: factor out of range");
    auto codes = batched(clean.images, 64, [&](const torch::Tensor& x) { return models.encoder->forward(x); });
    auto x = as_f64(codes).mean(1);
    auto design = torch::cat({x, torch::ones({x.size(0), 1}, x.options())}, 1);
    auto target = as_f64(clean.z).select(1, factor).unsqueeze(1);
    auto solution = std::get<0>(torch::linalg_lstsq(design, target)).squeeze(1);
    FactorProbe probe;
    probe.weights = solution.slice(0, 0, x.size(1)).clone();
    probe.bias = solution[x.size(1)].item<double>();
    return probe;
}

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
        i = j + 1;
    }
    return r;
}

}  // namespace

double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("spearman: need two equal-length series");
    const auto rx = ranks(x);
    const auto ry = ranks(y);
    const double n = static_cast<double>(x.size());
    const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

EditSweep edit_response_sweep(SdicModels& models, const torch::Tensor& images, const EditDirection& direction,
                              const std::vector<double>& alphas, const FactorProbe& probe, int64_t chunk) {
    torch::NoGradGuard guard;
    EditSweep sweep;
    sweep.alphas = alphas;
    const auto n = images.size(0);
    std::vector<torch::Tensor> per_alpha(alphas.size());
    for (int64_t i = 0; i < n; i += chunk) {
        auto batch = images.slice(0, i, std::min(n, i + chunk));
        auto inv = invert(models, batch);
        for (std::size_t k = 0; k < alphas.size(); ++k) {
            auto edited = edit_from(models, inv, direction, alphas[k]);
            auto r = probe.predict(models.encoder->forward(edited));
            per_alpha[k] = per_alpha[k].defined() ? torch::cat({per_alpha[k], r}) : r;
        }
    }
    for (int64_t i = 0; i < n; ++i) {
        std::vector<double> r;
        for (const auto& t : per_alpha) r.push_back(t[i].item<double>());
        sweep.correlations.push_back(spearman(alphas, r));
        sweep.responses.push_back(std::move(r));
    }
    sweep.mean_correlation =
        std::accumulate(sweep.correlations.begin(), sweep.correlations.end(), 0.0) / static_cast<double>(n);
    return sweep;
}

LabelledCorpus factor_corpus(SdicModels& models, const DataConfig& data, int64_t count, int64_t factor) {
    torch::NoGradGuard guard;
    const auto d = models.config.style_dim;
    if (factor < 0 || factor >= d) throw std::invalid_argument("factor_corpus: factor out of range");
    std::vector<torch::Tensor> zs;
    LabelledCorpus out;
    for (int64_t i = 0; i < count; ++i) {
        auto z = sample_z(derive_seed(data.seed, kCorpusStream, static_cast<uint64_t>(i)), d);
        out.labels.push_back(z[factor].item<double>() > 0);
        zs.push_back(z);
    }
    out.codes = models.generator->map_latent(torch::stack(zs)).select(1, 0).to(torch::kFloat64);
    return out;
}

}  // namespace sdic
