#include "sdic/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

#include "sdic/errors.hpp"
#include "sdic/losses.hpp"
#include "sdic/ranger.hpp"
#include "sdic/toygen.hpp"

namespace sdic {

namespace {

constexpr uint64_t kPretrainStream = 3;
constexpr uint64_t kBatchStream = 4;

std::string checksum_hex(uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t generator_checksum(const ModelConfig& model) {
    ToyGenerator g(model);
    return checksum(*g);
}

io::NamedTensors detached(const io::NamedTensors& tensors) {
    io::NamedTensors out;
    for (const auto& [name, t] : tensors) out.emplace_back(name, t.detach().clone());
    return out;
}

io::NamedTensors select_prefix(const io::NamedTensors& tensors, const std::string& prefix) {
    io::NamedTensors out;
    for (const auto& [name, t] : tensors) {
        if (name.rfind(prefix, 0) == 0) out.emplace_back(name, t);
    }
    return out;
}

void check_finite(const torch::Tensor& loss, const std::string& what, int64_t step) {
    if (!std::isfinite(loss.item<double>())) {
        throw NumericalError(what + ": non-finite loss at step " + std::to_string(step));
    }
}

double warmup_rate(const TrainConfig& t, double base, int64_t step) {
    if (t.warmup_steps <= 0) return base;
    return base * std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(t.warmup_steps));
}

torch::optim::AdamWOptions adamw(double lr, double weight_decay) {
    return torch::optim::AdamWOptions(lr).betas({0.9, 0.999}).eps(1e-8).weight_decay(weight_decay);
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& checkpoint) {
    io::write_tensor_dir(dir, checkpoint.tensors);
    io::write_text(dir / "config.ini", checkpoint.config.to_ini());
    std::ostringstream state;
    state << "stage=" << checkpoint.stage << "\n"
          << "step=" << checkpoint.step << "\n"
          << "generator_checksum=" << checksum_hex(generator_checksum(checkpoint.config.model)) << "\n";
    io::write_text(dir / "state.txt", state.str());
}

Checkpoint load_checkpoint(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IoError("checkpoint " + dir.string() + " is not a directory");
    Checkpoint c;
    c.config = RunConfig::load(dir / "config.ini");
    std::map<std::string, std::string> state;
    std::istringstream in(io::read_text(dir / "state.txt"));
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq != std::string::npos) state[line.substr(0, eq)] = line.substr(eq + 1);
    }
    for (const char* key : {"stage", "step", "generator_checksum"}) {
        if (!state.count(key)) throw IoError(dir.string() + "/state.txt: missing '" + key + "'");
    }
    c.stage = state["stage"];
    if (c.stage != "encoder" && c.stage != "sdic") throw IoError(dir.string() + ": unknown stage '" + c.stage + "'");
    try {
        c.step = std::stoll(state["step"]);
    } catch (const std::exception&) {
        throw IoError(dir.string() + "/state.txt: bad step");
    }
    if (state["generator_checksum"] != checksum_hex(generator_checksum(c.config.model))) {
        throw IoError(dir.string() + ": generator checksum does not match the stored configuration");
    }
    c.tensors = io::read_tensor_dir(dir);
    return c;
}

SdicModels load_models(const Checkpoint& checkpoint) {
    SdicModels models(checkpoint.config.model, checkpoint.config.train.variant);
    models.load_encoder(select_prefix(checkpoint.tensors, "encoder."));
    if (checkpoint.stage == "sdic") {
        auto trainable = select_prefix(checkpoint.tensors, "dipn.");
        auto dicn = select_prefix(checkpoint.tensors, "dicn.");
        trainable.insert(trainable.end(), dicn.begin(), dicn.end());
        models.load_trainable(trainable);
    }
    return models;
}

Checkpoint pretrain_encoder(const RunConfig& config, const TrainObserver& observer,
                            std::vector<std::pair<int64_t, double>>* losses) {
    config.validate();
    const auto& t = config.train;
    ToyGenerator generator(config.model);
    InversionEncoder encoder(config.model);
    const auto frozen = checksum(*generator);
    torch::optim::AdamW opt(encoder->parameters(), adamw(t.pretrain_learning_rate, t.weight_decay));

    if (observer.csv) *observer.csv << "step,l2\n";
    for (int64_t step = 0; step < t.pretrain_steps; ++step) {
        std::vector<torch::Tensor> zs;
        for (int64_t i = 0; i < t.pretrain_batch_size; ++i) {
            const auto index = static_cast<uint64_t>(step * t.pretrain_batch_size + i);
            zs.push_back(sample_z(derive_seed(t.seed, kPretrainStream, index), config.model.style_dim));
        }
        torch::Tensor images;
        {
            torch::NoGradGuard guard;
            images = generator->synthesize(generator->map_latent(torch::stack(zs))).image;
        }
        auto loss = (generator->synthesize(encoder->forward(images)).image - images).square().mean();
        check_finite(loss, "pretrain_encoder", step);
        opt.zero_grad();
        loss.backward();
        opt.step();
        if (step % t.log_every == 0 || step + 1 == t.pretrain_steps) {
            const double v = loss.item<double>();
            if (losses) losses->emplace_back(step, v);
            if (observer.csv) *observer.csv << step << "," << v << "\n";
            if (observer.progress) *observer.progress << "pretrain step " << step << " l2 " << v << std::endl;
        }
    }
    if (checksum(*generator) != frozen) throw std::logic_error("pretrain_encoder: generator parameters changed");
    freeze(*encoder);

    Checkpoint c;
    c.config = config;
    c.stage = "encoder";
    c.step = t.pretrain_steps;
    for (const auto& p : encoder->named_parameters()) c.tensors.emplace_back("encoder." + p.key(), p.value().detach().clone());
    return c;
}

Checkpoint train_sdic(const RunConfig& config, const Checkpoint& encoder, const TrainObserver& observer) {
    config.validate();
    const auto& t = config.train;
    SdicModels models(config.model, t.variant);
    models.load_encoder(select_prefix(encoder.tensors, "encoder."));
    FeatureNet features(config.model);
    const auto generator_sum = checksum(*models.generator);
    const auto encoder_sum = checksum(*models.encoder);
    const auto feature_sum = checksum(*features);

    auto data = make_dataset(models.generator, config.data, Split::kTrain, true);
    auto codes = batched(data.images, 64, [&](const torch::Tensor& x) { return models.encoder->forward(x); });

    RangerOptions ro;
    ro.lr = t.learning_rate;
    ro.weight_decay = t.weight_decay;
    Ranger opt(models.trainable_parameters(), ro);
    std::mt19937_64 rng(derive_seed(t.seed, kBatchStream, 0));
    std::uniform_int_distribution<int64_t> pick(0, data.images.size(0) - 1);

    if (observer.csv) *observer.csv << "step," << LossBreakdown::csv_header() << "\n";
    for (int64_t step = 0; step < t.steps; ++step) {
        std::vector<int64_t> idx(static_cast<std::size_t>(t.batch_size));
        for (auto& i : idx) i = pick(rng);
        auto index = torch::tensor(idx);
        auto images = data.images.index_select(0, index);
        auto w = codes.index_select(0, index);

        auto inv = invert_with_code(models, images, w);
        const auto& a = inv.artifacts;
        auto terms = joint_loss(a.w, a.w_enhanced, a.map, a.map_enhanced, images, inv.image, features, config.loss);
        check_finite(terms.joint, "train_sdic", step);
        opt.set_lr(warmup_rate(t, t.learning_rate, step));
        opt.zero_grad();
        terms.joint.backward();
        opt.step();

        if (step % t.log_every == 0 || step + 1 == t.steps) {
            const auto v = terms.values();
            if (observer.csv) *observer.csv << step << "," << v.csv_row() << "\n";
            if (observer.progress) {
                *observer.progress << "train[" << to_string(t.variant) << " L" << config.model.injection_layer << "] step "
                                   << step << " joint " << v.joint << " l2 " << v.l2 << std::endl;
            }
        }
    }
    if (checksum(*models.generator) != generator_sum || checksum(*models.encoder) != encoder_sum ||
        checksum(*features) != feature_sum) {
        throw std::logic_error("train_sdic: a frozen parameter changed");
    }

    Checkpoint c;
    c.config = config;
    c.stage = "sdic";
    c.step = t.steps;
    c.tensors = detached(models.named_encoder());
    auto trained = detached(models.named_trainable());
    c.tensors.insert(c.tensors.end(), trained.begin(), trained.end());
    return c;
}

GradCheckOptions GradCheckOptions::for_precision(Precision p) {
    GradCheckOptions o;
    o.precision = p;
    if (p == Precision::kFloat) {
        o.tolerance = 1e-2;
        o.step = 1e-6;
    }
    return o;
}

bool GradCheckReport::passed() const {
    return std::all_of(groups.begin(), groups.end(), [](const GroupCheck& g) { return g.passed; });
}

std::string GradCheckReport::table() const {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-20s %6s %12s %14s %14s  %s\n", "group", "coords", "worst_rel", "analytic",
                  "numeric", "status");
    out << buf;
    for (const auto& g : groups) {
        std::snprintf(buf, sizeof(buf), "%-20s %6lld %12.3e %14.6e %14.6e  %s\n", g.group.c_str(),
                      static_cast<long long>(g.coordinates), g.worst_error, g.analytic, g.numeric,
                      g.passed ? "ok" : ("FAIL at " + g.worst_parameter).c_str());
        out << buf;
    }
    return out.str();
}

std::string parameter_group(const std::string& name) {
    const auto first = name.find('.');
    if (first == std::string::npos) return name;
    const auto second = name.find('.', first + 1);
    return second == std::string::npos ? name : name.substr(0, second);
}

namespace {

torch::Tensor element(torch::Tensor t, int64_t flat) {
    std::vector<int64_t> coord(static_cast<std::size_t>(t.dim()));
    for (int64_t d = t.dim() - 1; d >= 0; --d) {
        coord[static_cast<std::size_t>(d)] = flat % t.size(d);
        flat /= t.size(d);
    }
    for (auto c : coord) t = t.select(0, c);
    return t;
}

}  // namespace

GradCheckReport check_gradients(const std::function<torch::Tensor()>& objective, const io::NamedTensors& params,
                                const GradCheckOptions& options) {
    return check_gradients(objective, params, objective, params, options);
}

GradCheckReport check_gradients(const std::function<torch::Tensor()>& objective, const io::NamedTensors& params,
                                const std::function<torch::Tensor()>& reference,
                                const io::NamedTensors& reference_params, const GradCheckOptions& options) {
    if (reference_params.size() != params.size()) throw ShapeError("check_gradients: reference parameter count differs");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].first != reference_params[i].first) throw ShapeError("check_gradients: reference names differ");
        expect_same_shape(params[i].second, reference_params[i].second, params[i].first);
    }
    std::vector<torch::Tensor> tensors;
    for (const auto& [name, p] : params) tensors.push_back(p);
    auto loss = objective();
    auto grads = torch::autograd::grad({loss}, tensors, {}, false, false, true);

    std::map<std::string, std::vector<std::size_t>> groups;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto g = parameter_group(params[i].first);
        if (!groups.count(g)) order.push_back(g);
        groups[g].push_back(i);
    }

    GradCheckReport report;
    report.tolerance = options.tolerance;
    std::mt19937_64 rng(options.seed);
    torch::NoGradGuard guard;
    for (const auto& name : order) {
        const auto& members = groups[name];
        int64_t total = 0;
        for (auto i : members) total += tensors[i].numel();
        std::set<int64_t> picks;
        if (total <= options.coordinates) {
            for (int64_t k = 0; k < total; ++k) picks.insert(k);
        } else {
            std::uniform_int_distribution<int64_t> dist(0, total - 1);
            while (static_cast<int64_t>(picks.size()) < options.coordinates) picks.insert(dist(rng));
        }

        GroupCheck check;
        check.group = name;
        for (auto pick : picks) {
            std::size_t member = 0;
            int64_t offset = pick;
            while (offset >= tensors[members[member]].numel()) offset -= tensors[members[member++]].numel();
            const auto i = members[member];
            auto x = element(reference_params[i].second, offset);
            double analytic = grads[i].defined() ? element(grads[i], offset).item<double>() : 0.0;
            if (options.corrupt) options.corrupt(params[i].first, offset, analytic);

            const double orig = x.item<double>();
            x.fill_(orig + options.step);
            const double up = x.item<double>();
            const double f_up = reference().item<double>();
            x.fill_(orig - options.step);
            const double down = x.item<double>();
            const double f_down = reference().item<double>();
            x.fill_(orig);
            const double numeric = (f_up - f_down) / (up - down);

            const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
            ++check.coordinates;
            if (rel >= check.worst_error) {
                check.worst_error = rel;
                check.analytic = analytic;
                check.numeric = numeric;
                check.worst_parameter = params[i].first + "[" + std::to_string(offset) + "]";
            }
        }
        check.passed = check.worst_error <= options.tolerance;
        report.groups.push_back(check);
    }
    return report;
}

GradCheckReport grad_check(const GradCheckOptions& options, Variant variant) {
    auto config = reduced_config();
    config.model.identity_init = false;
    config.train.variant = variant;
    const auto dtype = options.precision == Precision::kDouble ? torch::kFloat64 : torch::kFloat32;

    auto objective_for = [&](SdicModels& models, FeatureNet& features, const torch::Tensor& images) {
        return [&models, &features, images, &config]() {
            auto inv = invert(models, images);
            const auto& a = inv.artifacts;
            return joint_loss(a.w, a.w_enhanced, a.map, a.map_enhanced, images, inv.image, features, config.loss).joint;
        };
    };

    SdicModels models(config.model, variant);
    FeatureNet features(config.model);
    auto images = make_dataset(models.generator, config.data, Split::kTrain, true, 2).images.to(dtype);
    models.to(dtype);
    features->to(dtype);
    auto objective = objective_for(models, features, images);
    if (dtype == torch::kFloat64) return check_gradients(objective, models.named_trainable(), options);

    SdicModels reference(config.model, variant);
    FeatureNet reference_features(config.model);
    reference.to(torch::kFloat64);
    reference_features->to(torch::kFloat64);
    {
        torch::NoGradGuard guard;
        auto src = models.named_trainable();
        auto dst = reference.named_trainable();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i].second.copy_(src[i].second);
    }
    return check_gradients(objective, models.named_trainable(), objective_for(reference, reference_features, images.to(torch::kFloat64)),
                           reference.named_trainable(), options);
}

}  // namespace sdic
