#include "sdic/pipeline.hpp"

#include <map>

#include "sdic/errors.hpp"

namespace sdic {

namespace {

io::NamedTensors prefixed(const torch::nn::Module& module, const std::string& prefix) {
    io::NamedTensors out;
    for (const auto& p : module.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
    return out;
}

void load_into(const io::NamedTensors& targets, const io::NamedTensors& values, const std::string& what) {
    std::map<std::string, torch::Tensor> by_name(values.begin(), values.end());
    if (by_name.size() != targets.size()) {
        throw IoError(what + ": expected " + std::to_string(targets.size()) + " tensors, found " +
                      std::to_string(by_name.size()));
    }
    torch::NoGradGuard guard;
    for (const auto& [name, param] : targets) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw IoError(what + ": missing tensor '" + name + "'");
        if (it->second.sizes() != param.sizes()) {
            throw IoError(what + ": tensor '" + name + "' has shape " + shape_string(it->second.sizes()) + ", expected " +
                          shape_string(param.sizes()));
        }
        auto p = param;
        p.copy_(it->second);
    }
}

}  // namespace

SdicModels::SdicModels(const ModelConfig& cfg, Variant v)
    : config(cfg),
      variant(v),
      generator(cfg),
      encoder(cfg),
      dipn(cfg, v != Variant::kNoSpatialContext),
      dicn(cfg, v == Variant::kFull) {
    freeze(*encoder);
}

std::vector<torch::Tensor> SdicModels::trainable_parameters() const {
    auto out = dipn->parameters();
    auto more = dicn->parameters();
    out.insert(out.end(), more.begin(), more.end());
    return out;
}

io::NamedTensors SdicModels::named_trainable() const {
    auto out = prefixed(*dipn, "dipn.");
    auto more = prefixed(*dicn, "dicn.");
    out.insert(out.end(), more.begin(), more.end());
    return out;
}

io::NamedTensors SdicModels::named_encoder() const { return prefixed(*encoder, "encoder."); }

void SdicModels::load_trainable(const io::NamedTensors& tensors) { load_into(named_trainable(), tensors, "sdic weights"); }

void SdicModels::load_encoder(const io::NamedTensors& tensors) { load_into(named_encoder(), tensors, "encoder weights"); }

void SdicModels::to(torch::Dtype dtype) {
    generator->to(dtype);
    encoder->to(dtype);
    dipn->to(dtype);
    dicn->to(dtype);
}

Inversion invert_with_code(SdicModels& models, const torch::Tensor& images, const torch::Tensor& w) {
    const auto layer = models.config.injection_layer;
    Inversion out;
    auto& a = out.artifacts;
    a.w = w;
    a.initial_reconstruction = models.generator->synthesize(w).image;
    a.discrepancy = models.dipn->forward(images, a.initial_reconstruction);
    a.affine = models.dicn->predict_affine(a.discrepancy);
    a.w_enhanced = affine_compensate(w, a.affine);
    a.map = models.generator->latent_map(a.w_enhanced, layer);
    a.map_enhanced = models.dicn->compensate_latent_map(a.map, a.discrepancy);
    out.image = models.generator->render_from(a.map_enhanced, a.w_enhanced, layer);
    return out;
}

Inversion invert(SdicModels& models, const torch::Tensor& images) {
    return invert_with_code(models, images, models.encoder->forward(images));
}

torch::Tensor reconstruct_baseline(SdicModels& models, const torch::Tensor& images) {
    return models.generator->synthesize(models.encoder->forward(images)).image;
}

torch::Tensor edit_from(SdicModels& models, const Inversion& inversion, const EditDirection& direction, double alpha) {
    const auto layer = models.config.injection_layer;
    const auto& a = inversion.artifacts;
    auto w_edit = apply_direction(a.w_enhanced, direction, alpha);
    torch::Tensor base_map;
    torch::Tensor edited_map;
    torch::Tensor enhanced_base;
    if (models.config.edit_base == EditBase::kEnhanced) {
        base_map = a.map;
        enhanced_base = a.map_enhanced;
        edited_map = models.generator->latent_map(w_edit, layer);
    } else {
        base_map = models.generator->latent_map(a.w, layer);
        enhanced_base = models.dicn->compensate_latent_map(base_map, a.discrepancy);
        edited_map = models.generator->latent_map(apply_direction(a.w, direction, alpha), layer);
    }
    auto map_edit = compose_edited_map(enhanced_base, edited_map, base_map);
    return models.generator->render_from(map_edit, w_edit, layer);
}

torch::Tensor edit(SdicModels& models, const torch::Tensor& images, const EditDirection& direction, double alpha) {
    return edit_from(models, invert(models, images), direction, alpha);
}

torch::Tensor batched(const torch::Tensor& images, int64_t chunk,
                      const std::function<torch::Tensor(const torch::Tensor&)>& fn) {
    torch::NoGradGuard guard;
    std::vector<torch::Tensor> parts;
    for (int64_t i = 0; i < images.size(0); i += chunk) {
        parts.push_back(fn(images.slice(0, i, std::min(images.size(0), i + chunk))));
    }
    return torch::cat(parts, 0);
}

}  // namespace sdic
