#include <doctest.h>

#include <limits>

#include "helpers.hpp"
#include "sdic/dicn.hpp"
#include "sdic/editing.hpp"
#include "sdic/errors.hpp"
#include "sdic/pipeline.hpp"
#include "sdic/trainer.hpp"

using namespace sdic;
using sdic::test::bit_equal;

namespace {

EditDirection unit_direction(int64_t dim, uint64_t seed) {
    auto v = test::seeded_normal({dim}, seed, torch::kFloat64);
    return {v / v.norm(), {}, "random"};
}

}  // namespace

TEST_CASE("affine compensation arithmetic") {
    auto w = torch::tensor({2.0, -1.0}).view({1, 1, 2});
    AffineParams a{torch::tensor({0.5, 3.0}).view({1, 1, 2}), torch::tensor({1.0, -2.0}).view({1, 1, 2})};
    auto out = affine_compensate(w, a);
    CHECK(out[0][0][0].item<double>() == 2.0);
    CHECK(out[0][0][1].item<double>() == -5.0);

    auto x = test::seeded_normal({3, 6, 64}, 1);
    AffineParams id{torch::ones_like(x), torch::zeros_like(x)};
    CHECK(torch::equal(affine_compensate(x, id), x));
    CHECK_THROWS_AS(affine_compensate(x, AffineParams{torch::ones({3, 6, 63}), torch::zeros_like(x)}), ShapeError);
}

TEST_CASE("affine compensation is linear in the code for fixed parameters") {
    auto w = test::seeded_normal({2, 6, 64}, 2, torch::kFloat64);
    auto u = test::seeded_normal({2, 6, 64}, 3, torch::kFloat64);
    AffineParams a{test::seeded_normal({2, 6, 64}, 4, torch::kFloat64), test::seeded_normal({2, 6, 64}, 5, torch::kFloat64)};
    auto lhs = affine_compensate(w + u, a) - affine_compensate(w, a);
    CHECK(torch::allclose(lhs, a.gamma * u, 1e-12, 1e-12));
}

TEST_CASE("latent map compensation in pure form") {
    auto f = test::seeded_normal({2, 64, 16, 16}, 6);
    auto gate = torch::sigmoid(test::seeded_normal({2, 64, 16, 16}, 7));
    CHECK(bit_equal(compensate_with(f, torch::zeros_like(f), gate), f));
    CHECK(compensate_with(torch::ones({1}), torch::full({1}, 2.0), torch::full({1}, 0.5)).item<double>() == 2.0);
    CHECK_THROWS_AS(compensate_with(f, torch::zeros({2, 64, 8, 8}), gate), ShapeError);
}

TEST_CASE("edited map composition") {
    auto s = compose_edited_map(torch::full({1}, 5.0), torch::full({1}, 3.0), torch::full({1}, 2.0));
    CHECK(s.item<double>() == 6.0);
    auto enh = test::seeded_normal({2, 8, 4, 4}, 8, torch::kFloat64);
    auto fr = test::seeded_normal({2, 8, 4, 4}, 9, torch::kFloat64);
    CHECK(bit_equal(compose_edited_map(enh, fr, fr), enh));
    for (uint64_t seed = 0; seed < 10; ++seed) {
        auto fe = test::seeded_normal({2, 8, 4, 4}, 100 + seed, torch::kFloat64);
        auto out = compose_edited_map(enh, fe, fr);
        auto gap = ((out - enh) - (fe - fr)).abs();
        auto scale = torch::maximum(enh.abs(), (fe - fr).abs());
        CHECK((gap <= 4 * std::numeric_limits<double>::epsilon() * scale).all().item<bool>());
    }
}

TEST_CASE("identity-initialised heads give gamma 1, theta 0 and a zero map embedding") {
    ModelConfig m;
    Dicn dicn(m, true);
    auto d = test::seeded_normal({2, 3, 64, 64}, 10);
    auto a = dicn->predict_affine(d);
    CHECK(a.gamma.sizes() == torch::IntArrayRef({2, 6, 64}));
    CHECK(a.theta.sizes() == torch::IntArrayRef({2, 6, 64}));
    CHECK((a.gamma == 1.0).all().item<bool>());
    CHECK((a.theta == 0.0).all().item<bool>());
    auto e = dicn->embed_discrepancy(d);
    CHECK(e.sizes() == torch::IntArrayRef({2, 64, 16, 16}));
    CHECK((e == 0.0).all().item<bool>());
    CHECK(dicn->embed_strides() == std::vector<int64_t>{1, 2, 2, 1});
}

TEST_CASE("dicn shapes with random heads and purity of its operations") {
    ModelConfig m;
    m.identity_init = false;
    for (bool att : {true, false}) {
        CAPTURE(att);
        Dicn dicn(m, att);
        auto d = test::seeded_normal({1, 3, 64, 64}, 11);
        auto f = test::seeded_normal({1, 64, 16, 16}, 12);
        auto d0 = d.clone();
        auto f0 = f.clone();
        auto a = dicn->predict_affine(d);
        auto out = dicn->compensate_latent_map(f, d);
        CHECK(bit_equal(d, d0));
        CHECK(bit_equal(f, f0));
        CHECK(out.sizes() == f.sizes());
        CHECK(dicn->embed_discrepancy(d).size(1) == (att ? 64 : 128));
        CHECK_FALSE(bit_equal(out, f));
        CHECK_FALSE((a.gamma == 1.0).all().item<bool>());
        if (att) {
            auto e = dicn->embed_discrepancy(d);
            auto gate = dicn->gate(f, e);
            CHECK(gate.min().item<double>() > 0.0);
            CHECK(gate.max().item<double>() < 1.0);
            CHECK(bit_equal(out, compensate_with(f, e, gate)));
        } else {
            CHECK_THROWS_AS(dicn->gate(f, f), std::logic_error);
        }
        CHECK_THROWS_AS(dicn->predict_affine(torch::zeros({1, 3, 32, 32})), ShapeError);
    }
}

TEST_CASE("gradients of sum(gamma) + sum(theta) match central differences in 64-bit") {
    auto cfg = test::small_config();
    cfg.model.identity_init = false;
    Dicn dicn(cfg.model, true);
    dicn->to(torch::kFloat64);
    auto d = test::seeded_normal({2, 3, 16, 16}, 13, torch::kFloat64);
    io::NamedTensors params;
    for (const auto& p : dicn->named_parameters()) {
        if (p.key().rfind("gamma_head", 0) == 0 || p.key().rfind("theta_head", 0) == 0) {
            params.emplace_back("dicn." + p.key(), p.value());
        }
    }
    auto report = check_gradients(
        [&] {
            auto a = dicn->predict_affine(d);
            return a.gamma.sum() + a.theta.sum();
        },
        params, GradCheckOptions::for_precision(Precision::kDouble));
    INFO(report.table());
    CHECK(report.passed());
    CHECK(report.groups.size() == 2);
}

TEST_CASE("untrained residual heads reduce inversion to the encoder baseline") {
    auto cfg = test::small_config();
    SdicModels models(cfg.model, Variant::kFull);
    auto images = test::seeded_uniform({3, 3, 16, 16}, 14, -1, 1);
    torch::NoGradGuard guard;
    auto inv = invert(models, images);
    CHECK(torch::equal(inv.image, reconstruct_baseline(models, images)));
    CHECK(torch::equal(inv.artifacts.w_enhanced, inv.artifacts.w));
    CHECK(torch::equal(inv.artifacts.map_enhanced, inv.artifacts.map));
    CHECK(torch::equal(inv.image, inv.artifacts.initial_reconstruction));
}

TEST_CASE("inversion artifacts have the toy shapes") {
    ModelConfig m;
    m.identity_init = false;
    SdicModels models(m, Variant::kFull);
    torch::NoGradGuard guard;
    auto inv = invert(models, test::seeded_uniform({1, 3, 64, 64}, 15, -1, 1));
    const auto& a = inv.artifacts;
    CHECK(inv.image.sizes() == torch::IntArrayRef({1, 3, 64, 64}));
    CHECK(a.w.sizes() == torch::IntArrayRef({1, 6, 64}));
    CHECK(a.w_enhanced.sizes() == a.w.sizes());
    CHECK(a.affine.gamma.sizes() == a.w.sizes());
    CHECK(a.discrepancy.sizes() == torch::IntArrayRef({1, 3, 64, 64}));
    CHECK(a.map.sizes() == torch::IntArrayRef({1, 64, 16, 16}));
    CHECK(a.map_enhanced.sizes() == a.map.sizes());
    CHECK(bit_equal(a.map, models.generator->latent_map(a.w_enhanced, m.injection_layer)));
}

TEST_CASE("a zero edit is the inversion bit for bit") {
    auto cfg = test::small_config();
    cfg.model.identity_init = false;
    for (auto variant : {Variant::kFull, Variant::kNoAttention, Variant::kNoSpatialContext}) {
        CAPTURE(to_string(variant));
        SdicModels models(cfg.model, variant);
        auto images = test::seeded_uniform({2, 3, 16, 16}, 16, -1, 1);
        torch::NoGradGuard guard;
        auto inv = invert(models, images);
        auto dir = unit_direction(cfg.model.style_dim, 17);
        CHECK(bit_equal(edit_from(models, inv, dir, 0.0), inv.image));
        CHECK(bit_equal(edit(models, images, dir, 0.0), inv.image));
        CHECK_FALSE(bit_equal(edit_from(models, inv, dir, 1.0), inv.image));
    }
}

TEST_CASE("edit moves the enhanced code symmetrically") {
    auto w = test::seeded_normal({2, 2, 8}, 18, torch::kFloat64);
    auto dir = unit_direction(8, 19);
    for (double alpha : {0.5, 1.0, 3.0}) {
        auto sum = apply_direction(w, dir, alpha) + apply_direction(w, dir, -alpha);
        CHECK(torch::allclose(sum, 2 * w, 0, 1e-12));
    }
}

TEST_CASE("both edit bases agree when compensation is the identity") {
    auto cfg = test::small_config();
    auto other = cfg.model;
    other.edit_base = EditBase::kInitial;
    SdicModels a(cfg.model, Variant::kFull);
    SdicModels b(other, Variant::kFull);
    auto images = test::seeded_uniform({2, 3, 16, 16}, 20, -1, 1);
    auto dir = unit_direction(cfg.model.style_dim, 21);
    torch::NoGradGuard guard;
    CHECK(torch::equal(edit(a, images, dir, 1.5), edit(b, images, dir, 1.5)));
}

TEST_CASE("non-finite edit strengths are rejected") {
    auto cfg = test::small_config();
    SdicModels models(cfg.model, Variant::kFull);
    auto images = test::seeded_uniform({1, 3, 16, 16}, 22, -1, 1);
    torch::NoGradGuard guard;
    CHECK_THROWS_AS(edit(models, images, unit_direction(8, 23), std::numeric_limits<double>::quiet_NaN()),
                    std::invalid_argument);
}
