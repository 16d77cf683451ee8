#include <doctest.h>

#include <cmath>
#include <map>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sdic/errors.hpp"
#include "sdic/losses.hpp"

using namespace sdic;
using namespace sdic::oracle;

TEST_CASE("perceptual proxy matches a straight-line re-computation on an 8x8 pair") {
    ModelConfig m;
    FeatureNet net(m);
    net->to(torch::kFloat64);
    for (uint64_t seed : {1u, 2u, 3u}) {
        CAPTURE(seed);
        auto a = test::seeded_uniform({3, 8, 8}, seed, -1, 1, torch::kFloat64);
        auto b = test::seeded_uniform({3, 8, 8}, seed + 100, -1, 1, torch::kFloat64);
        const double got = perceptual_distance(a.unsqueeze(0), b.unsqueeze(0), net).item<double>();
        const double want = reference_perceptual(from_tensor(a), from_tensor(b), net);
        CHECK(std::abs(got - want) <= 1e-9);
        CHECK(got > 0);
    }
}

TEST_CASE("perceptual proxy is zero on equal inputs and symmetric") {
    ModelConfig m;
    FeatureNet net(m);
    auto a = test::seeded_uniform({2, 3, 16, 16}, 4, -1, 1);
    auto b = test::seeded_uniform({2, 3, 16, 16}, 5, -1, 1);
    CHECK(perceptual_distance(a, a, net).item<double>() == 0.0);
    CHECK(perceptual_distance(a, b, net).item<double>() == perceptual_distance(b, a, net).item<double>());
    CHECK_THROWS_AS(perceptual_distance(a, b.slice(0, 0, 1), net), ShapeError);
}

TEST_CASE("feature net is frozen and seed-deterministic") {
    ModelConfig m;
    FeatureNet a(m);
    FeatureNet b(m);
    for (const auto& p : a->parameters()) CHECK_FALSE(p.requires_grad());
    auto x = test::seeded_uniform({1, 3, 16, 16}, 6, -1, 1);
    CHECK(test::bit_equal(a->forward(x), b->forward(x)));
    auto f = a->extract(x);
    CHECK(f.taps.size() == 3);
    CHECK(f.embedding.sizes() == torch::IntArrayRef({1, m.feature_channels.back()}));
}

TEST_CASE("cosine stage of the identity loss") {
    auto e = torch::tensor({1.0, 2.0, -2.0}, torch::kFloat64).view({1, 3});
    CHECK(cosine_distance(e, -e).item<double>() == doctest::Approx(2.0).epsilon(1e-15));
    auto x = torch::tensor({1.0, 0.0, 0.0, 0.0, 3.0, 0.0}, torch::kFloat64).view({2, 3});
    auto y = torch::tensor({0.0, 5.0, 0.0, 0.0, 0.0, 0.5}, torch::kFloat64).view({2, 3});
    CHECK(cosine_distance(x, y).item<double>() == 1.0);
    CHECK(std::abs(cosine_distance(e, 3 * e).item<double>()) < 1e-15);
    CHECK_THROWS_AS(embedding_cosine(torch::zeros({1, 3}), e.to(torch::kFloat32)), NumericalError);
}

TEST_CASE("identity loss vanishes on identical images and stays within [0, 2]") {
    ModelConfig m;
    FeatureNet net(m);
    auto a = test::seeded_uniform({4, 3, 16, 16}, 7, -1, 1);
    auto b = test::seeded_uniform({4, 3, 16, 16}, 8, -1, 1);
    CHECK(std::abs(id_loss(a, a, net).item<double>()) < 1e-6);
    const double v = id_loss(a, b, net).item<double>();
    CHECK(v >= 0);
    CHECK(v <= 2);
}

TEST_CASE("rec loss arithmetic") {
    ModelConfig m;
    FeatureNet net(m);
    auto a = test::seeded_uniform({1, 3, 16, 16}, 9, -0.5, 0.5, torch::kFloat64);
    net->to(torch::kFloat64);
    LossWeights weights;
    auto same = rec_loss(a, a, net, weights).values();
    CHECK(same.l2 == 0.0);
    CHECK(same.lpips_proxy == 0.0);
    CHECK(std::abs(same.rec) < 1e-12);

    auto b = a.clone();
    b[0][1][3][7] += 0.1;
    auto one = rec_loss(a, b, net, weights).values();
    CHECK(one.l2 == doctest::Approx(0.01 / (3 * 256)).epsilon(1e-9));

    LossWeights bare;
    bare.lpips = 0;
    bare.id = 0;
    auto plain = rec_loss(a, b, net, bare).values();
    CHECK(plain.rec == plain.l2);
}

TEST_CASE("joint loss composition and edit terms") {
    ModelConfig m;
    FeatureNet net(m);
    LossWeights weights;
    auto image = test::seeded_uniform({2, 3, 16, 16}, 10, -1, 1);
    auto recon = test::seeded_uniform({2, 3, 16, 16}, 11, -1, 1);
    auto w = test::seeded_normal({2, 6, 64}, 12);
    auto f = test::seeded_normal({2, 64, 4, 4}, 13);

    auto still = joint_loss(w, w, f, f, image, recon, net, weights).values();
    CHECK(still.edit_w == 0.0);
    CHECK(still.edit_f == 0.0);
    CHECK(still.edit == 0.0);
    CHECK(still.joint == still.rec);

    auto moved = joint_loss(w, w + 2.0, f, f - 0.5, image, recon, net, weights).values();
    CHECK(moved.edit_w == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(moved.edit_f == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(moved.l2 >= 0);
    CHECK(moved.lpips_proxy >= 0);
    CHECK(moved.id >= 0);
    const double rec = moved.l2 + weights.lpips * moved.lpips_proxy + weights.id * moved.id;
    CHECK(moved.rec == doctest::Approx(rec).epsilon(1e-6));
    CHECK(moved.joint == doctest::Approx(moved.rec + weights.edit * (moved.edit_w + moved.edit_f)).epsilon(1e-6));
    CHECK_THROWS_AS(joint_loss(w, w.slice(1, 0, 3), f, f, image, recon, net, weights), ShapeError);
}

TEST_CASE("loss breakdown csv row follows the header") {
    LossBreakdown b{0.5, 0.25, 0.125, 1, 2, 3, 5, 8};
    CHECK(LossBreakdown::csv_header() == "l2,lpips_proxy,id,rec,edit_w,edit_f,joint");
    CHECK(b.csv_row() == "0.5,0.25,0.125,1,2,3,8");
}
