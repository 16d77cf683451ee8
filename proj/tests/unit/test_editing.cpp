#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "helpers.hpp"
#include "oracles.hpp"
#include "sdic/editing.hpp"
#include "sdic/errors.hpp"

using namespace sdic;
using namespace sdic::oracle;
using sdic::test::bit_equal;

TEST_CASE("a corpus on a line yields that line with all the variance") {
    auto u = torch::tensor({1.0, -2.0, 2.0, 0.5}, torch::kFloat64);
    u = u / u.norm();
    auto t = torch::tensor({-3.0, -1.0, 0.5, 2.0, 4.0}, torch::kFloat64).unsqueeze(1);
    auto dirs = pca_directions(t * u.unsqueeze(0), 1);
    REQUIRE(dirs.size() == 1);
    const double dot = (dirs[0].direction.vector * u).sum().item<double>();
    CHECK(std::abs(std::abs(dot) - 1.0) < 1e-12);
    CHECK(dirs[0].variance_ratio == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("full PCA basis is orthonormal, sorted and sign-normalised") {
    auto corpus = test::seeded_normal({200, 6}, 1, torch::kFloat64) * torch::tensor({3.0, 2.5, 2.0, 1.5, 1.0, 0.5}, torch::kFloat64);
    auto dirs = pca_directions(corpus, 6);
    REQUIRE(dirs.size() == 6);
    double ratio = 0;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const auto& v = dirs[i].direction.vector;
        CHECK(std::abs(v.norm().item<double>() - 1.0) <= 1e-6);
        const auto big = v.abs().argmax().item<int64_t>();
        CHECK(v[big].item<double>() > 0);
        if (i > 0) CHECK(dirs[i].variance <= dirs[i - 1].variance);
        for (std::size_t j = 0; j < i; ++j) CHECK(std::abs((v * dirs[j].direction.vector).sum().item<double>()) <= 1e-6);
        ratio += dirs[i].variance_ratio;
    }
    CHECK(ratio == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("three-point PCA matches a Jacobi eigensolver on the explicit covariance") {
    const double pts[3][3] = {{1.0, 2.0, -0.5}, {-0.3, 0.7, 1.9}, {2.2, -1.1, 0.4}};
    Mat3 cov{};
    double mean[3] = {0, 0, 0};
    for (auto& p : pts)
        for (int j = 0; j < 3; ++j) mean[j] += p[j] / 3;
    for (auto& p : pts)
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) cov[i][j] += (p[i] - mean[i]) * (p[j] - mean[j]) / 2;
    std::array<double, 3> values{};
    Mat3 vectors{};
    jacobi3(cov, values, vectors);
    std::array<int, 3> order{0, 1, 2};
    std::sort(order.begin(), order.end(), [&](int a, int b) { return values[a] > values[b]; });

    auto corpus = torch::empty({3, 3}, torch::kFloat64);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) corpus[i][j] = pts[i][j];
    auto dirs = pca_directions(corpus, 2);
    const double trace = cov[0][0] + cov[1][1] + cov[2][2];
    for (int r = 0; r < 2; ++r) {
        const int c = order[r];
        std::array<double, 3> e{vectors[0][c], vectors[1][c], vectors[2][c]};
        int big = 0;
        for (int k = 1; k < 3; ++k)
            if (std::abs(e[k]) > std::abs(e[big])) big = k;
        const double sign = e[big] < 0 ? -1.0 : 1.0;
        CHECK(dirs[r].variance == doctest::Approx(values[c]).epsilon(1e-10));
        CHECK(dirs[r].variance_ratio == doctest::Approx(values[c] / trace).epsilon(1e-10));
        for (int k = 0; k < 3; ++k) CHECK(std::abs(dirs[r].direction.vector[k].item<double>() - sign * e[k]) < 1e-9);
    }
}

TEST_CASE("pca rejects bad inputs") {
    auto corpus = test::seeded_normal({10, 4}, 2, torch::kFloat64);
    CHECK_THROWS_AS(pca_directions(corpus, 0), std::invalid_argument);
    CHECK_THROWS_AS(pca_directions(corpus, 5), std::invalid_argument);
    CHECK_THROWS_AS(pca_directions(corpus.slice(0, 0, 1), 1), std::invalid_argument);
    CHECK_THROWS_AS(pca_directions(torch::ones({10, 4}, torch::kFloat64), 1), NumericalError);
}

TEST_CASE("hyperplane direction is the normalised mean difference") {
    auto corpus = torch::tensor({-1.0, 1.0, 1.0, -1.0, 3.0, 0.5, 1.0, -0.5}, torch::kFloat64).view({4, 2});
    const std::vector<bool> labels{false, false, true, true};
    auto dir = hyperplane_direction(corpus, labels);
    CHECK(dir.vector[0].item<double>() == doctest::Approx(1.0));
    CHECK(std::abs(dir.vector[1].item<double>()) < 1e-15);

    auto random = test::seeded_normal({12, 5}, 3, torch::kFloat64);
    std::vector<bool> l(12);
    for (std::size_t i = 0; i < l.size(); ++i) l[i] = (i % 3) == 0;
    auto flipped = l;
    flipped.flip();
    auto a = hyperplane_direction(random, l);
    auto b = hyperplane_direction(random, flipped);
    CHECK(torch::allclose(a.vector, -b.vector, 0, 1e-15));
    CHECK(std::abs(a.vector.norm().item<double>() - 1.0) <= 1e-6);
    CHECK_THROWS_AS(hyperplane_direction(random, std::vector<bool>(12, true)), std::invalid_argument);
    CHECK_THROWS_AS(hyperplane_direction(random, std::vector<bool>(3, true)), ShapeError);
}

TEST_CASE("apply_direction contract") {
    auto w = test::seeded_normal({2, 6, 4}, 4);
    auto v = torch::tensor({0.5, 0.5, 0.5, 0.5}, torch::kFloat64);
    EditDirection all{v, {}, "all"};
    CHECK(bit_equal(apply_direction(w, all, 0.0), w));

    auto there = apply_direction(w, all, 1.25);
    CHECK(torch::allclose(apply_direction(there, all, -1.25), w, 0, 1e-6));
    CHECK(torch::allclose(there - w, torch::full_like(w, 0.625), 0, 1e-6));

    EditDirection row2{v, {false, false, true, false, false, false}, "row2"};
    auto moved = apply_direction(w, row2, 2.0);
    for (int64_t r = 0; r < 6; ++r) {
        if (r == 2) {
            CHECK_FALSE(bit_equal(moved.select(1, r), w.select(1, r)));
        } else {
            CHECK(bit_equal(moved.select(1, r), w.select(1, r)));
        }
    }
    auto a1 = apply_direction(w.to(torch::kFloat64), all, 1.0) - w.to(torch::kFloat64);
    auto a3 = apply_direction(w.to(torch::kFloat64), all, 3.0) - w.to(torch::kFloat64);
    CHECK(torch::allclose(a3, 3 * a1, 0, 1e-12));
    CHECK_THROWS_AS(apply_direction(w, EditDirection{torch::ones({5}, torch::kFloat64), {}, ""}, 1.0), ShapeError);
}

TEST_CASE("direction validation") {
    EditDirection ok{torch::tensor({0.6, 0.8}, torch::kFloat64), {}, "ok"};
    CHECK_NOTHROW(ok.validate(3, 2));
    EditDirection loose{torch::tensor({0.6, 0.9}, torch::kFloat64), {}, "loose"};
    CHECK_THROWS_AS(loose.validate(3, 2), NumericalError);
    EditDirection masked{ok.vector, {true, false}, "m"};
    CHECK_THROWS_AS(masked.validate(3, 2), ShapeError);
    CHECK(masked.applies_to(0));
    CHECK_FALSE(masked.applies_to(1));
    CHECK(ok.applies_to(2));
}

TEST_CASE("directions round-trip through NTF plus sidecar") {
    auto dir = test::scratch_dir("direction");
    EditDirection d{torch::tensor({0.6, 0.0, -0.8}, torch::kFloat64), {false, true, true, false}, "smile z0"};
    save_direction(dir / "d.ntf", d);
    auto back = load_direction(dir / "d.ntf");
    CHECK(bit_equal(back.vector, d.vector));
    CHECK(back.row_mask == d.row_mask);
    CHECK(back.label == d.label);

    EditDirection all{d.vector, {}, "all rows"};
    save_direction(dir / "a.ntf", all);
    CHECK(load_direction(dir / "a.ntf").row_mask.empty());
    CHECK_THROWS_AS(load_direction(dir / "missing.ntf"), IoError);
}
