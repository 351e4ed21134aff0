#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "imitate/autodiff.hpp"
#include "imitate/rng.hpp"
#include "imitate/warp.hpp"

using namespace imitate;

namespace {

Tensor random_image(int h, int w, Rng& rng) {
    Tensor t({h, w});
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(0.0, 1.0);
    return t;
}

Tensor constant_field(int h, int w, double dy, double dx) {
    Tensor f({h, w, 2});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            f.at(y, x, 0) = dy;
            f.at(y, x, 1) = dx;
        }
    return f;
}

}  // namespace

TEST_CASE("zero field is the exact identity") {
    Rng rng(1);
    Tensor img = random_image(9, 7, rng);
    Tensor field({9, 7, 2});
    Tensor out = warp::warp_image(img, field);
    for (size_t i = 0; i < img.numel(); ++i) CHECK(out[i] == img[i]);
}

TEST_CASE("constant unit column shift duplicates the border column") {
    Rng rng(2);
    Tensor img = random_image(6, 6, rng);
    Tensor out = warp::warp_image(img, constant_field(6, 6, 0.0, 1.0));
    for (int y = 0; y < 6; ++y) {
        for (int x = 0; x < 5; ++x) CHECK(out.at(y, x) == img.at(y, x + 1));
        CHECK(out.at(y, 5) == img.at(y, 5));
    }
}

TEST_CASE("integer translation fully inside bounds equals index shift") {
    Rng rng(3);
    Tensor img = random_image(10, 10, rng);
    Tensor out = warp::warp_image(img, constant_field(10, 10, 2.0, -3.0));
    for (int y = 0; y < 8; ++y)
        for (int x = 3; x < 10; ++x) CHECK(out.at(y, x) == img.at(y + 2, x - 3));
}

TEST_CASE("warp gradients match finite differences on random 8x8 instances") {
    Rng rng(4);
    Tensor img = random_image(8, 8, rng);
    Tensor field({8, 8, 2});
    for (size_t i = 0; i < field.numel(); ++i) field[i] = rng.uniform(0.25, 0.75);

    double err_field = ad::gradcheck(field, [&](const ad::Var& v) {
        return ad::mean(ad::mul(ad::grid_sample(ad::constant(img), v),
                                ad::grid_sample(ad::constant(img), v)));
    });
    CHECK(err_field < 1e-5);
    double err_img = ad::gradcheck(img, [&](const ad::Var& v) {
        return ad::mean(ad::mul(ad::grid_sample(v, ad::constant(field)),
                                ad::grid_sample(v, ad::constant(field))));
    });
    CHECK(err_img < 1e-5);
}

TEST_CASE("warp_image rejects shape mismatch") {
    Rng rng(5);
    Tensor img = random_image(8, 8, rng);
    Tensor field({6, 6, 2});
    CHECK_THROWS_AS(warp::warp_image(img, field), std::invalid_argument);
}

TEST_CASE("warp_mask: zero field reproduces the one-hot encoding") {
    Tensor mask({4, 4});
    mask.at(1, 1) = 1;
    mask.at(2, 2) = 2;
    Tensor field({4, 4, 2});
    Tensor soft = warp::warp_mask(mask, field, 3);
    Tensor onehot = warp::one_hot(mask, 3);
    for (size_t i = 0; i < soft.numel(); ++i) CHECK(soft[i] == onehot[i]);
}

TEST_CASE("warp_mask: integer translation moves the one-hot labels") {
    Tensor mask({5, 5});
    mask.at(2, 2) = 1;
    Tensor soft = warp::warp_mask(mask, constant_field(5, 5, 1.0, 0.0), 2);
    CHECK(soft.at(1, 2, 1) == 1.0);  // sampled from (2,2)
    CHECK(soft.at(2, 2, 1) == 0.0);
}

TEST_CASE("half-pixel shift of a step edge lands at one half") {
    // label 1 for columns >= 4
    Tensor mask({8, 8});
    for (int y = 0; y < 8; ++y)
        for (int x = 4; x < 8; ++x) mask.at(y, x) = 1;
    Tensor soft = warp::warp_mask(mask, constant_field(8, 8, 0.0, 0.5), 2);
    for (int y = 0; y < 8; ++y) {
        CHECK(soft.at(y, 3, 1) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(soft.at(y, 4, 1) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(soft.at(y, 2, 1) == doctest::Approx(0.0).epsilon(1e-12));
    }
    // channel values stay within [0,1] and sum to ~1
    for (size_t i = 0; i < soft.numel(); ++i) {
        CHECK(soft[i] >= 0.0);
        CHECK(soft[i] <= 1.0);
    }
}

TEST_CASE("scale_field basics and additivity") {
    Tensor f = constant_field(4, 4, 2.0, 4.0);
    Tensor zero = warp::scale_field(f, 0.0);
    for (size_t i = 0; i < zero.numel(); ++i) CHECK(zero[i] == 0.0);
    Tensor same = warp::scale_field(f, 1.0);
    for (size_t i = 0; i < same.numel(); ++i) CHECK(same[i] == f[i]);
    Tensor half = warp::scale_field(f, 0.5);
    CHECK(half.at(1, 1, 0) == 1.0);
    CHECK(half.at(1, 1, 1) == 2.0);

    Rng rng(7);
    Tensor g({4, 4, 2});
    for (size_t i = 0; i < g.numel(); ++i) g[i] = rng.uniform(-2.0, 2.0);
    Tensor ab = warp::scale_field(g, 0.3 + 1.1);
    Tensor a = warp::scale_field(g, 0.3);
    Tensor b = warp::scale_field(g, 1.1);
    for (size_t i = 0; i < g.numel(); ++i)
        CHECK(ab[i] == doctest::Approx(a[i] + b[i]).epsilon(1e-15));

    CHECK_THROWS_AS(warp::scale_field(g, std::nan("")), std::invalid_argument);
}

TEST_CASE("jacobian determinant of the zero field is one") {
    Tensor f({5, 5, 2});
    Tensor det = warp::jacobian_determinant(f);
    for (size_t i = 0; i < det.numel(); ++i) CHECK(det[i] == 1.0);
}

TEST_CASE("uniform dilation has determinant s^2 in the interior") {
    const double s = 1.3;
    const int n = 7;
    Tensor f({n, n, 2});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            f.at(y, x, 0) = (s - 1.0) * y;
            f.at(y, x, 1) = (s - 1.0) * x;
        }
    Tensor det = warp::jacobian_determinant(f);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            CHECK(det.at(y, x) == doctest::Approx(s * s).epsilon(1e-10));
}

TEST_CASE("affine field has constant interior determinant det(A)") {
    // p -> A p + b with A = I + G
    const double g00 = 0.1, g01 = -0.04, g10 = 0.06, g11 = 0.2;
    const int n = 8;
    Tensor f({n, n, 2});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            f.at(y, x, 0) = g00 * y + g01 * x + 0.7;
            f.at(y, x, 1) = g10 * y + g11 * x - 0.2;
        }
    double expected = (1 + g00) * (1 + g11) - g01 * g10;
    Tensor det = warp::jacobian_determinant(f);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x)
            CHECK(det.at(y, x) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("jacobian determinant matches an independent stencil evaluation") {
    Rng rng(11);
    const int n = 5;
    Tensor f({n, n, 2});
    for (size_t i = 0; i < f.numel(); ++i) f[i] = rng.uniform(-0.4, 0.4);
    Tensor det = warp::jacobian_determinant(f);

    auto dval = [&](int y, int x, int c) { return f.at(y, x, c); };
    auto diff = [&](int y, int x, int c, int axis) {
        if (axis == 0) {
            int lo = std::max(y - 1, 0), hi = std::min(y + 1, n - 1);
            return (dval(hi, x, c) - dval(lo, x, c)) / (hi - lo);
        }
        int lo = std::max(x - 1, 0), hi = std::min(x + 1, n - 1);
        return (dval(y, hi, c) - dval(y, lo, c)) / (hi - lo);
    };
    for (int y = 0; y < n; ++y) {
        for (int x = 0; x < n; ++x) {
            double uy = diff(y, x, 0, 0), ux = diff(y, x, 0, 1);
            double vy = diff(y, x, 1, 0), vx = diff(y, x, 1, 1);
            double expected = (1 + uy) * (1 + vx) - ux * vy;
            CHECK(det.at(y, x) == doctest::Approx(expected).epsilon(1e-10));
        }
    }
}

TEST_CASE("jacobian determinant needs at least 3x3") {
    Tensor f({2, 5, 2});
    CHECK_THROWS_AS(warp::jacobian_determinant(f), std::invalid_argument);
}

TEST_CASE("jacobian determinant graph gradcheck") {
    Rng rng(13);
    Tensor f({6, 6, 2});
    for (size_t i = 0; i < f.numel(); ++i) f[i] = rng.uniform(-0.3, 0.3);
    double err = ad::gradcheck(f, [](const ad::Var& v) {
        auto det = warp::jacobian_determinant_graph(v);
        return ad::mean(ad::mul(det, det));
    });
    CHECK(err < 1e-5);
}
