#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "imitate/autodiff.hpp"
#include "imitate/kernels.hpp"
#include "imitate/rng.hpp"
#include "imitate/tensor.hpp"

using namespace imitate;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("tensor basics") {
    Tensor t({2, 3}, 1.5);
    CHECK(t.numel() == 6);
    CHECK(t.at(1, 2) == 1.5);
    t.at(0, 1) = -2.0;
    CHECK(t.sum() == doctest::Approx(9.0 - 1.5 - 2.0));
    CHECK_THROWS_AS(t.reshaped({4, 2}), std::invalid_argument);
    Tensor r = t.reshaped({3, 2});
    CHECK(r.dim(0) == 3);
    CHECK(r[1] == t[1]);
}

TEST_CASE("rng determinism and fork independence") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(42);
    Rng f1 = c.fork(1), f2 = c.fork(2);
    CHECK(f1.next_u64() != f2.next_u64());
    // fork is independent of how much the parent was consumed
    Rng d(42);
    d.next_u64();
    CHECK(d.fork(1).next_u64() == Rng(42).fork(1).next_u64());
}

TEST_CASE("rng normal moments") {
    Rng rng(7);
    double sum = 0.0, sq = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    CHECK(std::abs(sum / n) < 0.03);
    CHECK(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("autodiff elementwise and reductions gradcheck") {
    Rng rng(3);
    Tensor x = random_tensor({4, 5}, rng, 0.2, 1.7);
    Tensor y = random_tensor({4, 5}, rng, 0.3, 1.9);

    auto check = [&](auto make_loss) {
        CHECK(ad::gradcheck(x, make_loss) < 1e-7);
    };
    check([&](const ad::Var& v) { return ad::mean(ad::mul(v, v)); });
    check([&](const ad::Var& v) { return ad::sum(ad::add(v, ad::constant(y))); });
    check([&](const ad::Var& v) { return ad::mean(ad::divide(ad::constant(y), v)); });
    check([&](const ad::Var& v) { return ad::mean(ad::sigmoid(v)); });
    check([&](const ad::Var& v) { return ad::mean(ad::leaky_relu(v, 0.2)); });
    check([&](const ad::Var& v) {
        return ad::mean(ad::mul(ad::add_scalar(v, 0.5), ad::mul_scalar(v, -1.3)));
    });
}

TEST_CASE("autodiff linear and vector ops gradcheck") {
    Rng rng(5);
    Tensor x = random_tensor({6}, rng);
    Tensor w = random_tensor({4, 6}, rng);
    Tensor b = random_tensor({4}, rng);

    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              return ad::mean(ad::linear(v, ad::constant(w), ad::constant(b)));
          }) < 1e-7);
    CHECK(ad::gradcheck(w, [&](const ad::Var& v) {
              return ad::mean(ad::linear(ad::constant(x), v, ad::constant(b)));
          }) < 1e-7);
    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              auto parts = std::vector<ad::Var>{ad::slice_vec(v, 0, 3), ad::slice_vec(v, 3, 6)};
              return ad::mean(ad::mul(ad::concat_vec(parts), ad::concat_vec(parts)));
          }) < 1e-7);
}

TEST_CASE("conv2d matches direct computation and gradcheck") {
    Rng rng(11);
    // x {H,W,C}; w {k*k*C, F} with patch order (ki, kj, c)
    Tensor x = random_tensor({5, 5, 2}, rng);
    Tensor w = random_tensor({9 * 2, 3}, rng);
    Tensor b = random_tensor({3}, rng);

    Tensor out = ad::conv2d(ad::constant(x), ad::constant(w), ad::constant(b), 1, 1)->value;
    // direct evaluation at a few positions
    for (auto [f, y, xx] : {std::tuple{0, 0, 0}, std::tuple{2, 2, 3}, std::tuple{1, 4, 4}}) {
        double acc = b[f];
        for (int c = 0; c < 2; ++c)
            for (int ki = 0; ki < 3; ++ki)
                for (int kj = 0; kj < 3; ++kj) {
                    int iy = y + ki - 1, ix = xx + kj - 1;
                    if (iy < 0 || iy >= 5 || ix < 0 || ix >= 5) continue;
                    acc += x.at(iy, ix, c) * w.at((ki * 3 + kj) * 2 + c, f);
                }
        CHECK(out.at(y, xx, f) == doctest::Approx(acc).epsilon(1e-12));
    }

    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              return ad::mean(ad::conv2d(v, ad::constant(w), ad::constant(b), 1, 1));
          }) < 1e-6);
    CHECK(ad::gradcheck(w, [&](const ad::Var& v) {
              return ad::mean(ad::conv2d(ad::constant(x), v, ad::constant(b), 1, 1));
          }) < 1e-6);
    CHECK(ad::gradcheck(b, [&](const ad::Var& v) {
              return ad::mean(ad::conv2d(ad::constant(x), ad::constant(w), v, 1, 1));
          }) < 1e-6);
    // stride-2 path
    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              return ad::mean(ad::conv2d(v, ad::constant(w), ad::constant(b), 2, 1));
          }) < 1e-6);
}

TEST_CASE("spatial ops gradcheck") {
    Rng rng(13);
    Tensor x = random_tensor({4, 4, 2}, rng);
    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              return ad::mean(ad::upsample2_nearest(v));
          }) < 1e-7);
    Tensor g2 = random_tensor({4, 4, 1}, rng, 0.1, 0.9);
    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              return ad::mean(ad::gate_mul(v, ad::constant(g2)));
          }) < 1e-7);
    Tensor s = random_tensor({2}, rng), t = random_tensor({2}, rng);
    CHECK(ad::gradcheck(s, [&](const ad::Var& v) {
              return ad::mean(ad::channel_affine(ad::constant(x), v, ad::constant(t)));
          }) < 1e-7);
    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              return ad::mean(ad::concat_ch(ad::slice_ch(v, 0, 1), v));
          }) < 1e-7);
    CHECK(ad::gradcheck(x, [&](const ad::Var& v) {
              return ad::mean(ad::mul(ad::slice_plane(v, 0), ad::slice_plane(v, 1)));
          }) < 1e-7);
    Tensor plane = random_tensor({5, 6}, rng);
    CHECK(ad::gradcheck(plane, [&](const ad::Var& v) {
              return ad::mean(ad::mul(ad::boxsum(v, 3), ad::boxsum(v, 3)));
          }) < 1e-7);
    CHECK(ad::gradcheck(plane, [&](const ad::Var& v) {
              return ad::mean(ad::mul(ad::central_diff(v, 0), ad::central_diff(v, 1)));
          }) < 1e-7);
}

TEST_CASE("boxsum matches brute force") {
    Rng rng(17);
    Tensor x = random_tensor({7, 6}, rng);
    Tensor got = kernels::boxsum(x, 3);
    for (int i = 0; i < 7; ++i) {
        for (int j = 0; j < 6; ++j) {
            double acc = 0.0;
            for (int di = -1; di <= 1; ++di)
                for (int dj = -1; dj <= 1; ++dj) {
                    int y = i + di, xx = j + dj;
                    if (y < 0 || y >= 7 || xx < 0 || xx >= 6) continue;
                    acc += x.at(y, xx);
                }
            CHECK(got.at(i, j) == doctest::Approx(acc).epsilon(1e-12));
        }
    }
}

TEST_CASE("grid_sample gradcheck wrt field and image") {
    Rng rng(19);
    Tensor img = random_tensor({8, 8}, rng, 0.0, 1.0);
    // fractional offsets well away from the bilinear kinks
    Tensor field({8, 8, 2});
    for (size_t i = 0; i < field.numel(); ++i) field[i] = rng.uniform(0.25, 0.75);

    CHECK(ad::gradcheck(field, [&](const ad::Var& v) {
              return ad::mean(ad::grid_sample(ad::constant(img), v));
          }) < 1e-5);
    CHECK(ad::gradcheck(img, [&](const ad::Var& v) {
              return ad::mean(ad::grid_sample(v, ad::constant(field)));
          }) < 1e-5);
}

TEST_CASE("backward accumulates over shared subgraphs") {
    Tensor x({1}, 3.0);
    ad::Var v = ad::leaf(x, true);
    ad::Var y = ad::mul(v, v);           // x^2
    ad::Var z = ad::add(y, ad::mul_scalar(v, 2.0));  // x^2 + 2x
    ad::backward(z);
    CHECK(v->grad[0] == doctest::Approx(2 * 3.0 + 2.0));
}

TEST_CASE("free_graph keeps leaf gradients") {
    Tensor x({2, 2}, 1.0);
    ad::Var v = ad::leaf(x, true);
    ad::Var loss = ad::mean(ad::mul(v, v));
    ad::backward(loss, /*free_graph=*/true);
    CHECK(v->grad[0] == doctest::Approx(0.5));
}
