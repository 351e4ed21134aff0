#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "imitate/losses.hpp"
#include "imitate/rng.hpp"
#include "imitate/warp.hpp"

using namespace imitate;
using ad::constant;

namespace {

Tensor random_image(int h, int w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Tensor t({h, w});
    for (size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

/// Brute-force windowed squared NCC from its definition: statistics over
/// the window/image intersection with the true pixel count.
double ncc_bruteforce(const Tensor& f, const Tensor& w, int k) {
    const int H = f.dim(0), W = f.dim(1), r = k / 2;
    double acc = 0.0;
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double sf = 0, sw = 0, sff = 0, sww = 0, sfw = 0, n = 0;
            for (int dy = -r; dy <= r; ++dy) {
                for (int dx = -r; dx <= r; ++dx) {
                    int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    double fv = f.at(yy, xx), wv = w.at(yy, xx);
                    sf += fv;
                    sw += wv;
                    sff += fv * fv;
                    sww += wv * wv;
                    sfw += fv * wv;
                    n += 1.0;
                }
            }
            double cross = sfw - sf * sw / n;
            double vf = sff - sf * sf / n;
            double vw = sww - sw * sw / n;
            acc += cross * cross / (vf * vw + losses::kNccEps);
        }
    }
    return -acc / (H * W);
}

}  // namespace

TEST_CASE("NCC of an image with itself is minus one") {
    Rng rng(1);
    Tensor img = random_image(16, 16, rng);
    CHECK(losses::ncc_value(img, img, 9) == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("NCC is invariant to positive affine intensity maps") {
    Rng rng(2);
    Tensor img = random_image(16, 16, rng);
    Tensor mapped = img;
    for (size_t i = 0; i < mapped.numel(); ++i) mapped[i] = 1.7 * mapped[i] + 0.3;
    CHECK(losses::ncc_value(img, mapped, 9) == doctest::Approx(-1.0).epsilon(1e-4));
}

TEST_CASE("NCC matches the brute-force window oracle") {
    Rng rng(3);
    Tensor f = random_image(8, 8, rng);
    Tensor w = random_image(8, 8, rng);
    for (int k : {3, 5, 7}) {
        double expected = ncc_bruteforce(f, w, k);
        CHECK(losses::ncc_value(f, w, k) == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("NCC stays within [-1, 0] and validates the window") {
    Rng rng(4);
    Tensor f = random_image(12, 12, rng);
    Tensor w = random_image(12, 12, rng);
    double v = losses::ncc_value(f, w, 5);
    CHECK(v <= 0.0);
    CHECK(v >= -1.0);
    CHECK_THROWS_AS(losses::ncc_value(f, w, 4), std::invalid_argument);
    CHECK_THROWS_AS(losses::ncc_value(f, w, 13), std::invalid_argument);
    Tensor bad = random_image(10, 12, rng);
    CHECK_THROWS_AS(losses::ncc_value(f, bad, 5), std::invalid_argument);
}

TEST_CASE("NCC gradient matches finite differences") {
    Rng rng(5);
    Tensor f = random_image(8, 8, rng);
    Tensor w = random_image(8, 8, rng);
    double err = ad::gradcheck(w, [&](const ad::Var& v) {
        return losses::ncc_loss(constant(f), v, 5);
    });
    CHECK(err < 1e-4);
}

TEST_CASE("Dice loss closed forms") {
    // identical masks -> 0
    Tensor mask({8, 8});
    for (int y = 2; y < 6; ++y)
        for (int x = 2; x < 6; ++x) mask.at(y, x) = 1;
    Tensor oh = warp::one_hot(mask, 2);
    CHECK(losses::dice_value(oh, oh) == doctest::Approx(0.0).epsilon(1e-6));

    // disjoint single-label masks -> 1
    Tensor a({8, 8}), b({8, 8});
    a.at(1, 1) = 1;
    b.at(6, 6) = 1;
    CHECK(losses::dice_value(warp::one_hot(a, 2), warp::one_hot(b, 2)) ==
          doctest::Approx(1.0).epsilon(1e-5));

    // One rectangle covering exactly half of the other: |A|=2s, |B|=s,
    // |A^B|=s -> dice 2s/(3s) = 2/3, loss 1/3.
    Tensor big({8, 8}), half({8, 8});
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 8; ++x) big.at(y, x) = 1;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) half.at(y, x) = 1;
    CHECK(losses::dice_value(warp::one_hot(big, 2), warp::one_hot(half, 2)) ==
          doctest::Approx(1.0 / 3.0).epsilon(1e-5));

    // Equal-area rectangles overlapping half of each -> dice 1/2, loss 1/2.
    Tensor left({8, 8}), right({8, 8});
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 4; ++x) left.at(y, x) = 1;
        for (int x = 2; x < 6; ++x) right.at(y, x) = 1;
    }
    CHECK(losses::dice_value(warp::one_hot(left, 2), warp::one_hot(right, 2)) ==
          doctest::Approx(0.5).epsilon(1e-5));

    // channel mismatch
    CHECK_THROWS_AS(losses::dice_value(warp::one_hot(a, 2), warp::one_hot(b, 3)),
                    std::invalid_argument);
}

TEST_CASE("Dice gradient matches finite differences") {
    Rng rng(6);
    Tensor p({6, 6, 2}), q({6, 6, 2});
    for (size_t i = 0; i < p.numel(); ++i) {
        p[i] = rng.uniform(0.0, 1.0);
        q[i] = rng.uniform(0.0, 1.0);
    }
    double err = ad::gradcheck(p, [&](const ad::Var& v) {
        return losses::dice_loss(constant(q), v);
    });
    CHECK(err < 1e-4);
}

TEST_CASE("DetJac loss closed forms") {
    Tensor zero({6, 6, 2});
    CHECK(losses::detjac_value(zero) == 0.0);

    // uniform dilation s=1.1: interior squared deviation (1.21 - 1)^2
    const double s = 1.1;
    const int n = 16;
    Tensor f({n, n, 2});
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            f.at(y, x, 0) = (s - 1.0) * y;
            f.at(y, x, 1) = (s - 1.0) * x;
        }
    Tensor det = warp::jacobian_determinant(f);
    for (int y = 1; y < n - 1; ++y)
        for (int x = 1; x < n - 1; ++x) {
            double dev = det.at(y, x) - 1.0;
            CHECK(dev * dev == doctest::Approx(0.0441).epsilon(1e-10));
        }

    // value equals the MSE of the independently assembled determinant map
    Rng rng(7);
    Tensor g({7, 7, 2});
    for (size_t i = 0; i < g.numel(); ++i) g[i] = rng.uniform(-0.5, 0.5);
    Tensor dg = warp::jacobian_determinant(g);
    double mse = 0.0;
    for (size_t i = 0; i < dg.numel(); ++i) mse += (dg[i] - 1.0) * (dg[i] - 1.0);
    mse /= static_cast<double>(dg.numel());
    CHECK(losses::detjac_value(g) == doctest::Approx(mse).epsilon(1e-12));
}

TEST_CASE("DetJac gradient matches finite differences") {
    Rng rng(8);
    Tensor f({8, 8, 2});
    for (size_t i = 0; i < f.numel(); ++i) f[i] = rng.uniform(-0.3, 0.3);
    double err = ad::gradcheck(f, [](const ad::Var& v) { return losses::detjac_loss(v); });
    CHECK(err < 1e-4);
}

TEST_CASE("agreement loss closed forms") {
    Rng rng(9);
    Tensor img = random_image(6, 6, rng);
    CHECK(losses::agreement_value({img, img, img}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(losses::agreement_value({img}) == 0.0);

    Tensor zeros({4, 4}), ones({4, 4}, 1.0);
    CHECK(losses::agreement_value({zeros, ones}) == doctest::Approx(0.25).epsilon(1e-15));

    CHECK_THROWS_AS(losses::agreement_value({}), std::invalid_argument);
}

TEST_CASE("agreement gradient matches finite differences") {
    Rng rng(10);
    Tensor a = random_image(6, 6, rng), b = random_image(6, 6, rng);
    double err = ad::gradcheck(a, [&](const ad::Var& v) {
        return losses::agreement_loss({v, constant(b)});
    });
    CHECK(err < 1e-4);
}

TEST_CASE("default weights follow the tuned configuration") {
    losses::LossWeights w;
    CHECK(w.alpha == 0.7);
    CHECK(w.beta == 0.3);
    CHECK(w.gamma == doctest::Approx(0.063).epsilon(1e-15));
    CHECK(w.zeta == 0.7);
    auto pw = losses::LossWeights::pairwise_preset();
    CHECK(pw.alpha == 0.8);
    CHECK(pw.beta == 0.8);
    CHECK(pw.gamma == doctest::Approx(0.04).epsilon(1e-15));
}

TEST_CASE("combined loss: perfect single prediction") {
    Rng rng(11);
    Tensor img = random_image(12, 12, rng);
    Tensor mask({12, 12});
    for (int y = 4; y < 8; ++y)
        for (int x = 4; x < 8; ++x) mask.at(y, x) = 1;
    Tensor oh = warp::one_hot(mask, 2);
    Tensor zero_field({12, 12, 2});
    losses::LossWeights w;
    auto terms = losses::combined_loss(constant(img), constant(oh), {constant(img)},
                                       {constant(oh)}, {constant(zero_field)}, w, 5);
    auto r = terms.report();
    CHECK(r.sim == doctest::Approx(-1.0).epsilon(1e-4));
    CHECK(r.structural == doctest::Approx(0.0).epsilon(1e-5));
    CHECK(r.reg == 0.0);
    CHECK(r.agreement == 0.0);
    CHECK(r.total == doctest::Approx(w.alpha * r.sim).epsilon(1e-6));
}

TEST_CASE("combined loss recomposes exactly and is linear in weights") {
    Rng rng(12);
    const int n = 3;
    std::vector<ad::Var> warped, masks, fields;
    Tensor fixed = random_image(10, 10, rng);
    Tensor fixed_mask({10, 10});
    fixed_mask.at(5, 5) = 1;
    Tensor fixed_oh = warp::one_hot(fixed_mask, 2);
    for (int i = 0; i < n; ++i) {
        warped.push_back(constant(random_image(10, 10, rng)));
        Tensor m({10, 10});
        m.at(4 + i, 4) = 1;
        masks.push_back(constant(warp::one_hot(m, 2)));
        Tensor f({10, 10, 2});
        for (size_t j = 0; j < f.numel(); ++j) f[j] = rng.uniform(-0.3, 0.3);
        fields.push_back(constant(f));
    }
    losses::LossWeights w{0.7, 0.3, 0.063, 0.7};
    auto terms = losses::combined_loss(constant(fixed), constant(fixed_oh), warped, masks,
                                       fields, w, 5);
    auto r = terms.report();
    double manual = w.alpha * r.sim + w.beta * r.structural + w.gamma * r.reg +
                    w.zeta * r.agreement;
    CHECK(r.total == doctest::Approx(manual).epsilon(1e-12));

    losses::LossWeights w2{1.4, 0.6, 0.126, 1.4};
    auto terms2 = losses::combined_loss(constant(fixed), constant(fixed_oh), warped, masks,
                                        fields, w2, 5);
    CHECK(terms2.report().total == doctest::Approx(2.0 * r.total).epsilon(1e-12));

    // permutation invariance of the prediction triples
    std::vector<ad::Var> w_p = {warped[2], warped[0], warped[1]};
    std::vector<ad::Var> m_p = {masks[2], masks[0], masks[1]};
    std::vector<ad::Var> f_p = {fields[2], fields[0], fields[1]};
    auto terms3 = losses::combined_loss(constant(fixed), constant(fixed_oh), w_p, m_p, f_p, w, 5);
    CHECK(terms3.report().total == doctest::Approx(r.total).epsilon(1e-12));

    // masks absent: structural contributes zero, weights untouched
    std::vector<ad::Var> no_masks;
    auto terms4 =
        losses::combined_loss(constant(fixed), nullptr, warped, no_masks, fields, w, 5);
    auto r4 = terms4.report();
    CHECK(r4.structural == 0.0);
    CHECK(r4.total == doctest::Approx(w.alpha * r4.sim + w.gamma * r4.reg +
                                      w.zeta * r4.agreement)
                          .epsilon(1e-12));

    // length mismatch rejected
    std::vector<ad::Var> short_fields(fields.begin(), fields.begin() + 2);
    CHECK_THROWS_AS(losses::combined_loss(constant(fixed), constant(fixed_oh), warped, masks,
                                          short_fields, w, 5),
                    std::invalid_argument);
}
