#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "doctest.h"
#include "imitate/dataset.hpp"
#include "imitate/phantom.hpp"

using namespace imitate;
using namespace imitate::phantom;

namespace {

/// Lowest lung-labelled row in the column of the right lung center; the
/// diaphragm dome apex sits one row below it.
int apex_row_from_mask(const Tensor& mask, const PhantomSpec& spec) {
    int col = static_cast<int>(std::lround((spec.anatomy.body_cx + spec.anatomy.lung_dx) *
                                           spec.width));
    int apex = -1;
    for (int y = 0; y < mask.dim(0); ++y)
        if (std::lround(mask.at(y, col)) == kLung) apex = y;
    return apex;
}

}  // namespace

TEST_CASE("signal is exactly periodic without jitter or drift") {
    SignalParams p;
    p.jitter = 0.0;
    p.drift = 0.0;
    p.base_period = 4.0;
    auto s = BreathingSignal::generate(p, 8.0, 3);
    for (double t = 0.0; t <= 3.99; t += 0.05) {
        CHECK(s.amplitude(t) == doctest::Approx(s.amplitude(t + 4.0)).epsilon(1e-12));
    }
}

TEST_CASE("signal normalization spans [0,1]") {
    SignalParams p;
    p.jitter = 0.0;
    p.drift = 0.0;
    auto s = BreathingSignal::generate(p, 4.0, 1);
    double lo = 1e9, hi = -1e9;
    for (const auto& [t, a] : s.samples()) {
        lo = std::min(lo, a);
        hi = std::max(hi, a);
    }
    CHECK(lo == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(hi == doctest::Approx(1.0).epsilon(1e-9));

    SignalParams pj;
    pj.jitter = 0.15;
    pj.drift = 0.01;
    auto sj = BreathingSignal::generate(pj, 30.0, 7);
    for (const auto& [t, a] : sj.samples()) {
        CHECK(a >= -1e-12);
        CHECK(a <= 1.0 + 1e-12);
    }
}

TEST_CASE("signal generation is deterministic per seed") {
    SignalParams p;
    p.jitter = 0.1;
    auto a = BreathingSignal::generate(p, 12.0, 7);
    auto b = BreathingSignal::generate(p, 12.0, 7);
    REQUIRE(a.samples().size() == b.samples().size());
    for (size_t i = 0; i < a.samples().size(); ++i)
        CHECK(a.samples()[i].second == b.samples()[i].second);
    auto c = BreathingSignal::generate(p, 12.0, 8);
    bool same = true;
    for (size_t i = 0; i < a.samples().size() && i < c.samples().size(); ++i)
        same = same && a.samples()[i].second == c.samples()[i].second;
    CHECK_FALSE(same);
}

TEST_CASE("signal argument validation") {
    SignalParams p;
    CHECK_THROWS_AS(BreathingSignal::generate(p, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(BreathingSignal::generate(p, -2.0, 1), std::invalid_argument);
    p.base_period = 0.0;
    CHECK_THROWS_AS(BreathingSignal::generate(p, 4.0, 1), std::invalid_argument);
}

TEST_CASE("signal samples strictly increasing in time") {
    SignalParams p;
    p.jitter = 0.2;
    auto s = BreathingSignal::generate(p, 20.0, 5);
    for (size_t i = 1; i < s.samples().size(); ++i)
        CHECK(s.samples()[i].first > s.samples()[i - 1].first);
}

TEST_CASE("render at amplitude zero and rate zero is the reference anatomy") {
    PhantomSpec spec;
    spec.noise_sigma = 0.0;
    Tensor a, am, b, bm;
    render_frame(spec, 0.0, 0.0, &a, &am);
    render_frame(spec, 0.0, 0.0, &b, &bm);
    for (size_t i = 0; i < a.numel(); ++i) {
        CHECK(a[i] == b[i]);
        CHECK(am[i] == bm[i]);
    }
    CHECK(a.min() >= 0.0);
    CHECK(a.max() <= 1.0);
}

TEST_CASE("diaphragm apex displacement follows motion_gain * amplitude") {
    PhantomSpec spec;
    spec.motion_gain = 20.0;
    spec.hysteresis_gain = 0.0;
    Tensor mask0, mask5;
    render_frame(spec, 0.0, 0.0, nullptr, &mask0);
    render_frame(spec, 0.5, 0.0, nullptr, &mask5);
    int a0 = apex_row_from_mask(mask0, spec);
    int a5 = apex_row_from_mask(mask5, spec);
    REQUIRE(a0 > 0);
    CHECK(a0 - a5 == 10);
}

TEST_CASE("apex row is affine and strictly monotone in amplitude") {
    PhantomSpec spec;
    spec.motion_gain = 16.0;
    spec.hysteresis_gain = 0.0;
    // amplitudes at two-pixel displacement steps
    std::vector<int> rows;
    for (int j = 0; j <= 8; ++j) {
        double a = j * 2.0 / spec.motion_gain;
        Tensor mask;
        render_frame(spec, a, 0.0, nullptr, &mask);
        rows.push_back(apex_row_from_mask(mask, spec));
    }
    for (size_t i = 1; i < rows.size(); ++i) CHECK(rows[i] == rows[i - 1] - 2);
}

TEST_CASE("hysteresis flips frames only when hysteresis_gain is nonzero") {
    PhantomSpec spec;
    spec.noise_sigma = 0.0;
    spec.hysteresis_gain = 5.0;
    Tensor plus, minus;
    render_frame(spec, 0.5, 0.2, &plus, nullptr);
    render_frame(spec, 0.5, -0.2, &minus, nullptr);
    double diff = 0.0;
    for (size_t i = 0; i < plus.numel(); ++i) diff += std::abs(plus[i] - minus[i]);
    CHECK(diff > 1.0);

    spec.hysteresis_gain = 0.0;
    render_frame(spec, 0.5, 0.2, &plus, nullptr);
    render_frame(spec, 0.5, -0.2, &minus, nullptr);
    for (size_t i = 0; i < plus.numel(); ++i) CHECK(plus[i] == minus[i]);
}

TEST_CASE("render rejects out-of-range amplitude") {
    PhantomSpec spec;
    Tensor px;
    CHECK_THROWS_AS(render_frame(spec, -0.1, 0.0, &px, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(render_frame(spec, 1.1, 0.0, &px, nullptr), std::invalid_argument);
}

TEST_CASE("tumor mask pixels are brighter than the lung level") {
    PhantomSpec spec;
    spec.noise_sigma = 0.0;
    for (double a : {0.0, 0.4, 1.0}) {
        for (double r : {-0.3, 0.0, 0.3}) {
            Tensor px, mask;
            render_frame(spec, a, r, &px, &mask);
            int tumor_pixels = 0;
            for (size_t i = 0; i < px.numel(); ++i) {
                if (std::lround(mask[i]) == kTumor) {
                    ++tumor_pixels;
                    CHECK(px[i] > spec.anatomy.lung_intensity);
                }
            }
            CHECK(tumor_pixels > 20);
        }
    }
}

TEST_CASE("acquire produces the planned slice grid") {
    PhantomSpec spec;
    spec.height = spec.width = 32;
    spec.motion_gain = 4.0;
    AcquisitionPlan plan;
    plan.table_positions = 2;
    plan.frames_per_position = 3;
    plan.sample_rate = 1.0;
    plan.dwell = 4.0;
    SignalParams sp;
    auto signal = BreathingSignal::generate(sp, 8.0, 1);
    auto ds = acquire(spec, plan, signal, 1);
    REQUIRE(ds.positions() == 2);
    int total = 0;
    for (const auto& g : ds.groups) {
        CHECK(static_cast<int>(g.size()) == 3);
        total += static_cast<int>(g.size());
    }
    CHECK(total == 6);
    for (const auto& g : ds.groups)
        for (const auto& s : g) {
            CHECK(s.amplitude == doctest::Approx(std::clamp(signal.amplitude(s.time), 0.0, 1.0))
                                     .epsilon(1e-15));
            CHECK(s.phase >= 0.0);
            CHECK(s.phase < 1.0);
        }
}

TEST_CASE("constant signal and zero noise give identical slices in a group") {
    PhantomSpec spec;
    spec.height = spec.width = 32;
    spec.noise_sigma = 0.0;
    SignalParams sp;
    sp.drift = 0.0;
    auto flat = BreathingSignal::from_state(sp, 10.0,
                                            {{0.0, 10.0, 0.0}},  // zero peak -> amplitude 0
                                            0.0, 1.0);
    AcquisitionPlan plan;
    plan.table_positions = 2;
    plan.frames_per_position = 4;
    plan.sample_rate = 2.0;
    plan.dwell = 4.0;
    auto ds = acquire(spec, plan, flat, 9);
    for (const auto& g : ds.groups)
        for (const auto& s : g)
            for (size_t i = 0; i < s.pixels.numel(); ++i)
                CHECK(s.pixels[i] == g[0].pixels[i]);
}

TEST_CASE("acquire is deterministic and jitter varies amplitudes across positions") {
    PhantomSpec spec;
    spec.height = spec.width = 32;
    AcquisitionPlan plan;
    plan.table_positions = 3;
    plan.frames_per_position = 5;
    plan.sample_rate = 2.0;
    plan.dwell = 4.0;
    SignalParams sp;
    sp.jitter = 0.12;
    auto signal = BreathingSignal::generate(sp, 12.0, 5);
    auto a = acquire(spec, plan, signal, 5);
    auto b = acquire(spec, plan, signal, 5);
    for (int p = 0; p < 3; ++p)
        for (int j = 0; j < 5; ++j)
            for (size_t i = 0; i < a.slice(p, j).pixels.numel(); ++i)
                CHECK(a.slice(p, j).pixels[i] == b.slice(p, j).pixels[i]);

    std::set<std::vector<double>> multisets;
    for (const auto& g : a.groups) {
        std::vector<double> amps;
        for (const auto& s : g) amps.push_back(s.amplitude);
        std::sort(amps.begin(), amps.end());
        multisets.insert(amps);
    }
    CHECK(multisets.size() == 3);
}

TEST_CASE("acquire rejects a too-short signal") {
    PhantomSpec spec;
    spec.height = spec.width = 32;
    AcquisitionPlan plan;
    plan.table_positions = 4;
    plan.dwell = 4.0;
    SignalParams sp;
    auto signal = BreathingSignal::generate(sp, 8.0, 1);
    CHECK_THROWS_AS(acquire(spec, plan, signal, 1), std::invalid_argument);
}

TEST_CASE("bin_and_stitch selects minimal-residual slices") {
    PhantomSpec spec;
    spec.height = spec.width = 32;
    AcquisitionPlan plan;
    plan.table_positions = 2;
    plan.frames_per_position = 6;
    plan.sample_rate = 1.5;
    plan.dwell = 4.0;
    SignalParams sp;
    sp.jitter = 0.1;
    auto signal = BreathingSignal::generate(sp, 8.0, 11);
    auto ds = acquire(spec, plan, signal, 11);

    CHECK_THROWS_AS(bin_and_stitch(ds, {}), std::invalid_argument);

    // A target equal to an acquired amplitude has zero residual.
    double t0 = ds.slice(0, 2).amplitude;
    auto vols = bin_and_stitch(ds, {t0, 0.5});
    REQUIRE(vols.size() == 2);
    CHECK(vols[0].volume.dim(0) == 2);
    CHECK(vols[0].residuals[0] == doctest::Approx(0.0).epsilon(1e-15));

    // Residual equals the group minimum, recomputed from the slices.
    for (const auto& v : vols) {
        for (int p = 0; p < ds.positions(); ++p) {
            double best = 1e9;
            for (const auto& s : ds.groups[static_cast<size_t>(p)])
                best = std::min(best, std::abs(s.amplitude - v.target_amplitude));
            CHECK(v.residuals[static_cast<size_t>(p)] == doctest::Approx(best).epsilon(1e-15));
        }
    }

    // Irregular breathing leaves nonzero mean residual at a generic target.
    double mean_res = 0.0;
    for (double r : vols[1].residuals) mean_res += r;
    CHECK(mean_res / ds.positions() > 0.0);
}

TEST_CASE("dataset save/load round trip") {
    PhantomSpec spec;
    spec.height = spec.width = 32;
    AcquisitionPlan plan;
    plan.table_positions = 2;
    plan.frames_per_position = 3;
    plan.sample_rate = 1.0;
    plan.dwell = 4.0;
    SignalParams sp;
    auto signal = BreathingSignal::generate(sp, 8.0, 2);
    auto ds = acquire(spec, plan, signal, 2);

    std::string dir = (std::filesystem::temp_directory_path() / "imitate_ds_test").string();
    std::filesystem::remove_all(dir);
    save_dataset(ds, dir);
    auto back = load_dataset(dir);
    REQUIRE(back.positions() == ds.positions());
    for (int p = 0; p < ds.positions(); ++p) {
        for (int j = 0; j < plan.frames_per_position; ++j) {
            const auto& a = ds.slice(p, j);
            const auto& b = back.slice(p, j);
            CHECK(b.amplitude == a.amplitude);
            CHECK(b.time == a.time);
            CHECK(b.rate == a.rate);
            for (size_t i = 0; i < a.pixels.numel(); ++i) {
                CHECK(std::abs(a.pixels[i] - b.pixels[i]) <= 0.5 / 65535.0 + 1e-12);
                CHECK(a.mask[i] == b.mask[i]);
            }
        }
    }
    CHECK(back.signal.amplitude(3.3) == doctest::Approx(ds.signal.amplitude(3.3)).epsilon(1e-12));
    std::filesystem::remove_all(dir);
}

TEST_CASE("per-position anatomy shrinks toward the couch ends") {
    PhantomSpec spec;
    auto mid = spec_at_position(spec, 5, 11);
    auto end = spec_at_position(spec, 0, 11);
    CHECK(mid.anatomy.lung_ry == doctest::Approx(spec.anatomy.lung_ry));
    CHECK(end.anatomy.lung_ry < mid.anatomy.lung_ry);
    CHECK(end.anatomy.tumor_r < mid.anatomy.tumor_r);
}
