#include "imitate/phantom.hpp"

#include <algorithm>
#include <cmath>

namespace imitate::phantom {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

BreathingSignal BreathingSignal::generate(const SignalParams& params, double duration,
                                          uint64_t seed) {
    require(duration > 0.0, "signal duration must be positive");
    require(params.base_period > 0.0, "base period must be positive");
    require(params.jitter >= 0.0, "jitter must be non-negative");

    BreathingSignal s;
    s.params_ = params;
    s.duration_ = duration;

    Rng rng = Rng(seed).fork(0xb7ea7);
    double t = 0.0;
    while (t < duration) {
        Cycle c;
        c.start = t;
        if (params.jitter > 0.0) {
            double sj = params.jitter;
            c.period = params.base_period * std::exp(sj * rng.normal() - 0.5 * sj * sj);
            c.peak = std::exp(sj * rng.normal() - 0.5 * sj * sj);
        } else {
            c.period = params.base_period;
            c.peak = 1.0;
        }
        s.cycles_.push_back(c);
        t += c.period;
    }
    s.normalize_and_sample();
    return s;
}

BreathingSignal BreathingSignal::from_state(const SignalParams& params, double duration,
                                            std::vector<Cycle> cycles, double offset,
                                            double scale) {
    BreathingSignal s;
    s.params_ = params;
    s.duration_ = duration;
    s.cycles_ = std::move(cycles);
    s.offset_ = offset;
    s.scale_ = scale;
    int n = static_cast<int>(std::floor(duration * params.sample_rate)) + 1;
    for (int i = 0; i < n; ++i) {
        double t = std::min(i / params.sample_rate, duration);
        s.samples_.emplace_back(t, s.amplitude(t));
    }
    return s;
}

const BreathingSignal::Cycle& BreathingSignal::cycle_at(double t) const {
    // Cycles are few; linear scan keeps this trivially correct.
    for (size_t i = cycles_.size(); i-- > 0;) {
        if (t >= cycles_[i].start) return cycles_[i];
    }
    return cycles_.front();
}

double BreathingSignal::raw(double t) const {
    const Cycle& c = cycle_at(t);
    double theta = kTwoPi * (t - c.start) / c.period;
    return c.peak * 0.5 * (1.0 - std::cos(theta)) + params_.drift * t;
}

double BreathingSignal::raw_rate(double t) const {
    const Cycle& c = cycle_at(t);
    double theta = kTwoPi * (t - c.start) / c.period;
    return c.peak * 0.5 * std::sin(theta) * kTwoPi / c.period + params_.drift;
}

void BreathingSignal::normalize_and_sample() {
    // Exact per-cycle extrema: cycle ends plus interior critical points of
    // peak*(1-cos(theta))/2 + drift*t.
    double lo = raw(0.0), hi = raw(0.0);
    auto consider = [&](double t) {
        if (t < 0.0 || t > duration_) return;
        double v = raw(t);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    };
    for (const Cycle& c : cycles_) {
        consider(c.start);
        consider(std::min(c.start + c.period, duration_));
        double s = -params_.drift * c.period / (M_PI * c.peak);
        if (std::abs(s) <= 1.0) {
            double a = std::asin(s);
            for (double theta : {a < 0 ? a + kTwoPi : a, M_PI - a}) {
                consider(c.start + theta / kTwoPi * c.period);
            }
        }
    }
    consider(duration_);
    offset_ = lo;
    scale_ = (hi - lo) > 0 ? (hi - lo) : 1.0;

    int n = static_cast<int>(std::floor(duration_ * params_.sample_rate)) + 1;
    samples_.clear();
    for (int i = 0; i < n; ++i) {
        double t = std::min(i / params_.sample_rate, duration_);
        samples_.emplace_back(t, amplitude(t));
    }
}

double BreathingSignal::amplitude(double t) const { return (raw(t) - offset_) / scale_; }

double BreathingSignal::rate(double t) const { return raw_rate(t) / scale_; }

double BreathingSignal::phase(double t) const {
    const Cycle& c = cycle_at(t);
    double f = (t - c.start) / c.period;
    return f - std::floor(f);
}

PhantomSpec spec_at_position(const PhantomSpec& spec, int position, int n_positions) {
    PhantomSpec out = spec;
    double zeta = 0.0;
    if (n_positions > 1)
        zeta = 2.0 * position / static_cast<double>(n_positions - 1) - 1.0;
    double lung = std::sqrt(std::max(0.25, 1.0 - spec.anatomy.z_lung * zeta * zeta));
    double tumor = std::sqrt(std::max(0.20, 1.0 - spec.anatomy.z_tumor * zeta * zeta));
    out.anatomy.lung_ry *= lung;
    out.anatomy.lung_rx *= lung;
    out.anatomy.tumor_r *= tumor;
    return out;
}

namespace {

struct Geometry {
    double bcy, bcx, bry, brx;
    double lcy, lrx, lry, ldx;
    double apex_row, curv;
    double tcy, tcx, tr;
    double ew, lateral;
    const Anatomy* a;
};

Geometry make_geometry(const PhantomSpec& spec, double amplitude, double rate) {
    const Anatomy& a = spec.anatomy;
    const double H = spec.height, W = spec.width;
    Geometry g;
    g.a = &a;
    g.bcy = a.body_cy * H;
    g.bcx = a.body_cx * W;
    g.bry = a.body_ry * H;
    g.brx = a.body_rx * W;
    g.lateral = spec.hysteresis_gain * rate;
    g.lcy = a.lung_cy * H;
    g.lry = a.lung_ry * H;
    g.lrx = a.lung_rx * W;
    g.ldx = a.lung_dx * W;
    g.apex_row = a.diaphragm_ref_row * H - spec.motion_gain * amplitude;
    g.curv = a.diaphragm_curv / W;
    g.tcy = a.tumor_cy * H - a.tumor_motion * spec.motion_gain * amplitude;
    g.tcx = a.body_cx * W + a.tumor_dx * W + g.lateral;
    g.tr = a.tumor_r * H;
    g.ew = std::max(0.5, a.edge_width * H);
    return g;
}

inline double edge_cover(double signed_dist_px, double ew) {
    double v = 0.5 + signed_dist_px / (2.0 * ew);
    return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

}  // namespace

void render_frame(const PhantomSpec& spec, double amplitude, double amplitude_rate,
                  Tensor* pixels, Tensor* mask) {
    require(amplitude >= 0.0 && amplitude <= 1.0, "amplitude must lie in [0,1]");
    const int H = spec.height, W = spec.width;
    const Anatomy& a = spec.anatomy;
    Geometry g = make_geometry(spec, amplitude, amplitude_rate);

    if (pixels) *pixels = Tensor({H, W});
    if (mask) *mask = Tensor({H, W});

#pragma omp parallel for schedule(static)
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double dyb = (y - g.bcy) / g.bry;
            double dxb = (x - g.bcx) / g.brx;
            double tb = dyb * dyb + dxb * dxb;
            double body_cover =
                edge_cover((1.0 - std::sqrt(tb)) * std::min(g.bry, g.brx), g.ew);
            double intensity =
                a.background_intensity + (a.body_intensity - a.background_intensity) * body_cover;

            bool in_lung = false;
            for (int side = -1; side <= 1; side += 2) {
                double lcx = g.bcx + side * g.ldx + g.lateral;
                double dyl = (y - g.lcy) / g.lry;
                double dxl = (x - lcx) / g.lrx;
                double tl = dyl * dyl + dxl * dxl;
                double dome_row = g.apex_row + g.curv * (x - lcx) * (x - lcx);
                double cover =
                    edge_cover((1.0 - std::sqrt(tl)) * std::min(g.lry, g.lrx), g.ew) *
                    edge_cover(dome_row - y, g.ew);
                intensity += (a.lung_intensity - intensity) * cover;
                if (tl <= 1.0 && y < dome_row) in_lung = true;
            }

            double td = std::hypot(y - g.tcy, x - g.tcx);
            double tumor_cover = edge_cover(g.tr - td, g.ew);
            intensity += (a.tumor_intensity - intensity) * tumor_cover;

            if (pixels) {
                intensity = intensity < 0.0 ? 0.0 : (intensity > 1.0 ? 1.0 : intensity);
                pixels->at(y, x) = intensity;
            }
            if (mask) {
                int label = kBackground;
                if (in_lung) label = kLung;
                if (td <= g.tr - 2.0 * g.ew) label = kTumor;
                mask->at(y, x) = label;
            }
        }
    }
}

Tensor add_noise(const Tensor& pixels, double sigma, Rng& rng) {
    Tensor out = pixels;
    if (sigma <= 0.0) return out;
    for (size_t i = 0; i < out.numel(); ++i) {
        double v = out[i] + sigma * rng.normal();
        out[i] = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    }
    return out;
}

Tensor body_mask(const PhantomSpec& spec) {
    const int H = spec.height, W = spec.width;
    const Anatomy& a = spec.anatomy;
    Tensor out({H, W});
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            double dy = (y - a.body_cy * H) / (a.body_ry * H);
            double dx = (x - a.body_cx * W) / (a.body_rx * W);
            out.at(y, x) = (dy * dy + dx * dx) <= 1.0 ? 1.0 : 0.0;
        }
    }
    return out;
}

SliceDataset acquire(const PhantomSpec& spec, const AcquisitionPlan& plan,
                     const BreathingSignal& signal, uint64_t seed) {
    require(plan.table_positions >= 1, "need at least one table position");
    require(plan.frames_per_position >= 2, "frames_per_position must be at least 2");
    require(plan.dwell * plan.sample_rate >= plan.frames_per_position,
            "dwell window too short for the requested frame count");
    require(signal.duration() + 1e-9 >= plan.table_positions * plan.dwell,
            "breathing signal shorter than the acquisition");

    SliceDataset ds;
    ds.spec = spec;
    ds.plan = plan;
    ds.signal_params = signal.params();
    ds.seed = seed;
    ds.signal = signal;
    ds.groups.resize(static_cast<size_t>(plan.table_positions));

    Rng master(seed);
    for (int p = 0; p < plan.table_positions; ++p) {
        PhantomSpec pos_spec = spec_at_position(spec, p, plan.table_positions);
        Rng pos_rng = master.fork(static_cast<uint64_t>(p));
        auto& group = ds.groups[p];
        group.reserve(static_cast<size_t>(plan.frames_per_position));
        for (int j = 0; j < plan.frames_per_position; ++j) {
            double t = p * plan.dwell + j / plan.sample_rate;
            AcquiredSlice s;
            s.time = t;
            s.table_position = p;
            s.index = j;
            s.amplitude = std::clamp(signal.amplitude(t), 0.0, 1.0);
            s.phase = signal.phase(t);
            s.rate = signal.rate(t);
            render_frame(pos_spec, s.amplitude, s.rate, &s.pixels, &s.mask);
            Rng noise_rng = pos_rng.fork(static_cast<uint64_t>(j));
            s.pixels = add_noise(s.pixels, spec.noise_sigma, noise_rng);
            group.push_back(std::move(s));
        }
    }
    return ds;
}

std::vector<StitchedVolume> bin_and_stitch(const SliceDataset& dataset,
                                           const std::vector<double>& targets) {
    require(!targets.empty(), "target amplitude list is empty");
    for (const auto& g : dataset.groups)
        require(!g.empty(), "every table-position group must be nonempty");

    const int P = dataset.positions();
    const int H = dataset.spec.height, W = dataset.spec.width;
    std::vector<StitchedVolume> out;
    out.reserve(targets.size());
    for (double target : targets) {
        StitchedVolume v;
        v.target_amplitude = target;
        v.volume = Tensor({P, H, W});
        for (int p = 0; p < P; ++p) {
            const auto& group = dataset.groups[p];
            int best = 0;
            double best_res = std::abs(group[0].amplitude - target);
            for (int j = 1; j < static_cast<int>(group.size()); ++j) {
                double res = std::abs(group[j].amplitude - target);
                if (res < best_res) {  // tie keeps the earlier acquisition
                    best = j;
                    best_res = res;
                }
            }
            v.chosen_index.push_back(best);
            v.residuals.push_back(best_res);
            const Tensor& px = group[best].pixels;
            std::copy(px.data(), px.data() + px.numel(),
                      v.volume.data() + static_cast<size_t>(p) * H * W);
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace imitate::phantom
