#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "imitate/rng.hpp"
#include "imitate/tensor.hpp"

namespace imitate::phantom {

struct SignalParams {
    double base_period = 4.0;   // seconds
    double jitter = 0.08;       // per-cycle relative std of period and peak (log-normal)
    double drift = 0.004;       // baseline trend, amplitude units per second
    double sample_rate = 25.0;  // Hz of the cached sample sequence
};

/// Breathing surrogate: raised-cosine cycles with per-cycle period/peak
/// jitter and a linear drift, normalized so the generated window spans [0,1].
class BreathingSignal {
public:
    struct Cycle {
        double start;
        double period;
        double peak;
    };

    static BreathingSignal generate(const SignalParams& params, double duration, uint64_t seed);

    /// Rebuild from explicit cycle/normalization state (dataset manifests).
    static BreathingSignal from_state(const SignalParams& params, double duration,
                                      std::vector<Cycle> cycles, double offset, double scale);

    double amplitude(double t) const;  // normalized, in [0,1] over the window
    double rate(double t) const;       // d(amplitude)/dt, 1/seconds
    double phase(double t) const;      // fraction of the current cycle, [0,1)
    double duration() const { return duration_; }

    const std::vector<Cycle>& cycles() const { return cycles_; }
    double norm_offset() const { return offset_; }
    double norm_scale() const { return scale_; }
    const SignalParams& params() const { return params_; }

    /// Cached (time, amplitude) samples at params.sample_rate.
    const std::vector<std::pair<double, double>>& samples() const { return samples_; }

private:
    const Cycle& cycle_at(double t) const;
    double raw(double t) const;
    double raw_rate(double t) const;
    void normalize_and_sample();

    SignalParams params_;
    double duration_ = 0.0;
    std::vector<Cycle> cycles_;
    double offset_ = 0.0;
    double scale_ = 1.0;
    std::vector<std::pair<double, double>> samples_;
};

/// Reference-frame anatomy; lengths are fractions of image height/width so
/// one parameter set covers every resolution.
struct Anatomy {
    double body_cy = 0.52, body_cx = 0.50, body_ry = 0.40, body_rx = 0.46;
    double background_intensity = 0.03, body_intensity = 0.55;
    double lung_cy = 0.38, lung_dx = 0.21, lung_ry = 0.29, lung_rx = 0.155;
    double lung_intensity = 0.16;
    double diaphragm_ref_row = 0.64;  // apex row at amplitude 0
    double diaphragm_curv = 2.2;      // dome droop, px per px^2, scaled by 1/W
    double tumor_cy = 0.34, tumor_dx = 0.21, tumor_r = 0.055;
    double tumor_intensity = 0.85;
    double tumor_motion = 0.6;        // fraction of the diaphragm displacement
    double edge_width = 0.011;        // intensity transition half-width, fraction of H
    double z_lung = 0.45, z_tumor = 0.65;  // cross-slice shrink strengths
};

struct PhantomSpec {
    int height = 128, width = 128;
    Anatomy anatomy;
    double motion_gain = 14.0;      // px of diaphragm displacement per unit amplitude
    double hysteresis_gain = 4.0;   // px of lateral shift per unit amplitude rate
    double noise_sigma = 0.01;
};

/// Per-table-position anatomy: lungs and tumor shrink toward the cranial and
/// caudal ends like an ellipsoid cut by parallel planes.
PhantomSpec spec_at_position(const PhantomSpec& spec, int position, int n_positions);

struct AcquisitionPlan {
    int table_positions = 12;
    int frames_per_position = 25;
    double sample_rate = 6.25;  // Hz within a dwell window
    double dwell = 4.0;         // seconds per table position
};

enum MaskLabel : int { kBackground = 0, kLung = 1, kTumor = 2 };
constexpr int kNumLabels = 3;

struct AcquiredSlice {
    Tensor pixels;  // {H,W} in [0,1]
    Tensor mask;    // {H,W} labels
    double time = 0.0;
    int table_position = 0;
    int index = 0;  // frame index within the table-position group
    double amplitude = 0.0;
    double phase = 0.0;
    double rate = 0.0;  // amplitude rate at acquisition time (oracle metadata)
};

struct SliceDataset {
    PhantomSpec spec;
    AcquisitionPlan plan;
    SignalParams signal_params;
    uint64_t seed = 0;
    BreathingSignal signal;
    std::vector<std::vector<AcquiredSlice>> groups;  // [table_position][frame]

    int positions() const { return static_cast<int>(groups.size()); }
    const AcquiredSlice& slice(int position, int index) const { return groups[position][index]; }
};

/// amplitude in [0,1]; amplitude_rate in 1/seconds. Noise is not applied here.
void render_frame(const PhantomSpec& spec, double amplitude, double amplitude_rate,
                  Tensor* pixels, Tensor* mask);

Tensor add_noise(const Tensor& pixels, double sigma, Rng& rng);

/// Fixed body-ellipse mask used by body-restricted metrics ({H,W}, 0/1).
Tensor body_mask(const PhantomSpec& spec);

SliceDataset acquire(const PhantomSpec& spec, const AcquisitionPlan& plan,
                     const BreathingSignal& signal, uint64_t seed);

struct StitchedVolume {
    double target_amplitude = 0.0;
    Tensor volume;                     // {P,H,W}
    std::vector<int> chosen_index;     // per position
    std::vector<double> residuals;     // |amplitude - target| per position
};

std::vector<StitchedVolume> bin_and_stitch(const SliceDataset& dataset,
                                           const std::vector<double>& targets);

}  // namespace imitate::phantom
