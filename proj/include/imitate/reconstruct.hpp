#pragma once

#include <optional>
#include <string>
#include <vector>

#include "imitate/condunet.hpp"
#include "imitate/phantom.hpp"
#include "imitate/stats.hpp"
#include "imitate/warp.hpp"

namespace imitate::recon {

struct ReconstructionRequest {
    double target_amplitude = 0.0;
    int table_position = 0;
    int n_context = 3;
};

struct RecoveredFrame {
    Tensor image;
    warp::DisplacementField field;   // the field actually applied
    int chosen_index = -1;           // frame index of the selected mover
    double chosen_delta = 0.0;
    std::vector<int> context_indices;
    std::vector<double> deltas;
};

/// Recover the frame at an arbitrary amplitude from the n_context slices
/// nearest in amplitude (ties -> earlier time). The applied field is the one
/// predicted for the smallest-|delta| mover; pairwise models fall back to
/// register-and-rescale between the bracketing amplitudes.
RecoveredFrame recover_frame(const ReconstructionRequest& request,
                             const phantom::SliceDataset& dataset,
                             const unet::CondUNet& model);

/// Plain amplitude binning: the nearest-amplitude slice, no warping.
RecoveredFrame nearest_slice_copy(const ReconstructionRequest& request,
                                  const phantom::SliceDataset& dataset);

struct ReconVolume {
    double target_amplitude = 0.0;
    Tensor volume;  // {P,H,W}
    std::vector<RecoveredFrame> frames;
};

std::vector<ReconVolume> assemble_4dct(const phantom::SliceDataset& dataset,
                                       const std::vector<double>& targets,
                                       const unet::CondUNet& model);

struct ContinuityMetrics {
    double ncc = 0.0;     // mean adjacent-pair windowed NCC loss
    double n_ncc = 0.0;   // body-masked, oracle-normalized
    double rmse = 0.0;    // mean adjacent-pair RMS intensity difference
    double n_rmse = 0.0;  // body-masked, oracle-normalized
};

/// Adjacent-slice continuity of a stitched volume. The normalized variants
/// subtract the same statistic computed on the oracle volume over the body
/// mask, so a perfect reconstruction scores zero.
ContinuityMetrics continuity_metrics(const Tensor& volume, const Tensor& oracle_volume,
                                     const Tensor& body_mask, int window);

struct InterpolationMetrics {
    double ncc = 0.0;
    double dice = 0.0;   // hard Dice at 0.5, mean over foreground labels
    double detjac = 0.0;
};

InterpolationMetrics interpolation_metrics(const Tensor& recovered, const Tensor& oracle_frame,
                                           const Tensor& recovered_mask_soft,
                                           const Tensor& oracle_mask_labels,
                                           const warp::DisplacementField& field, int window);

/// Two-sided Wilcoxon signed-rank p-value (see stats::wilcoxon_signed_rank).
double paired_significance(const std::vector<double>& series_a,
                           const std::vector<double>& series_b);

/// Oracle volume at a target amplitude: one noiseless rendered frame per
/// table position at the dataset's per-position anatomy, rate 0.
Tensor oracle_volume(const phantom::SliceDataset& dataset, double target_amplitude);

/// Hard Dice between thresholded soft labels and reference labels.
double hard_dice(const Tensor& soft_onehot, const Tensor& labels, double threshold = 0.5);

struct FrameEvalRow {
    int position = 0;
    int index = 0;
    double amplitude = 0.0;
    double rate = 0.0;
    double ncc = 0.0;          // vs the held-out acquired frame
    double dice = 0.0;         // warped mask vs the held-out mask
    double detjac = 0.0;       // of the applied field
    double rmse = 0.0;         // vs the held-out acquired frame
    double rmse_oracle = 0.0;  // vs the noiseless analytic render
};

/// Supervised held-out frame evaluation: each probe frame is removed and
/// reconstructed from its temporal neighbors, then compared against the
/// acquired frame and the analytic oracle. Pairwise models interpolate
/// between the two adjacent frames with a rescaled field; context models
/// use the training-style nearest-in-time context.
std::vector<FrameEvalRow> evaluate_heldout(const phantom::SliceDataset& dataset,
                                           const unet::CondUNet& model,
                                           const std::vector<int>& positions, int window,
                                           int stride = 1);

double rmse(const Tensor& a, const Tensor& b);

}  // namespace imitate::recon
