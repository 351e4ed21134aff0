#pragma once

#include <string>
#include <vector>

#include "imitate/condunet.hpp"
#include "imitate/phantom.hpp"
#include "imitate/training.hpp"
#include "imitate/warp.hpp"

namespace imitate::baseline {

/// One forward pass of a pairwise-trained network (fixed + moving stacked as
/// two input channels, one output field that warps moving toward fixed).
warp::DisplacementField pairwise_register(const Tensor& moving, const Tensor& fixed,
                                          const unet::CondUNet& model);

/// Classic interpolation: register moving on fixed, linearly rescale the
/// field by (phi_M - phi_target) / (phi_M - phi_F), warp moving.
Tensor rescale_interpolate(const Tensor& moving, const Tensor& fixed,
                           const unet::CondUNet& model, double phi_m, double phi_f,
                           double phi_target);

/// Same, but also returns the rescaled field actually applied.
struct RescaleResult {
    Tensor image;
    warp::DisplacementField field;
    double scale = 0.0;
};
RescaleResult rescale_interpolate_full(const Tensor& moving, const Tensor& fixed,
                                       const unet::CondUNet& model, double phi_m,
                                       double phi_f, double phi_target);

struct VariantRun {
    std::string variant;
    std::string checkpoint_path;
    train::FitResult fit;
};

/// Trains the four ablation configurations (pairwise, multireg,
/// multireg-cond, imitate) with a shared backbone/training budget; only the
/// inputs and conditioning differ.
std::vector<VariantRun> ablation_variants(const phantom::SliceDataset& dataset,
                                          const unet::ModelConfig& base_model,
                                          const train::TrainConfig& base_train,
                                          const std::string& out_dir,
                                          const std::vector<std::string>& variants);

}  // namespace imitate::baseline
