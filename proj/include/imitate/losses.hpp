#pragma once

#include <vector>

#include "imitate/autodiff.hpp"
#include "imitate/tensor.hpp"

namespace imitate::losses {

struct LossWeights {
    double alpha = 0.7;  // similarity
    double beta = 0.3;   // structural
    double gamma = 0.3 * 0.7 * 0.3;  // regularization
    double zeta = 0.7;   // agreement

    static LossWeights imitate_preset() { return LossWeights{}; }
    static LossWeights pairwise_preset() { return LossWeights{0.8, 0.8, 0.2 * 0.2, 0.0}; }
};

struct LossReport {
    double total = 0.0;
    double sim = 0.0;
    double structural = 0.0;
    double reg = 0.0;
    double agreement = 0.0;
};

inline constexpr double kNccEps = 1e-5;
inline constexpr double kDiceEps = 1e-5;

/// Negative mean of squared local normalized cross-correlation over
/// window x window neighborhoods clipped to the image (true pixel counts,
/// so the value is invariant to affine intensity maps at borders too).
/// Range [-1, 0]; both arguments {H,W}.
ad::Var ncc_loss(const ad::Var& fixed, const ad::Var& warped, int window);

/// Per-pixel reciprocal window pixel count used by the NCC statistics.
Tensor ncc_inv_count(int h, int w, int window);

/// Soft Dice over foreground one-hot channels (channel 0 = background is
/// excluded); arguments {H,W,L}; returns 1 - mean Dice, in [0,1].
ad::Var dice_loss(const ad::Var& fixed_onehot, const ad::Var& warped_onehot);

/// Mean squared deviation of the field's Jacobian determinant from one.
ad::Var detjac_loss(const ad::Var& field);

/// Mean over i of MSE between each warped image and the pixelwise mean.
ad::Var agreement_loss(const std::vector<ad::Var>& warped);

struct CombinedTerms {
    ad::Var total, sim, structural, reg, agreement;
    LossReport report() const;
};

/// Weighted four-term objective. Mask lists may be empty, in which case the
/// structural term contributes zero (weights are used as configured).
CombinedTerms combined_loss(const ad::Var& fixed, const ad::Var& fixed_onehot,
                            const std::vector<ad::Var>& warped,
                            const std::vector<ad::Var>& warped_onehot,
                            const std::vector<ad::Var>& fields, const LossWeights& weights,
                            int ncc_window);

// Plain-value wrappers for metrics code.
double ncc_value(const Tensor& fixed, const Tensor& warped, int window);
/// Per-pixel squared local NCC map (the quantity averaged by ncc_loss).
Tensor ncc_map(const Tensor& fixed, const Tensor& warped, int window);
double dice_value(const Tensor& fixed_onehot, const Tensor& warped_onehot);
double detjac_value(const Tensor& field);
double agreement_value(const std::vector<Tensor>& warped);

}  // namespace imitate::losses
