#pragma once

#include "imitate/autodiff.hpp"
#include "imitate/tensor.hpp"

namespace imitate::warp {

/// A displacement field is a {H,W,2} tensor of per-pixel (row, col)
/// displacements in pixel units; warping samples the source image at
/// grid + displacement (backward warping) with bilinear interpolation
/// and border clamping.
using DisplacementField = Tensor;

Tensor warp_image(const Tensor& image, const DisplacementField& field);

/// One-hot encode labels (n_labels channels) -> {H,W,L}.
Tensor one_hot(const Tensor& mask, int n_labels);

/// Bilinearly warp each one-hot channel of a label mask; returns soft
/// per-label occupancy in [0,1].
Tensor warp_mask(const Tensor& mask, const DisplacementField& field, int n_labels);

DisplacementField scale_field(const DisplacementField& field, double s);

/// det(I + grad(field)) with central differences in the interior and
/// one-sided differences at the borders. Requires H,W >= 3.
Tensor jacobian_determinant(const DisplacementField& field);

// Graph-building variants used inside training objectives.
ad::Var warp_image_graph(const ad::Var& image, const ad::Var& field);
ad::Var jacobian_determinant_graph(const ad::Var& field);

}  // namespace imitate::warp
