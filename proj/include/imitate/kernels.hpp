#pragma once

#include "imitate/tensor.hpp"

namespace imitate::kernels {

/// Plain (non-graph) kernels shared by the autodiff ops and the metric code.

/// img:{H,W} or {H,W,C}; field:{H,W,2}. Backward warping, bilinear, border clamp.
Tensor grid_sample(const Tensor& img, const Tensor& field);

/// x:{H,W}; axis 0 = rows, 1 = cols. Central interior, one-sided borders.
Tensor central_diff(const Tensor& x, int axis);

/// Adjoint of central_diff (used by the autodiff op).
Tensor central_diff_adjoint(const Tensor& g, int axis);

/// k x k window sums with zero padding; x:{H,W}. Self-adjoint.
Tensor boxsum(const Tensor& x, int k);

/// One displacement component of a {H,W,2} field as a {H,W} grid.
Tensor field_plane(const Tensor& field, int component);

/// field:{H,W,2} -> {H,W}, det(I + grad(field)).
Tensor jacobian_determinant(const Tensor& field);

}  // namespace imitate::kernels
