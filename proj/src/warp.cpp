#include "imitate/warp.hpp"

#include <cmath>

#include "imitate/kernels.hpp"

namespace imitate::warp {

Tensor warp_image(const Tensor& image, const DisplacementField& field) {
    return kernels::grid_sample(image, field);
}

Tensor one_hot(const Tensor& mask, int n_labels) {
    require(mask.rank() == 2, "mask must be {H,W}");
    const int H = mask.dim(0), W = mask.dim(1);
    Tensor out({H, W, n_labels});
    for (size_t i = 0; i < mask.numel(); ++i) {
        int label = static_cast<int>(std::lround(mask[i]));
        require(label >= 0 && label < n_labels, "mask label out of range");
        out.data()[i * n_labels + label] = 1.0;
    }
    return out;
}

Tensor warp_mask(const Tensor& mask, const DisplacementField& field, int n_labels) {
    return kernels::grid_sample(one_hot(mask, n_labels), field);
}

DisplacementField scale_field(const DisplacementField& field, double s) {
    require(std::isfinite(s), "scale factor must be finite");
    Tensor out = field;
    for (size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return out;
}

Tensor jacobian_determinant(const DisplacementField& field) {
    return kernels::jacobian_determinant(field);
}

ad::Var warp_image_graph(const ad::Var& image, const ad::Var& field) {
    return ad::grid_sample(image, field);
}

ad::Var jacobian_determinant_graph(const ad::Var& field) {
    const Tensor& f = field->value;
    require(f.rank() == 3 && f.dim(2) == 2, "field must be {H,W,2}");
    require(f.dim(0) >= 3 && f.dim(1) >= 3, "jacobian needs at least a 3x3 grid");
    ad::Var u = ad::slice_plane(field, 0);
    ad::Var v = ad::slice_plane(field, 1);
    ad::Var uy = ad::central_diff(u, 0);
    ad::Var ux = ad::central_diff(u, 1);
    ad::Var vy = ad::central_diff(v, 0);
    ad::Var vx = ad::central_diff(v, 1);
    return ad::sub(ad::mul(ad::add_scalar(uy, 1.0), ad::add_scalar(vx, 1.0)), ad::mul(ux, vy));
}

}  // namespace imitate::warp
