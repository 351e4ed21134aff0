#include "imitate/losses.hpp"

#include <cmath>

#include "imitate/kernels.hpp"
#include "imitate/warp.hpp"

namespace imitate::losses {

using ad::Var;

/// 1 / (window pixel count) per pixel, window clipped to the image.
Tensor ncc_inv_count(int h, int w, int window) {
    Tensor ones({h, w}, 1.0);
    Tensor count = kernels::boxsum(ones, window);
    for (size_t i = 0; i < count.numel(); ++i) count[i] = 1.0 / count[i];
    return count;
}

Var ncc_loss(const Var& fixed, const Var& warped, int window) {
    const Tensor& f = fixed->value;
    require(f.rank() == 2, "ncc_loss expects {H,W} grids");
    require(f.same_shape(warped->value), "ncc_loss: shape mismatch");
    require(window % 2 == 1 && window >= 3, "ncc window must be odd and >= 3");
    require(window <= f.dim(0) && window <= f.dim(1), "ncc window larger than image");

    // Window statistics over the window/image intersection; near borders the
    // true pixel count keeps the correlation exact under affine intensity maps.
    Var inv_n = ad::constant(ncc_inv_count(f.dim(0), f.dim(1), window));
    Var sf = ad::boxsum(fixed, window);
    Var sw = ad::boxsum(warped, window);
    Var sff = ad::boxsum(ad::mul(fixed, fixed), window);
    Var sww = ad::boxsum(ad::mul(warped, warped), window);
    Var sfw = ad::boxsum(ad::mul(warped, fixed), window);

    Var cross = ad::sub(sfw, ad::mul(ad::mul(sf, sw), inv_n));
    Var var_f = ad::sub(sff, ad::mul(ad::mul(sf, sf), inv_n));
    Var var_w = ad::sub(sww, ad::mul(ad::mul(sw, sw), inv_n));
    Var cc = ad::divide(ad::mul(cross, cross), ad::add_scalar(ad::mul(var_f, var_w), kNccEps));
    return ad::neg(ad::mean(cc));
}

Var dice_loss(const Var& fixed_onehot, const Var& warped_onehot) {
    const Tensor& f = fixed_onehot->value;
    require(f.rank() == 3, "dice_loss expects {H,W,L} one-hot grids");
    require(f.same_shape(warped_onehot->value), "dice_loss: label channel mismatch");
    const int L = f.dim(2);
    if (L <= 1) return ad::constant_scalar(0.0);

    Var acc = ad::constant_scalar(0.0);
    for (int l = 1; l < L; ++l) {
        Var p = ad::slice_plane(warped_onehot, l);
        Var q = ad::slice_plane(fixed_onehot, l);
        Var inter = ad::sum(ad::mul(p, q));
        Var denom = ad::add(ad::sum(p), ad::sum(q));
        Var dice = ad::divide(ad::add_scalar(ad::mul_scalar(inter, 2.0), kDiceEps),
                              ad::add_scalar(denom, kDiceEps));
        acc = ad::add(acc, dice);
    }
    return ad::add_scalar(ad::neg(ad::mul_scalar(acc, 1.0 / (L - 1))), 1.0);
}

Var detjac_loss(const Var& field) {
    Var det = warp::jacobian_determinant_graph(field);
    Var dev = ad::add_scalar(det, -1.0);
    return ad::mean(ad::mul(dev, dev));
}

Var agreement_loss(const std::vector<Var>& warped) {
    require(!warped.empty(), "agreement_loss: empty prediction list");
    const size_t n = warped.size();
    for (const auto& w : warped)
        require(w->value.same_shape(warped[0]->value), "agreement_loss: shape mismatch");
    Var mean_img = warped[0];
    for (size_t i = 1; i < n; ++i) mean_img = ad::add(mean_img, warped[i]);
    mean_img = ad::mul_scalar(mean_img, 1.0 / static_cast<double>(n));
    Var acc = ad::constant_scalar(0.0);
    for (const auto& w : warped) acc = ad::add(acc, ad::mse(mean_img, w));
    return ad::mul_scalar(acc, 1.0 / static_cast<double>(n));
}

LossReport CombinedTerms::report() const {
    LossReport r;
    r.total = ad::scalar(total);
    r.sim = ad::scalar(sim);
    r.structural = ad::scalar(structural);
    r.reg = ad::scalar(reg);
    r.agreement = ad::scalar(agreement);
    return r;
}

CombinedTerms combined_loss(const Var& fixed, const Var& fixed_onehot,
                            const std::vector<Var>& warped,
                            const std::vector<Var>& warped_onehot,
                            const std::vector<Var>& fields, const LossWeights& weights,
                            int ncc_window) {
    require(!warped.empty(), "combined_loss: empty prediction list");
    require(warped.size() == fields.size(), "combined_loss: list length mismatch");
    const bool with_masks = !warped_onehot.empty();
    if (with_masks)
        require(warped_onehot.size() == warped.size(), "combined_loss: mask list length mismatch");
    require(std::isfinite(weights.alpha) && std::isfinite(weights.beta) &&
                std::isfinite(weights.gamma) && std::isfinite(weights.zeta) &&
                weights.alpha >= 0 && weights.beta >= 0 && weights.gamma >= 0 &&
                weights.zeta >= 0,
            "loss weights must be finite and non-negative");

    const double inv_n = 1.0 / static_cast<double>(warped.size());
    CombinedTerms t;
    Var sim = ad::constant_scalar(0.0);
    Var reg = ad::constant_scalar(0.0);
    Var structural = ad::constant_scalar(0.0);
    for (size_t i = 0; i < warped.size(); ++i) {
        sim = ad::add(sim, ncc_loss(fixed, warped[i], ncc_window));
        reg = ad::add(reg, detjac_loss(fields[i]));
        if (with_masks)
            structural = ad::add(structural, dice_loss(fixed_onehot, warped_onehot[i]));
    }
    t.sim = ad::mul_scalar(sim, inv_n);
    t.reg = ad::mul_scalar(reg, inv_n);
    t.structural = with_masks ? ad::mul_scalar(structural, inv_n) : ad::constant_scalar(0.0);
    t.agreement = agreement_loss(warped);
    t.total = ad::add(ad::add(ad::mul_scalar(t.sim, weights.alpha),
                              ad::mul_scalar(t.structural, weights.beta)),
                      ad::add(ad::mul_scalar(t.reg, weights.gamma),
                              ad::mul_scalar(t.agreement, weights.zeta)));
    return t;
}

double ncc_value(const Tensor& fixed, const Tensor& warped, int window) {
    return ad::scalar(ncc_loss(ad::constant(fixed), ad::constant(warped), window));
}

Tensor ncc_map(const Tensor& fixed, const Tensor& warped, int window) {
    require(fixed.rank() == 2 && fixed.same_shape(warped), "ncc_map: shape mismatch");
    Tensor inv_n = ncc_inv_count(fixed.dim(0), fixed.dim(1), window);
    Tensor sf = kernels::boxsum(fixed, window);
    Tensor sw = kernels::boxsum(warped, window);
    Tensor ff = fixed, ww = warped, fw = fixed;
    for (size_t i = 0; i < ff.numel(); ++i) {
        ff[i] = fixed[i] * fixed[i];
        ww[i] = warped[i] * warped[i];
        fw[i] = fixed[i] * warped[i];
    }
    Tensor sff = kernels::boxsum(ff, window);
    Tensor sww = kernels::boxsum(ww, window);
    Tensor sfw = kernels::boxsum(fw, window);
    Tensor out(fixed.shape());
    for (size_t i = 0; i < out.numel(); ++i) {
        double cross = sfw[i] - sf[i] * sw[i] * inv_n[i];
        double vf = sff[i] - sf[i] * sf[i] * inv_n[i];
        double vw = sww[i] - sw[i] * sw[i] * inv_n[i];
        out[i] = cross * cross / (vf * vw + kNccEps);
    }
    return out;
}

double dice_value(const Tensor& fixed_onehot, const Tensor& warped_onehot) {
    return ad::scalar(dice_loss(ad::constant(fixed_onehot), ad::constant(warped_onehot)));
}

double detjac_value(const Tensor& field) {
    return ad::scalar(detjac_loss(ad::constant(field)));
}

double agreement_value(const std::vector<Tensor>& warped) {
    std::vector<ad::Var> vars;
    vars.reserve(warped.size());
    for (const auto& w : warped) vars.push_back(ad::constant(w));
    return ad::scalar(agreement_loss(vars));
}

}  // namespace imitate::losses
