#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "imitate/tensor.hpp"

namespace imitate::ad {

/// One node of a dynamically built computation graph. Values are computed
/// eagerly; backward() replays the tape in reverse topological order.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool is_leaf = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;

    void ensure_grad() {
        if (grad.empty()) grad = Tensor(value.shape());
    }
};

using Var = std::shared_ptr<Node>;

Var leaf(Tensor value, bool requires_grad = false);
Var constant(Tensor value);
Var constant_scalar(double v);

/// Reverse-mode sweep from a scalar root. When free_graph is set, interior
/// values and gradients are released as soon as they are consumed; leaf
/// gradients survive.
void backward(const Var& root, bool free_graph = false);

double scalar(const Var& v);

// ---- primitive ops ------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var divide(const Var& a, const Var& b);
Var neg(const Var& a);
Var add_scalar(const Var& a, double s);
Var mul_scalar(const Var& a, double s);
Var sum(const Var& a);
Var mean(const Var& a);

/// x:{n}, w:{m,n}, b:{m} -> {m}
Var linear(const Var& x, const Var& w, const Var& b);
Var slice_vec(const Var& x, int from, int to);
Var concat_vec(const std::vector<Var>& xs);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);

/// View with a new shape; element count must match.
Var reshape(const Var& x, std::vector<int> shape);

/// Feature maps are channels-last. x:{H,W,C}; w:{k*k*C, F} with patch order
/// (ki, kj, c); b:{F}; zero padding, square kernel.
Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad);
Var upsample2_nearest(const Var& x);
Var concat_ch(const Var& a, const Var& b);
Var slice_ch(const Var& x, int from, int to);
/// One channel of a {H,W,C} map as a {H,W} grid.
Var slice_plane(const Var& x, int channel);

/// Backward warping with bilinear interpolation and border clamping.
/// img:{H,W} or {H,W,C}, field:{H,W,2} (row, col displacements in pixels).
Var grid_sample(const Var& img, const Var& field);

/// Central differences in the interior, one-sided at the borders.
/// x:{H,W}; axis 0 = rows, 1 = cols.
Var central_diff(const Var& x, int axis);

/// Sum over a k x k window centered at each pixel, zero padded. x:{H,W}.
Var boxsum(const Var& x, int k);

/// out(h,w,c) = x(h,w,c) * scale(c) + shift(c)
Var channel_affine(const Var& x, const Var& scale, const Var& shift);

/// out(h,w,c) = x(h,w,c) * g(h,w,0)
Var gate_mul(const Var& x, const Var& g);

// ---- composites ---------------------------------------------------------
Var mse(const Var& a, const Var& b);

/// Finite-difference gradient check helper: returns max relative error of
/// d(loss)/d(x) against central differences, where make_loss rebuilds the
/// scalar loss from a fresh leaf each call.
double gradcheck(const Tensor& x,
                 const std::function<Var(const Var&)>& make_loss,
                 double step = 1e-5);

}  // namespace imitate::ad
