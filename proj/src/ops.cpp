#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "imitate/autodiff.hpp"
#include "imitate/kernels.hpp"

// Feature maps are channels-last {H,W,C}; displacement fields {H,W,2};
// convolution weights are stored GEMM-ready as {Cin*k*k, F} with patch
// order (ki, kj, c), so the forward pass is a single row-major product
// col{N,K} * w{K,F} over pixel-major patches.

namespace imitate::kernels {

namespace {
inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }
}  // namespace

Tensor grid_sample(const Tensor& img, const Tensor& field) {
    require(field.rank() == 3 && field.dim(2) == 2, "field must be {H,W,2}");
    const int H = field.dim(0), W = field.dim(1);
    bool flat = img.rank() == 2;
    require((flat && img.dim(0) == H && img.dim(1) == W) ||
                (img.rank() == 3 && img.dim(0) == H && img.dim(1) == W),
            "image/field shape mismatch");
    const int C = flat ? 1 : img.dim(2);
    Tensor out = Tensor::uninit(img.shape());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            size_t p = static_cast<size_t>(y) * W + x;
            double yy = y + field[2 * p], xx = x + field[2 * p + 1];
            double y0f = std::floor(yy), x0f = std::floor(xx);
            double wy = yy - y0f, wx = xx - x0f;
            int y0 = clampi(static_cast<int>(y0f), 0, H - 1);
            int y1 = clampi(static_cast<int>(y0f) + 1, 0, H - 1);
            int x0 = clampi(static_cast<int>(x0f), 0, W - 1);
            int x1 = clampi(static_cast<int>(x0f) + 1, 0, W - 1);
            const double* r00 = img.data() + (static_cast<size_t>(y0) * W + x0) * C;
            const double* r01 = img.data() + (static_cast<size_t>(y0) * W + x1) * C;
            const double* r10 = img.data() + (static_cast<size_t>(y1) * W + x0) * C;
            const double* r11 = img.data() + (static_cast<size_t>(y1) * W + x1) * C;
            double* o = out.data() + p * C;
            double w00 = (1 - wy) * (1 - wx), w01 = (1 - wy) * wx;
            double w10 = wy * (1 - wx), w11 = wy * wx;
            for (int c = 0; c < C; ++c)
                o[c] = w00 * r00[c] + w01 * r01[c] + w10 * r10[c] + w11 * r11[c];
        }
    }
    return out;
}

Tensor central_diff(const Tensor& x, int axis) {
    require(x.rank() == 2, "central_diff expects {H,W}");
    const int H = x.dim(0), W = x.dim(1);
    Tensor out = Tensor::uninit({H, W});
    if (axis == 0) {
        for (int i = 0; i < H; ++i) {
            int im = std::max(i - 1, 0), ip = std::min(i + 1, H - 1);
            double s = (ip - im == 2) ? 0.5 : 1.0;
            for (int j = 0; j < W; ++j) out.at(i, j) = s * (x.at(ip, j) - x.at(im, j));
        }
    } else {
        for (int i = 0; i < H; ++i) {
            for (int j = 0; j < W; ++j) {
                int jm = std::max(j - 1, 0), jp = std::min(j + 1, W - 1);
                double s = (jp - jm == 2) ? 0.5 : 1.0;
                out.at(i, j) = s * (x.at(i, jp) - x.at(i, jm));
            }
        }
    }
    return out;
}

Tensor central_diff_adjoint(const Tensor& g, int axis) {
    const int H = g.dim(0), W = g.dim(1);
    Tensor out({H, W});
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) {
            double gv = g.at(i, j);
            if (gv == 0.0) continue;
            if (axis == 0) {
                int im = std::max(i - 1, 0), ip = std::min(i + 1, H - 1);
                double s = (ip - im == 2) ? 0.5 : 1.0;
                out.at(ip, j) += s * gv;
                out.at(im, j) -= s * gv;
            } else {
                int jm = std::max(j - 1, 0), jp = std::min(j + 1, W - 1);
                double s = (jp - jm == 2) ? 0.5 : 1.0;
                out.at(i, jp) += s * gv;
                out.at(i, jm) -= s * gv;
            }
        }
    }
    return out;
}

Tensor boxsum(const Tensor& x, int k) {
    require(x.rank() == 2, "boxsum expects {H,W}");
    require(k >= 1 && k % 2 == 1, "boxsum window must be odd");
    const int H = x.dim(0), W = x.dim(1), r = k / 2;
    Tensor rows = Tensor::uninit({H, W});
    for (int i = 0; i < H; ++i) {
        double acc = 0.0;
        for (int j = 0; j < std::min(r + 1, W); ++j) acc += x.at(i, j);
        for (int j = 0; j < W; ++j) {
            rows.at(i, j) = acc;
            int add = j + r + 1, drop = j - r;
            if (add < W) acc += x.at(i, add);
            if (drop >= 0) acc -= x.at(i, drop);
        }
    }
    Tensor out = Tensor::uninit({H, W});
    std::vector<double> acc(static_cast<size_t>(W), 0.0);
    for (int i = 0; i < std::min(r + 1, H); ++i)
        for (int j = 0; j < W; ++j) acc[j] += rows.at(i, j);
    for (int i = 0; i < H; ++i) {
        for (int j = 0; j < W; ++j) out.at(i, j) = acc[j];
        int add = i + r + 1, drop = i - r;
        if (add < H)
            for (int j = 0; j < W; ++j) acc[j] += rows.at(add, j);
        if (drop >= 0)
            for (int j = 0; j < W; ++j) acc[j] -= rows.at(drop, j);
    }
    return out;
}

Tensor field_plane(const Tensor& field, int component) {
    require(field.rank() == 3 && field.dim(2) == 2, "field must be {H,W,2}");
    const int H = field.dim(0), W = field.dim(1);
    Tensor out = Tensor::uninit({H, W});
    for (size_t p = 0; p < out.numel(); ++p) out[p] = field[2 * p + component];
    return out;
}

Tensor jacobian_determinant(const Tensor& field) {
    const int H = field.dim(0), W = field.dim(1);
    require(H >= 3 && W >= 3, "jacobian needs at least a 3x3 grid");
    Tensor u = field_plane(field, 0);
    Tensor v = field_plane(field, 1);
    Tensor uy = central_diff(u, 0), ux = central_diff(u, 1);
    Tensor vy = central_diff(v, 0), vx = central_diff(v, 1);
    Tensor out = Tensor::uninit({H, W});
    for (size_t i = 0; i < out.numel(); ++i)
        out[i] = (1.0 + uy[i]) * (1.0 + vx[i]) - ux[i] * vy[i];
    return out;
}

}  // namespace imitate::kernels

namespace imitate::ad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p->requires_grad;
    n->parents = std::move(parents);
    n->requires_grad = rg;
    if (rg) n->backprop = std::move(bp);
    return n;
}

bool wants(const Node& n, size_t i) { return n.parents[i]->requires_grad; }

Tensor& pgrad(Node& n, size_t i) {
    n.parents[i]->ensure_grad();
    return n.parents[i]->grad;
}

const Tensor& pval(const Node& n, size_t i) { return n.parents[i]->value; }

/// Pixel-major patches: col{N=Ho*Wo, K=k*k*C}, patch order (ki, kj, c).
void im2col(const Tensor& x, int k, int stride, int pad, int Ho, int Wo, double* col) {
    const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
    const int K = k * k * C;
#pragma omp parallel for schedule(static)
    for (int ho = 0; ho < Ho; ++ho) {
        for (int wo = 0; wo < Wo; ++wo) {
            double* row = col + (static_cast<size_t>(ho) * Wo + wo) * K;
            for (int ki = 0; ki < k; ++ki) {
                int iy = ho * stride + ki - pad;
                for (int kj = 0; kj < k; ++kj) {
                    int ix = wo * stride + kj - pad;
                    double* dst = row + (static_cast<size_t>(ki) * k + kj) * C;
                    if (iy < 0 || iy >= H || ix < 0 || ix >= W) {
                        std::fill(dst, dst + C, 0.0);
                    } else {
                        const double* src = x.data() + (static_cast<size_t>(iy) * W + ix) * C;
                        std::copy(src, src + C, dst);
                    }
                }
            }
        }
    }
}

void col2im_accum(const double* col, int H, int W, int C, int k, int stride, int pad,
                  int Ho, int Wo, Tensor& gx) {
    // Threads own disjoint bands of output rows; every thread scans all
    // patches but only writes rows inside its band, so the scatter stays
    // race-free and deterministic.
#pragma omp parallel
    {
        int nth = 1, tid = 0;
#ifdef _OPENMP
        nth = omp_get_num_threads();
        tid = omp_get_thread_num();
#endif
        int y_lo = static_cast<int>(static_cast<long>(H) * tid / nth);
        int y_hi = static_cast<int>(static_cast<long>(H) * (tid + 1) / nth);
        for (int ho = 0; ho < Ho; ++ho) {
            int iy_min = ho * stride - pad;
            if (iy_min >= y_hi || iy_min + k <= y_lo) continue;
            for (int wo = 0; wo < Wo; ++wo) {
                const double* row = col + (static_cast<size_t>(ho) * Wo + wo) * (k * k * C);
                for (int ki = 0; ki < k; ++ki) {
                    int iy = ho * stride + ki - pad;
                    if (iy < y_lo || iy >= y_hi) continue;
                    for (int kj = 0; kj < k; ++kj) {
                        int ix = wo * stride + kj - pad;
                        if (ix < 0 || ix >= W) continue;
                        const double* src = row + (static_cast<size_t>(ki) * k + kj) * C;
                        double* dst = gx.data() + (static_cast<size_t>(iy) * W + ix) * C;
                        for (int c = 0; c < C; ++c) dst[c] += src[c];
                    }
                }
            }
        }
    }
}

}  // namespace

Var add(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "add: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] += b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        for (size_t pi = 0; pi < 2; ++pi) {
            if (!wants(n, pi)) continue;
            Tensor& g = pgrad(n, pi);
            for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "sub: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] -= b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (wants(n, 0)) {
            Tensor& g = pgrad(n, 0);
            for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (wants(n, 1)) {
            Tensor& g = pgrad(n, 1);
            for (size_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "mul: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] *= b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        if (wants(n, 0)) {
            Tensor& g = pgrad(n, 0);
            const Tensor& bv = pval(n, 1);
            for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * bv[i];
        }
        if (wants(n, 1)) {
            Tensor& g = pgrad(n, 1);
            const Tensor& av = pval(n, 0);
            for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * av[i];
        }
    });
}

Var divide(const Var& a, const Var& b) {
    require(a->value.same_shape(b->value), "divide: shape mismatch");
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] /= b->value[i];
    return make_node(std::move(out), {a, b}, [](Node& n) {
        const Tensor& av = pval(n, 0);
        const Tensor& bv = pval(n, 1);
        if (wants(n, 0)) {
            Tensor& g = pgrad(n, 0);
            for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] / bv[i];
        }
        if (wants(n, 1)) {
            Tensor& g = pgrad(n, 1);
            for (size_t i = 0; i < g.numel(); ++i)
                g[i] -= n.grad[i] * av[i] / (bv[i] * bv[i]);
        }
    });
}

Var neg(const Var& a) { return mul_scalar(a, -1.0); }

Var add_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] += s;
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var mul_scalar(const Var& a, double s) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] *= s;
    return make_node(std::move(out), {a}, [s](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (size_t i = 0; i < g.numel(); ++i) g[i] += s * n.grad[i];
    });
}

Var sum(const Var& a) {
    return make_node(Tensor::scalar(a->value.sum()), {a}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        double gv = n.grad[0];
        for (size_t i = 0; i < g.numel(); ++i) g[i] += gv;
    });
}

Var mean(const Var& a) {
    double inv = 1.0 / static_cast<double>(a->value.numel());
    return make_node(Tensor::scalar(a->value.sum() * inv), {a}, [inv](Node& n) {
        Tensor& g = pgrad(n, 0);
        double gv = n.grad[0] * inv;
        for (size_t i = 0; i < g.numel(); ++i) g[i] += gv;
    });
}

Var linear(const Var& x, const Var& w, const Var& b) {
    require(x->value.rank() == 1 && w->value.rank() == 2 && b->value.rank() == 1,
            "linear: expected x{n}, w{m,n}, b{m}");
    const int m = w->value.dim(0), k = w->value.dim(1);
    require(x->value.dim(0) == k && b->value.dim(0) == m, "linear: dimension mismatch");
    Tensor out({m});
    CMatMap wm(w->value.data(), m, k);
    Eigen::Map<const Eigen::VectorXd> xv(x->value.data(), k);
    Eigen::Map<Eigen::VectorXd> ov(out.data(), m);
    ov.noalias() = wm * xv;
    for (int i = 0; i < m; ++i) out[i] += b->value[i];
    return make_node(std::move(out), {x, w, b}, [m, k](Node& n) {
        Eigen::Map<const Eigen::VectorXd> gv(n.grad.data(), m);
        if (wants(n, 0)) {
            CMatMap wm(pval(n, 1).data(), m, k);
            Eigen::Map<Eigen::VectorXd> gx(pgrad(n, 0).data(), k);
            gx.noalias() += wm.transpose() * gv;
        }
        if (wants(n, 1)) {
            Eigen::Map<const Eigen::VectorXd> xv(pval(n, 0).data(), k);
            MatMap gw(pgrad(n, 1).data(), m, k);
            gw.noalias() += gv * xv.transpose();
        }
        if (wants(n, 2)) {
            Tensor& gb = pgrad(n, 2);
            for (int i = 0; i < m; ++i) gb[i] += n.grad[i];
        }
    });
}

Var slice_vec(const Var& x, int from, int to) {
    require(x->value.rank() == 1 && from >= 0 && to <= x->value.dim(0) && from < to,
            "slice_vec: bad range");
    Tensor out({to - from});
    for (int i = from; i < to; ++i) out[i - from] = x->value[i];
    return make_node(std::move(out), {x}, [from, to](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (int i = from; i < to; ++i) g[i] += n.grad[i - from];
    });
}

Var concat_vec(const std::vector<Var>& xs) {
    require(!xs.empty(), "concat_vec: empty list");
    int total = 0;
    for (const auto& x : xs) {
        require(x->value.rank() == 1, "concat_vec: expected vectors");
        total += x->value.dim(0);
    }
    Tensor out({total});
    int off = 0;
    for (const auto& x : xs) {
        for (int i = 0; i < x->value.dim(0); ++i) out[off + i] = x->value[i];
        off += x->value.dim(0);
    }
    std::vector<Var> parents(xs.begin(), xs.end());
    return make_node(std::move(out), std::move(parents), [](Node& n) {
        int off = 0;
        for (size_t pi = 0; pi < n.parents.size(); ++pi) {
            int len = pval(n, pi).dim(0);
            if (wants(n, pi)) {
                Tensor& g = pgrad(n, pi);
                for (int i = 0; i < len; ++i) g[i] += n.grad[off + i];
            }
            off += len;
        }
    });
}

Var relu(const Var& a) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] = std::max(out[i], 0.0);
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        const Tensor& x = pval(n, 0);
        for (size_t i = 0; i < g.numel(); ++i)
            if (x[i] > 0.0) g[i] += n.grad[i];
    });
}

Var leaky_relu(const Var& a, double slope) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i)
        if (out[i] < 0.0) out[i] *= slope;
    return make_node(std::move(out), {a}, [slope](Node& n) {
        Tensor& g = pgrad(n, 0);
        const Tensor& x = pval(n, 0);
        for (size_t i = 0; i < g.numel(); ++i)
            g[i] += n.grad[i] * (x[i] > 0.0 ? 1.0 : slope);
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a->value;
    for (size_t i = 0; i < out.numel(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    return make_node(std::move(out), {a}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (size_t i = 0; i < g.numel(); ++i) {
            double s = n.value[i];
            g[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

Var reshape(const Var& x, std::vector<int> shape) {
    Tensor out = x->value.reshaped(std::move(shape));
    return make_node(std::move(out), {x}, [](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (size_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var conv2d(const Var& x, const Var& w, const Var& b, int stride, int pad) {
    require(x->value.rank() == 3 && w->value.rank() == 2,
            "conv2d: expected x{H,W,C}, w{k*k*C,F}");
    const int H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
    const int K = w->value.dim(0), F = w->value.dim(1);
    require(K % C == 0, "conv2d: kernel rows not a multiple of C");
    const int ksq = K / C;
    const int k = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ksq))));
    require(k * k == ksq, "conv2d: kernel is not square");
    require(b->value.rank() == 1 && b->value.dim(0) == F, "conv2d: bias mismatch");
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    require(Ho > 0 && Wo > 0, "conv2d: empty output");
    const size_t N = static_cast<size_t>(Ho) * Wo;

    auto col = std::make_unique_for_overwrite<double[]>(N * K);
    im2col(x->value, k, stride, pad, Ho, Wo, col.get());

    Tensor out = Tensor::uninit({Ho, Wo, F});
    {
        CMatMap cm(col.get(), static_cast<Eigen::Index>(N), K);
        CMatMap wm(w->value.data(), K, F);
        MatMap om(out.data(), static_cast<Eigen::Index>(N), F);
        om.noalias() = cm * wm;
    }
    col.reset();
    for (size_t p = 0; p < N; ++p) {
        double* o = out.data() + p * F;
        for (int f = 0; f < F; ++f) o[f] += b->value[f];
    }

    auto bp = [H, W, C, F, K, k, stride, pad, Ho, Wo, N](Node& n) {
        CMatMap gout(n.grad.data(), static_cast<Eigen::Index>(N), F);
        if (wants(n, 2)) {
            Tensor& gb = pgrad(n, 2);
            for (int f = 0; f < F; ++f) gb[f] += gout.col(f).sum();
        }
        if (wants(n, 1)) {
            auto col = std::make_unique_for_overwrite<double[]>(N * K);
            im2col(pval(n, 0), k, stride, pad, Ho, Wo, col.get());
            CMatMap cm(col.get(), static_cast<Eigen::Index>(N), K);
            MatMap gw(pgrad(n, 1).data(), K, F);
            gw.noalias() += cm.transpose() * gout;
        }
        if (wants(n, 0)) {
            Mat wcopy = CMatMap(pval(n, 1).data(), K, F).transpose();  // {F,K}
            auto gcol = std::make_unique_for_overwrite<double[]>(N * K);
            MatMap gc(gcol.get(), static_cast<Eigen::Index>(N), K);
            gc.noalias() = gout * MatMap(wcopy.data(), F, K);
            col2im_accum(gcol.get(), H, W, C, k, stride, pad, Ho, Wo, pgrad(n, 0));
        }
    };
    return make_node(std::move(out), {x, w, b}, std::move(bp));
}

Var upsample2_nearest(const Var& x) {
    require(x->value.rank() == 3, "upsample2: expected {H,W,C}");
    const int H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
    Tensor out = Tensor::uninit({2 * H, 2 * W, C});
    for (int y = 0; y < 2 * H; ++y) {
        for (int xx = 0; xx < 2 * W; ++xx) {
            const double* src = x->value.data() + (static_cast<size_t>(y / 2) * W + xx / 2) * C;
            double* dst = out.data() + (static_cast<size_t>(y) * 2 * W + xx) * C;
            std::copy(src, src + C, dst);
        }
    }
    return make_node(std::move(out), {x}, [H, W, C](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (int y = 0; y < 2 * H; ++y) {
            for (int xx = 0; xx < 2 * W; ++xx) {
                const double* src = n.grad.data() + (static_cast<size_t>(y) * 2 * W + xx) * C;
                double* dst = g.data() + (static_cast<size_t>(y / 2) * W + xx / 2) * C;
                for (int c = 0; c < C; ++c) dst[c] += src[c];
            }
        }
    });
}

Var concat_ch(const Var& a, const Var& b) {
    require(a->value.rank() == 3 && b->value.rank() == 3 &&
                a->value.dim(0) == b->value.dim(0) && a->value.dim(1) == b->value.dim(1),
            "concat_ch: spatial mismatch");
    const int H = a->value.dim(0), W = a->value.dim(1);
    const int Ca = a->value.dim(2), Cb = b->value.dim(2);
    const size_t N = static_cast<size_t>(H) * W;
    Tensor out = Tensor::uninit({H, W, Ca + Cb});
    for (size_t p = 0; p < N; ++p) {
        std::copy(a->value.data() + p * Ca, a->value.data() + (p + 1) * Ca,
                  out.data() + p * (Ca + Cb));
        std::copy(b->value.data() + p * Cb, b->value.data() + (p + 1) * Cb,
                  out.data() + p * (Ca + Cb) + Ca);
    }
    return make_node(std::move(out), {a, b}, [Ca, Cb, N](Node& n) {
        if (wants(n, 0)) {
            Tensor& g = pgrad(n, 0);
            for (size_t p = 0; p < N; ++p)
                for (int c = 0; c < Ca; ++c) g[p * Ca + c] += n.grad[p * (Ca + Cb) + c];
        }
        if (wants(n, 1)) {
            Tensor& g = pgrad(n, 1);
            for (size_t p = 0; p < N; ++p)
                for (int c = 0; c < Cb; ++c) g[p * Cb + c] += n.grad[p * (Ca + Cb) + Ca + c];
        }
    });
}

Var slice_ch(const Var& x, int from, int to) {
    require(x->value.rank() == 3 && from >= 0 && to <= x->value.dim(2) && from < to,
            "slice_ch: bad range");
    const int H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
    const int L = to - from;
    const size_t N = static_cast<size_t>(H) * W;
    Tensor out = Tensor::uninit({H, W, L});
    for (size_t p = 0; p < N; ++p)
        std::copy(x->value.data() + p * C + from, x->value.data() + p * C + to,
                  out.data() + p * L);
    return make_node(std::move(out), {x}, [from, C, L, N](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (size_t p = 0; p < N; ++p)
            for (int c = 0; c < L; ++c) g[p * C + from + c] += n.grad[p * L + c];
    });
}

Var slice_plane(const Var& x, int channel) {
    require(x->value.rank() == 3 && channel >= 0 && channel < x->value.dim(2),
            "slice_plane: bad channel");
    const int H = x->value.dim(0), W = x->value.dim(1), C = x->value.dim(2);
    const size_t N = static_cast<size_t>(H) * W;
    Tensor out = Tensor::uninit({H, W});
    for (size_t p = 0; p < N; ++p) out[p] = x->value[p * C + channel];
    return make_node(std::move(out), {x}, [channel, C, N](Node& n) {
        Tensor& g = pgrad(n, 0);
        for (size_t p = 0; p < N; ++p) g[p * C + channel] += n.grad[p];
    });
}

Var grid_sample(const Var& img, const Var& field) {
    Tensor out = kernels::grid_sample(img->value, field->value);
    const int H = field->value.dim(0), W = field->value.dim(1);
    const int C = img->value.rank() == 2 ? 1 : img->value.dim(2);
    auto bp = [C, H, W](Node& n) {
        const Tensor& img = pval(n, 0);
        const Tensor& field = pval(n, 1);
        bool need_img = wants(n, 0);
        bool need_field = wants(n, 1);
        Tensor* gimg = need_img ? &pgrad(n, 0) : nullptr;
        Tensor* gfield = need_field ? &pgrad(n, 1) : nullptr;
        for (int y = 0; y < H; ++y) {
            for (int x = 0; x < W; ++x) {
                size_t p = static_cast<size_t>(y) * W + x;
                double yy = y + field[2 * p], xx = x + field[2 * p + 1];
                double y0f = std::floor(yy), x0f = std::floor(xx);
                double wy = yy - y0f, wx = xx - x0f;
                int y0 = clampi(static_cast<int>(y0f), 0, H - 1);
                int y1 = clampi(static_cast<int>(y0f) + 1, 0, H - 1);
                int x0 = clampi(static_cast<int>(x0f), 0, W - 1);
                int x1 = clampi(static_cast<int>(x0f) + 1, 0, W - 1);
                size_t p00 = (static_cast<size_t>(y0) * W + x0) * C;
                size_t p01 = (static_cast<size_t>(y0) * W + x1) * C;
                size_t p10 = (static_cast<size_t>(y1) * W + x0) * C;
                size_t p11 = (static_cast<size_t>(y1) * W + x1) * C;
                double du = 0.0, dv = 0.0;
                for (int c = 0; c < C; ++c) {
                    double g = n.grad[p * C + c];
                    double i00 = img[p00 + c], i01 = img[p01 + c];
                    double i10 = img[p10 + c], i11 = img[p11 + c];
                    if (need_field) {
                        du += g * ((1 - wx) * (i10 - i00) + wx * (i11 - i01));
                        dv += g * ((1 - wy) * (i01 - i00) + wy * (i11 - i10));
                    }
                    if (need_img) {
                        double* gi = gimg->data();
                        gi[p00 + c] += g * (1 - wy) * (1 - wx);
                        gi[p01 + c] += g * (1 - wy) * wx;
                        gi[p10 + c] += g * wy * (1 - wx);
                        gi[p11 + c] += g * wy * wx;
                    }
                }
                if (need_field) {
                    gfield->data()[2 * p] += du;
                    gfield->data()[2 * p + 1] += dv;
                }
            }
        }
    };
    return make_node(std::move(out), {img, field}, std::move(bp));
}

Var central_diff(const Var& x, int axis) {
    Tensor out = kernels::central_diff(x->value, axis);
    return make_node(std::move(out), {x}, [axis](Node& n) {
        Tensor adj = kernels::central_diff_adjoint(n.grad, axis);
        Tensor& g = pgrad(n, 0);
        for (size_t i = 0; i < g.numel(); ++i) g[i] += adj[i];
    });
}

Var boxsum(const Var& x, int k) {
    Tensor out = kernels::boxsum(x->value, k);
    return make_node(std::move(out), {x}, [k](Node& n) {
        Tensor adj = kernels::boxsum(n.grad, k);
        Tensor& g = pgrad(n, 0);
        for (size_t i = 0; i < g.numel(); ++i) g[i] += adj[i];
    });
}

Var channel_affine(const Var& x, const Var& scale, const Var& shift) {
    require(x->value.rank() == 3, "channel_affine: expected {H,W,C}");
    const int C = x->value.dim(2);
    require(scale->value.numel() == static_cast<size_t>(C) &&
                shift->value.numel() == static_cast<size_t>(C),
            "channel_affine: per-channel parameter mismatch");
    const size_t N = x->value.numel() / C;
    Tensor out = Tensor::uninit(x->value.shape());
    for (size_t p = 0; p < N; ++p) {
        const double* xp = x->value.data() + p * C;
        double* op = out.data() + p * C;
        for (int c = 0; c < C; ++c) op[c] = xp[c] * scale->value[c] + shift->value[c];
    }
    return make_node(std::move(out), {x, scale, shift}, [C, N](Node& n) {
        const Tensor& x = pval(n, 0);
        const Tensor& scale = pval(n, 1);
        bool w0 = wants(n, 0), w1 = wants(n, 1), w2 = wants(n, 2);
        Tensor* gx = w0 ? &pgrad(n, 0) : nullptr;
        Tensor* gs = w1 ? &pgrad(n, 1) : nullptr;
        Tensor* gt = w2 ? &pgrad(n, 2) : nullptr;
        for (size_t p = 0; p < N; ++p) {
            const double* gp = n.grad.data() + p * C;
            const double* xp = x.data() + p * C;
            for (int c = 0; c < C; ++c) {
                if (w0) gx->data()[p * C + c] += gp[c] * scale[c];
                if (w1) gs->data()[c] += gp[c] * xp[c];
                if (w2) gt->data()[c] += gp[c];
            }
        }
    });
}

Var gate_mul(const Var& x, const Var& g) {
    require(x->value.rank() == 3 && g->value.rank() == 3 && g->value.dim(2) == 1 &&
                g->value.dim(0) == x->value.dim(0) && g->value.dim(1) == x->value.dim(1),
            "gate_mul: expected x{H,W,C}, g{H,W,1}");
    const int C = x->value.dim(2);
    const size_t N = x->value.numel() / C;
    Tensor out = Tensor::uninit(x->value.shape());
    for (size_t p = 0; p < N; ++p) {
        double gv = g->value[p];
        const double* xp = x->value.data() + p * C;
        double* op = out.data() + p * C;
        for (int c = 0; c < C; ++c) op[c] = xp[c] * gv;
    }
    return make_node(std::move(out), {x, g}, [C, N](Node& n) {
        const Tensor& x = pval(n, 0);
        const Tensor& g = pval(n, 1);
        if (wants(n, 0)) {
            Tensor& gx = pgrad(n, 0);
            for (size_t p = 0; p < N; ++p) {
                double gv = g[p];
                for (int c = 0; c < C; ++c) gx[p * C + c] += n.grad[p * C + c] * gv;
            }
        }
        if (wants(n, 1)) {
            Tensor& gg = pgrad(n, 1);
            for (size_t p = 0; p < N; ++p) {
                double acc = 0.0;
                for (int c = 0; c < C; ++c) acc += n.grad[p * C + c] * x[p * C + c];
                gg[p] += acc;
            }
        }
    });
}

Var mse(const Var& a, const Var& b) {
    Var d = sub(a, b);
    return mean(mul(d, d));
}

}  // namespace imitate::ad
