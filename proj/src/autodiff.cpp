#include "imitate/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace imitate::ad {

Var leaf(Tensor value, bool requires_grad) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    n->requires_grad = requires_grad;
    n->is_leaf = true;
    return n;
}

Var constant(Tensor value) { return leaf(std::move(value), false); }

Var constant_scalar(double v) { return leaf(Tensor::scalar(v), false); }

double scalar(const Var& v) {
    require(v->value.numel() == 1, "expected scalar node");
    return v->value[0];
}

void backward(const Var& root, bool free_graph) {
    require(root->value.numel() == 1, "backward root must be scalar");
    if (!root->requires_grad) return;

    // Iterative post-order DFS: parents first, root last.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, size_t>> stack;
    stack.push_back({root.get(), 0});
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            Node* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.push_back({p, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad.fill(1.0);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backprop && !n->grad.empty()) n->backprop(*n);
        if (free_graph && !n->is_leaf) {
            n->grad = Tensor();
            n->value = Tensor();
            n->backprop = nullptr;
        }
    }
}

double gradcheck(const Tensor& x,
                 const std::function<Var(const Var&)>& make_loss,
                 double step) {
    Var xl = leaf(x, true);
    Var loss = make_loss(xl);
    backward(loss);
    Tensor analytic = xl->grad;

    double max_rel = 0.0;
    Tensor xp = x;
    for (size_t i = 0; i < x.numel(); ++i) {
        double orig = xp[i];
        double h = step * std::max(1.0, std::abs(orig));
        xp[i] = orig + h;
        double fp = scalar(make_loss(leaf(xp, false)));
        xp[i] = orig - h;
        double fm = scalar(make_loss(leaf(xp, false)));
        xp[i] = orig;
        double fd = (fp - fm) / (2.0 * h);
        double a = analytic.empty() ? 0.0 : analytic[i];
        if (std::abs(fd) < 1e-9 && std::abs(a) < 1e-9) continue;  // both zero up to FD noise
        double denom = std::max({std::abs(fd), std::abs(a), 1e-6});
        max_rel = std::max(max_rel, std::abs(fd - a) / denom);
    }
    return max_rel;
}

}  // namespace imitate::ad
