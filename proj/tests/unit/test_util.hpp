#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ldavae/autodiff.hpp"
#include "ldavae/rng.hpp"

namespace testutil {

using ldavae::Rng;
using ldavae::Tensor;
using ldavae::autodiff::Graph;
using ldavae::autodiff::Node;
using ldavae::autodiff::Variable;

inline Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

/// Central finite-difference check of every element of every variable
/// against the analytic gradient. build must rebuild the full forward pass
/// from the variables' current values and return the scalar loss node.
inline bool check_gradients(std::vector<Variable*> vars,
                            const std::function<Node*(Graph&)>& build, double rtol = 1e-4,
                            double atol = 1e-8, double h = 1e-5) {
    for (Variable* v : vars) v->zero_grad();
    {
        Graph g;
        g.backward(build(g));
    }
    auto eval = [&]() {
        Graph g;
        return build(g)->value[0];
    };
    bool ok = true;
    for (Variable* v : vars) {
        for (std::size_t i = 0; i < v->value.numel(); ++i) {
            const double keep = v->value[i];
            v->value[i] = keep + h;
            const double up = eval();
            v->value[i] = keep - h;
            const double down = eval();
            v->value[i] = keep;
            const double fd = (up - down) / (2.0 * h);
            const double an = v->grad[i];
            if (std::fabs(an - fd) > atol + rtol * std::max(std::fabs(an), std::fabs(fd)))
                ok = false;
        }
    }
    return ok;
}

/// Reduces a tensor-valued node to a scalar with fixed random weights so the
/// adjoint seen by the op under test is generic.
inline Node* weighted_sum(Graph& g, Node* out, Rng& rng) {
    Tensor w(out->value.shape);
    for (double& v : w.data) v = rng.uniform(-1.0, 1.0);
    return g.sum(g.mul(out, g.constant(std::move(w))));
}

}  // namespace testutil
