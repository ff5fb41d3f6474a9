#pragma once

#include <cmath>
#include <functional>

#include "dentalign/graph.hpp"

namespace dentalign::ad {

// A scalar function expressed as a graph builder: given a graph and the leaf
// holding x, return the scalar output node.
using ScalarFn = std::function<Var(Graph&, Var)>;

// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
// The numeric side re-evaluates the builder on perturbed copies of x, so it is
// independent of the backward pass it checks.
inline double finite_difference_check(const ScalarFn& f, const Tensor& x, double step) {
    if (step <= 0) throw ContractError("finite_difference_check requires step > 0");

    Tensor leaf_val = x;
    leaf_val.requires_grad = true;
    Graph g;
    Var leaf = g.leaf(leaf_val);
    Var out = f(g, leaf);
    GradientMap grads = g.backward(out);
    const Tensor& analytic = grads.at(leaf);

    auto eval = [&](const Tensor& probe) {
        Graph h;
        Var l = h.leaf(probe);
        Var o = f(h, l);
        const double v = h.value(o).data[0];
        if (!std::isfinite(v)) throw NumericalError("non-finite value in finite-difference probe");
        return v;
    };

    Tensor probe = x;
    probe.requires_grad = false;
    double worst = 0.0;
    for (std::size_t i = 0; i < probe.data.size(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + step;
        const double fp = eval(probe);
        probe.data[i] = orig - step;
        const double fm = eval(probe);
        probe.data[i] = orig;
        const double numeric = (fp - fm) / (2.0 * step);
        const double a = analytic.data[i];
        const double err = std::abs(a - numeric) / std::max(1.0, std::abs(a));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace dentalign::ad
