#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "uegan/ops.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

struct GradCheckReport {
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

using GradFn =
    std::function<TensorPtr<double>(GraphT<double>&, const std::vector<TensorPtr<double>>&)>;

/// Compares analytic gradients against central finite differences. The
/// checked subgraph runs in 64-bit so the differences stay meaningful.
inline GradCheckReport grad_check_multi(const GradFn& f, std::vector<TensorPtr<double>> xs,
                                        double h, double tol) {
    if (h < 1e-4 || h > 1e-2) throw ContractError("grad_check: h must be in [1e-4, 1e-2]");
    for (auto& x : xs) {
        x->requires_grad = true;
        x->zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        GraphT<double> g;
        auto loss = f(g, xs);
        if (!loss->is_scalar()) throw ContractError("grad_check: f must be scalar-valued");
        g.backward(loss);
        for (auto& x : xs) {
            x->ensure_grad();
            analytic.push_back(x->grad);
        }
    }
    auto eval = [&](const std::vector<TensorPtr<double>>& inputs) {
        GraphT<double> g;
        g.grad_enabled = false;
        std::vector<TensorPtr<double>> frozen;
        frozen.reserve(inputs.size());
        for (auto& x : inputs) frozen.push_back(g.constant(*x));
        return f(g, frozen)->data[0];
    };
    GradCheckReport report;
    report.tol = tol;
    for (std::size_t xi = 0; xi < xs.size(); ++xi) {
        auto& x = xs[xi];
        for (std::size_t i = 0; i < x->size(); ++i) {
            double orig = x->data[i];
            x->data[i] = orig + h;
            double fp = eval(xs);
            x->data[i] = orig - h;
            double fm = eval(xs);
            x->data[i] = orig;
            double numeric = (fp - fm) / (2.0 * h);
            double a = analytic[xi][i];
            double scale = std::max(std::abs(a), std::abs(numeric));
            double rel = scale < 1e-6 ? 0.0 : std::abs(a - numeric) / std::max(scale, 1e-4);
            if (rel > report.max_rel_err) report.max_rel_err = rel;
        }
    }
    report.pass = report.max_rel_err <= tol;
    return report;
}

inline GradCheckReport grad_check(
    const std::function<TensorPtr<double>(GraphT<double>&, const TensorPtr<double>&)>& f,
    const TensorPtr<double>& x, double h, double tol) {
    return grad_check_multi(
        [&f](GraphT<double>& g, const std::vector<TensorPtr<double>>& xs) { return f(g, xs[0]); },
        {x}, h, tol);
}

/// Random tensor with entries in [-2, 2], nudged away from relu kinks by >= h.
template <typename T>
TensorPtr<T> random_tensor(int n, int c, int h, int w, Rng& rng, double margin = 2e-3) {
    auto t = make_tensor<T>(n, c, h, w);
    for (auto& v : t->data) {
        double x = rng.uniform(-2.0, 2.0);
        if (std::abs(x) < margin) x = x < 0 ? -margin : margin;
        v = static_cast<T>(x);
    }
    return t;
}

}  // namespace uegan
