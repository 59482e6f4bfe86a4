#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "uegan/common.hpp"

namespace uegan {

/// Dense rank-4 tensor (N, C, H, W), row-major, with an optional gradient
/// buffer of the same shape.
template <typename T>
struct TensorT {
    int n = 1, c = 1, h = 1, w = 1;
    std::vector<T> data;
    std::vector<T> grad;
    bool requires_grad = false;
    // biases and norm scales opt out of weight decay (decaying batch-norm
    // gammas toward zero shrinks every downstream activation)
    bool decay_exempt = false;

    TensorT() = default;
    TensorT(int n_, int c_, int h_, int w_, bool rg = false)
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, T(0)),
          requires_grad(rg) {
        if (n_ < 1 || c_ < 1 || h_ < 1 || w_ < 1) {
            throw DimensionError("tensor dims must be positive");
        }
    }

    std::size_t size() const { return data.size(); }
    bool is_scalar() const { return size() == 1; }

    std::size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix;
    }
    T& at(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
    T at(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }

    bool same_shape(const TensorT& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    std::string shape_str() const {
        return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
               std::to_string(w);
    }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), T(0));
    }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    /// Lossy conversion between scalar widths (float training path vs the
    /// double path used by the finite-difference checks).
    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(n, c, h, w, requires_grad);
        out.decay_exempt = decay_exempt;
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

template <typename T>
using TensorPtr = std::shared_ptr<TensorT<T>>;

template <typename T>
TensorPtr<T> make_tensor(int n, int c, int h, int w, bool requires_grad = false) {
    return std::make_shared<TensorT<T>>(n, c, h, w, requires_grad);
}

template <typename T>
TensorPtr<T> make_tensor(int n, int c, int h, int w, const std::vector<T>& values,
                         bool requires_grad = false) {
    auto t = make_tensor<T>(n, c, h, w, requires_grad);
    if (values.size() != t->size()) throw DimensionError("value count does not match shape");
    t->data = values;
    return t;
}

using Tensor = TensorT<float>;
using TensorP = TensorPtr<float>;

}  // namespace uegan
