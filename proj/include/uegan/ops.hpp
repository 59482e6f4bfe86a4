#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "uegan/common.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

enum class Activation { Relu, LeakyRelu, Sigmoid };

namespace detail {

// C(MxN) = A(MxK) * B(KxN); accumulate adds into C.
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t N,
             bool accumulate) {
    parallel_for(M, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            T* crow = C + i * N;
            if (!accumulate) std::fill(crow, crow + N, T(0));
            const T* arow = A + i * K;
            for (std::size_t k = 0; k < K; ++k) {
                T a = arow[k];
                if (a == T(0)) continue;
                const T* brow = B + k * N;
                for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
            }
        }
    });
}

// C(MxN) = A^T * B where A is stored (KxM), B is (KxN).
template <typename T>
void gemm_tn(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t N,
             bool accumulate) {
    parallel_for(M, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            T* crow = C + i * N;
            if (!accumulate) std::fill(crow, crow + N, T(0));
            for (std::size_t k = 0; k < K; ++k) {
                T a = A[k * M + i];
                if (a == T(0)) continue;
                const T* brow = B + k * N;
                for (std::size_t j = 0; j < N; ++j) crow[j] += a * brow[j];
            }
        }
    });
}

// C(MxN) = A * B^T where A is (MxK), B is stored (NxK).
template <typename T>
void gemm_nt(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t N,
             bool accumulate) {
    parallel_for(M, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const T* arow = A + i * K;
            T* crow = C + i * N;
            for (std::size_t j = 0; j < N; ++j) {
                const T* brow = B + j * K;
                T acc = T(0);
                for (std::size_t k = 0; k < K; ++k) acc += arow[k] * brow[k];
                if (accumulate) crow[j] += acc; else crow[j] = acc;
            }
        }
    });
}

struct ConvGeom {
    int in_h, in_w, out_h, out_w, k, stride, pad, dil;
};

// Unrolls one sample (C,H,W) into (C*k*k, out_h*out_w) for the given conv
// geometry. Out-of-bounds taps are zero.
template <typename T>
void im2col(const T* x, int channels, const ConvGeom& g, T* cols) {
    std::size_t ohw = static_cast<std::size_t>(g.out_h) * g.out_w;
    for (int c = 0; c < channels; ++c) {
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                T* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * ohw;
                const T* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
                std::size_t o = 0;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    int iy = oy * g.stride - g.pad + ky * g.dil;
                    if (iy < 0 || iy >= g.in_h) {
                        for (int ox = 0; ox < g.out_w; ++ox) row[o++] = T(0);
                        continue;
                    }
                    for (int ox = 0; ox < g.out_w; ++ox) {
                        int ix = ox * g.stride - g.pad + kx * g.dil;
                        row[o++] = (ix >= 0 && ix < g.in_w) ? xc[iy * g.in_w + ix] : T(0);
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds column entries back into (C,H,W).
template <typename T>
void col2im_add(const T* cols, int channels, const ConvGeom& g, T* x) {
    std::size_t ohw = static_cast<std::size_t>(g.out_h) * g.out_w;
    for (int c = 0; c < channels; ++c) {
        T* xc = x + static_cast<std::size_t>(c) * g.in_h * g.in_w;
        for (int ky = 0; ky < g.k; ++ky) {
            for (int kx = 0; kx < g.k; ++kx) {
                const T* row = cols + ((static_cast<std::size_t>(c) * g.k + ky) * g.k + kx) * ohw;
                std::size_t o = 0;
                for (int oy = 0; oy < g.out_h; ++oy) {
                    int iy = oy * g.stride - g.pad + ky * g.dil;
                    if (iy < 0 || iy >= g.in_h) {
                        o += static_cast<std::size_t>(g.out_w);
                        continue;
                    }
                    for (int ox = 0; ox < g.out_w; ++ox, ++o) {
                        int ix = ox * g.stride - g.pad + kx * g.dil;
                        if (ix >= 0 && ix < g.in_w) xc[iy * g.in_w + ix] += row[o];
                    }
                }
            }
        }
    }
}

}  // namespace detail

/// Define-by-run tape. Ops append backward closures in creation order;
/// backward() replays them in exact reverse order.
template <typename T>
class GraphT {
public:
    using TP = TensorPtr<T>;

    bool grad_enabled = true;

    TP leaf(int n, int c, int h, int w, bool requires_grad = false) {
        return make_tensor<T>(n, c, h, w, requires_grad);
    }

    TP constant(const TensorT<T>& t) {
        auto out = std::make_shared<TensorT<T>>(t);
        out->requires_grad = false;
        out->grad.clear();
        return out;
    }

    /// Copy with the gradient path severed.
    TP detach(const TP& x) { return constant(*x); }

    std::size_t node_count() const { return tape_.size(); }

    void clear() {
        tape_.clear();
        outputs_.clear();
    }

    // ---- elementwise ----

    TP add(const TP& a, const TP& b) {
        require_same(a, b, "add");
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + b->data[i];
        record(out, {a, b}, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += out->grad[i];
            }
        });
        return out;
    }

    TP sub(const TP& a, const TP& b) {
        require_same(a, b, "sub");
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] - b->data[i];
        record(out, {a, b}, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] -= out->grad[i];
            }
        });
        return out;
    }

    /// Elementwise product. Either operand may have C == 1 while the other has
    /// C > 1 (attention maps broadcast across the channel axis).
    TP mul(const TP& a, const TP& b) {
        if (a->same_shape(*b)) {
            TP out = like(a);
            for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * b->data[i];
            record(out, {a, b}, [a, b, out] {
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < a->size(); ++i)
                        a->grad[i] += out->grad[i] * b->data[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < b->size(); ++i)
                        b->grad[i] += out->grad[i] * a->data[i];
                }
            });
            return out;
        }
        if (b->c == 1 && a->c > 1 && a->n == b->n && a->h == b->h && a->w == b->w) {
            return mul_broadcast(a, b);
        }
        if (a->c == 1 && b->c > 1 && a->n == b->n && a->h == b->h && a->w == b->w) {
            return mul_broadcast(b, a);
        }
        throw DimensionError("mul: incompatible shapes " + a->shape_str() + " vs " +
                             b->shape_str());
    }

    TP div(const TP& a, const TP& b) {
        require_same(a, b, "div");
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] / b->data[i];
        record(out, {a, b}, [a, b, out] {
            if (a->requires_grad) {
                a->ensure_grad();
                for (std::size_t i = 0; i < a->size(); ++i)
                    a->grad[i] += out->grad[i] / b->data[i];
            }
            if (b->requires_grad) {
                b->ensure_grad();
                for (std::size_t i = 0; i < b->size(); ++i)
                    b->grad[i] -= out->grad[i] * a->data[i] / (b->data[i] * b->data[i]);
            }
        });
        return out;
    }

    TP scale(const TP& a, T k) {
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] * k;
        record(out, {a}, [a, out, k] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] * k;
        });
        return out;
    }

    TP add_scalar(const TP& a, T k) {
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = a->data[i] + k;
        record(out, {a}, [a, out] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i];
        });
        return out;
    }

    TP one_minus(const TP& a) { return add_scalar(scale(a, T(-1)), T(1)); }

    TP abs(const TP& a) {
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = std::abs(a->data[i]);
        record(out, {a}, [a, out] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) {
                T s = a->data[i] > T(0) ? T(1) : (a->data[i] < T(0) ? T(-1) : T(0));
                a->grad[i] += out->grad[i] * s;
            }
        });
        return out;
    }

    TP log(const TP& a) {
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = std::log(a->data[i]);
        record(out, {a}, [a, out] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += out->grad[i] / a->data[i];
        });
        return out;
    }

    TP clamp(const TP& a, T lo, T hi) {
        TP out = like(a);
        for (std::size_t i = 0; i < a->size(); ++i)
            out->data[i] = std::min(hi, std::max(lo, a->data[i]));
        record(out, {a}, [a, out, lo, hi] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (std::size_t i = 0; i < a->size(); ++i) {
                if (a->data[i] >= lo && a->data[i] <= hi) a->grad[i] += out->grad[i];
            }
        });
        return out;
    }

    TP activation(const TP& a, Activation kind, T slope = T(0.2)) {
        TP out = like(a);
        switch (kind) {
            case Activation::Relu:
                for (std::size_t i = 0; i < a->size(); ++i)
                    out->data[i] = a->data[i] > T(0) ? a->data[i] : T(0);
                break;
            case Activation::LeakyRelu:
                for (std::size_t i = 0; i < a->size(); ++i)
                    out->data[i] = a->data[i] > T(0) ? a->data[i] : slope * a->data[i];
                break;
            case Activation::Sigmoid:
                for (std::size_t i = 0; i < a->size(); ++i) out->data[i] = sigmoid_val(a->data[i]);
                break;
        }
        record(out, {a}, [a, out, kind, slope] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            switch (kind) {
                case Activation::Relu:
                    // Subgradient at 0 is the positive-side slope.
                    for (std::size_t i = 0; i < a->size(); ++i)
                        if (a->data[i] >= T(0)) a->grad[i] += out->grad[i];
                    break;
                case Activation::LeakyRelu:
                    for (std::size_t i = 0; i < a->size(); ++i)
                        a->grad[i] += out->grad[i] * (a->data[i] >= T(0) ? T(1) : slope);
                    break;
                case Activation::Sigmoid:
                    for (std::size_t i = 0; i < a->size(); ++i) {
                        T y = out->data[i];
                        a->grad[i] += out->grad[i] * y * (T(1) - y);
                    }
                    break;
            }
        });
        return out;
    }

    TP relu(const TP& a) { return activation(a, Activation::Relu); }
    TP leaky_relu(const TP& a, T slope = T(0.2)) {
        return activation(a, Activation::LeakyRelu, slope);
    }
    TP sigmoid(const TP& a) { return activation(a, Activation::Sigmoid); }

    // ---- reductions ----

    TP sum(const TP& a) {
        TP out = leaf(1, 1, 1, 1);
        T acc = T(0);
        for (T v : a->data) acc += v;
        out->data[0] = acc;
        record(out, {a}, [a, out] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            T g = out->grad[0];
            for (std::size_t i = 0; i < a->size(); ++i) a->grad[i] += g;
        });
        return out;
    }

    TP mean(const TP& a) {
        TP s = sum(a);
        return scale(s, T(1) / static_cast<T>(a->size()));
    }

    // ---- shape ops ----

    TP concat_channels(const std::vector<TP>& parts) {
        if (parts.empty()) throw DimensionError("concat: empty input list");
        int n = parts[0]->n, h = parts[0]->h, w = parts[0]->w, c = 0;
        for (const auto& p : parts) {
            if (p->n != n || p->h != h || p->w != w)
                throw DimensionError("concat: mismatched shapes");
            c += p->c;
        }
        TP out = leaf(n, c, h, w);
        std::size_t plane = static_cast<std::size_t>(h) * w;
        for (int in = 0; in < n; ++in) {
            int coff = 0;
            for (const auto& p : parts) {
                std::memcpy(&out->data[out->index(in, coff, 0, 0)], &p->data[p->index(in, 0, 0, 0)],
                            sizeof(T) * plane * p->c);
                coff += p->c;
            }
        }
        record(out, parts, [parts, out, plane, n] {
            int coff = 0;
            for (const auto& p : parts) {
                if (p->requires_grad) {
                    p->ensure_grad();
                    for (int in = 0; in < n; ++in) {
                        const T* g = &out->grad[out->index(in, coff, 0, 0)];
                        T* pg = &p->grad[p->index(in, 0, 0, 0)];
                        for (std::size_t i = 0; i < plane * p->c; ++i) pg[i] += g[i];
                    }
                }
                coff += p->c;
            }
        });
        return out;
    }

    TP global_avg_pool(const TP& a) {
        TP out = leaf(a->n, a->c, 1, 1);
        std::size_t plane = static_cast<std::size_t>(a->h) * a->w;
        for (int in = 0; in < a->n; ++in)
            for (int ic = 0; ic < a->c; ++ic) {
                const T* p = &a->data[a->index(in, ic, 0, 0)];
                T acc = T(0);
                for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                out->at(in, ic, 0, 0) = acc / static_cast<T>(plane);
            }
        record(out, {a}, [a, out, plane] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (int in = 0; in < a->n; ++in)
                for (int ic = 0; ic < a->c; ++ic) {
                    T g = out->grad[out->index(in, ic, 0, 0)] / static_cast<T>(plane);
                    T* pg = &a->grad[a->index(in, ic, 0, 0)];
                    for (std::size_t i = 0; i < plane; ++i) pg[i] += g;
                }
        });
        return out;
    }

    /// Tile a (N,C,1,1) tensor to (N,C,H,W).
    TP broadcast_hw(const TP& a, int h, int w) {
        if (a->h != 1 || a->w != 1) throw DimensionError("broadcast_hw expects 1x1 spatial input");
        TP out = leaf(a->n, a->c, h, w);
        std::size_t plane = static_cast<std::size_t>(h) * w;
        for (int in = 0; in < a->n; ++in)
            for (int ic = 0; ic < a->c; ++ic) {
                T v = a->at(in, ic, 0, 0);
                T* p = &out->data[out->index(in, ic, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) p[i] = v;
            }
        record(out, {a}, [a, out, plane] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (int in = 0; in < a->n; ++in)
                for (int ic = 0; ic < a->c; ++ic) {
                    const T* g = &out->grad[out->index(in, ic, 0, 0)];
                    T acc = T(0);
                    for (std::size_t i = 0; i < plane; ++i) acc += g[i];
                    a->grad[a->index(in, ic, 0, 0)] += acc;
                }
        });
        return out;
    }

    // ---- interpolation ----

    /// Bilinear upsampling by an integer factor, align-corners = false.
    TP bilinear_upsample(const TP& a, int factor) {
        if (factor < 1) throw DimensionError("bilinear_upsample: factor must be >= 1");
        if (factor == 1) return scale(a, T(1));
        int oh = a->h * factor, ow = a->w * factor;
        TP out = leaf(a->n, a->c, oh, ow);
        // Precompute source taps per output coordinate.
        std::vector<int> y0(oh), y1(oh), x0(ow), x1(ow);
        std::vector<T> fy(oh), fx(ow);
        auto taps = [factor](int o, int limit, int& i0, int& i1, T& f) {
            T src = (static_cast<T>(o) + T(0.5)) / static_cast<T>(factor) - T(0.5);
            T fl = std::floor(src);
            i0 = static_cast<int>(fl);
            f = src - fl;
            i1 = i0 + 1;
            if (i0 < 0) { i0 = 0; }
            if (i1 > limit - 1) { i1 = limit - 1; }
            if (i0 > limit - 1) { i0 = limit - 1; }
        };
        for (int oy = 0; oy < oh; ++oy) taps(oy, a->h, y0[oy], y1[oy], fy[oy]);
        for (int ox = 0; ox < ow; ++ox) taps(ox, a->w, x0[ox], x1[ox], fx[ox]);
        for (int in = 0; in < a->n; ++in)
            for (int ic = 0; ic < a->c; ++ic) {
                const T* src = &a->data[a->index(in, ic, 0, 0)];
                T* dst = &out->data[out->index(in, ic, 0, 0)];
                for (int oy = 0; oy < oh; ++oy) {
                    const T* r0 = src + static_cast<std::size_t>(y0[oy]) * a->w;
                    const T* r1 = src + static_cast<std::size_t>(y1[oy]) * a->w;
                    T wy = fy[oy];
                    for (int ox = 0; ox < ow; ++ox) {
                        T top = r0[x0[ox]] + fx[ox] * (r0[x1[ox]] - r0[x0[ox]]);
                        T bot = r1[x0[ox]] + fx[ox] * (r1[x1[ox]] - r1[x0[ox]]);
                        dst[oy * ow + ox] = top + wy * (bot - top);
                    }
                }
            }
        record(out, {a}, [a, out, y0, y1, x0, x1, fy, fx, oh, ow] {
            if (!a->requires_grad) return;
            a->ensure_grad();
            for (int in = 0; in < a->n; ++in)
                for (int ic = 0; ic < a->c; ++ic) {
                    T* sg = &a->grad[a->index(in, ic, 0, 0)];
                    const T* g = &out->grad[out->index(in, ic, 0, 0)];
                    for (int oy = 0; oy < oh; ++oy) {
                        T wy = fy[oy];
                        for (int ox = 0; ox < ow; ++ox) {
                            T gv = g[oy * ow + ox];
                            T wx = fx[ox];
                            sg[y0[oy] * a->w + x0[ox]] += gv * (T(1) - wy) * (T(1) - wx);
                            sg[y0[oy] * a->w + x1[ox]] += gv * (T(1) - wy) * wx;
                            sg[y1[oy] * a->w + x0[ox]] += gv * wy * (T(1) - wx);
                            sg[y1[oy] * a->w + x1[ox]] += gv * wy * wx;
                        }
                    }
                }
        });
        return out;
    }

    // ---- convolution ----

    /// weight: (C_out, C_in, k, k). bias: (1, C_out, 1, 1) or nullptr.
    TP conv2d(const TP& x, const TP& w, const TP& b, int stride, int pad, int dilation = 1) {
        if (w->h != w->w) throw DimensionError("conv2d: kernel must be square");
        if (w->c != x->c)
            throw DimensionError("conv2d: input channels " + std::to_string(x->c) +
                                 " != weight C_in " + std::to_string(w->c));
        if (stride < 1 || dilation < 1) throw DimensionError("conv2d: stride/dilation must be >= 1");
        if (b && (b->c != w->n || b->size() != static_cast<std::size_t>(w->n)))
            throw DimensionError("conv2d: bias shape mismatch");
        int k = w->h;
        int oh = (x->h + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
        int ow = (x->w + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
        if (oh < 1 || ow < 1) throw DimensionError("conv2d: empty output");
        detail::ConvGeom g{x->h, x->w, oh, ow, k, stride, pad, dilation};
        int cout = w->n;
        std::size_t ckk = static_cast<std::size_t>(x->c) * k * k;
        std::size_t ohw = static_cast<std::size_t>(oh) * ow;
        TP out = leaf(x->n, cout, oh, ow);
        std::vector<T> cols(ckk * ohw);
        for (int in = 0; in < x->n; ++in) {
            detail::im2col(&x->data[x->index(in, 0, 0, 0)], x->c, g, cols.data());
            detail::gemm_nn(w->data.data(), cols.data(), &out->data[out->index(in, 0, 0, 0)],
                            static_cast<std::size_t>(cout), ckk, ohw, false);
            if (b) {
                for (int oc = 0; oc < cout; ++oc) {
                    T bv = b->data[oc];
                    T* p = &out->data[out->index(in, oc, 0, 0)];
                    for (std::size_t i = 0; i < ohw; ++i) p[i] += bv;
                }
            }
        }
        if (!out->all_finite()) throw NumericError("conv2d produced non-finite values");
        record(out, {x, w, b}, [x, w, b, out, g, cout, ckk, ohw] {
            std::vector<T> cols(ckk * ohw);
            std::vector<T> dcols(ckk * ohw);
            for (int in = 0; in < x->n; ++in) {
                const T* gy = &out->grad[out->index(in, 0, 0, 0)];
                if (w->requires_grad) {
                    w->ensure_grad();
                    detail::im2col(&x->data[x->index(in, 0, 0, 0)], x->c, g, cols.data());
                    detail::gemm_nt(gy, cols.data(), w->grad.data(),
                                    static_cast<std::size_t>(cout), ohw, ckk, true);
                }
                if (x->requires_grad) {
                    x->ensure_grad();
                    detail::gemm_tn(w->data.data(), gy, dcols.data(), ckk,
                                    static_cast<std::size_t>(cout), ohw, false);
                    detail::col2im_add(dcols.data(), x->c, g, &x->grad[x->index(in, 0, 0, 0)]);
                }
                if (b && b->requires_grad) {
                    b->ensure_grad();
                    for (int oc = 0; oc < cout; ++oc) {
                        const T* p = gy + static_cast<std::size_t>(oc) * ohw;
                        T acc = T(0);
                        for (std::size_t i = 0; i < ohw; ++i) acc += p[i];
                        b->grad[oc] += acc;
                    }
                }
            }
        });
        return out;
    }

    /// weight: (C_in, C_out, k, k). Forward is the exact adjoint of the
    /// corresponding conv2d. Output size (H-1)*stride - 2*pad + k + out_pad.
    TP conv_transpose2d(const TP& x, const TP& w, const TP& b, int stride, int pad,
                        int out_pad = 0) {
        if (w->h != w->w) throw DimensionError("conv_transpose2d: kernel must be square");
        if (w->n != x->c)
            throw DimensionError("conv_transpose2d: input channels " + std::to_string(x->c) +
                                 " != weight C_in " + std::to_string(w->n));
        if (stride < 1) throw DimensionError("conv_transpose2d: stride must be >= 1");
        if (out_pad < 0 || out_pad >= stride)
            throw DimensionError("conv_transpose2d: out_pad must be in [0, stride)");
        int k = w->h, cout = w->c, cin = x->c;
        int oh = (x->h - 1) * stride - 2 * pad + k + out_pad;
        int ow = (x->w - 1) * stride - 2 * pad + k + out_pad;
        if (oh < 1 || ow < 1) throw DimensionError("conv_transpose2d: empty output");
        // Geometry of the conv this op is adjoint to: (oh,ow) -> (x->h, x->w).
        detail::ConvGeom g{oh, ow, x->h, x->w, k, stride, pad, 1};
        std::size_t ckk = static_cast<std::size_t>(cout) * k * k;
        std::size_t hw = static_cast<std::size_t>(x->h) * x->w;
        TP out = leaf(x->n, cout, oh, ow);
        std::vector<T> cols(ckk * hw);
        for (int in = 0; in < x->n; ++in) {
            detail::gemm_tn(w->data.data(), &x->data[x->index(in, 0, 0, 0)], cols.data(), ckk,
                            static_cast<std::size_t>(cin), hw, false);
            detail::col2im_add(cols.data(), cout, g, &out->data[out->index(in, 0, 0, 0)]);
            if (b) {
                std::size_t ohw = static_cast<std::size_t>(oh) * ow;
                for (int oc = 0; oc < cout; ++oc) {
                    T bv = b->data[oc];
                    T* p = &out->data[out->index(in, oc, 0, 0)];
                    for (std::size_t i = 0; i < ohw; ++i) p[i] += bv;
                }
            }
        }
        if (!out->all_finite()) throw NumericError("conv_transpose2d produced non-finite values");
        record(out, {x, w, b}, [x, w, b, out, g, cin, cout, ckk, hw, oh, ow] {
            std::vector<T> dcols(ckk * hw);
            bool need_cols = x->requires_grad || w->requires_grad;
            for (int in = 0; in < x->n; ++in) {
                const T* gy = &out->grad[out->index(in, 0, 0, 0)];
                if (need_cols) detail::im2col(gy, cout, g, dcols.data());
                if (x->requires_grad) {
                    x->ensure_grad();
                    detail::gemm_nn(w->data.data(), dcols.data(),
                                    &x->grad[x->index(in, 0, 0, 0)],
                                    static_cast<std::size_t>(cin), ckk, hw, true);
                }
                if (w->requires_grad) {
                    w->ensure_grad();
                    detail::gemm_nt(&x->data[x->index(in, 0, 0, 0)], dcols.data(), w->grad.data(),
                                    static_cast<std::size_t>(cin), hw, ckk, true);
                }
                if (b && b->requires_grad) {
                    b->ensure_grad();
                    std::size_t ohw = static_cast<std::size_t>(oh) * ow;
                    for (int oc = 0; oc < cout; ++oc) {
                        const T* p = gy + static_cast<std::size_t>(oc) * ohw;
                        T acc = T(0);
                        for (std::size_t i = 0; i < ohw; ++i) acc += p[i];
                        b->grad[oc] += acc;
                    }
                }
            }
        });
        return out;
    }

    // ---- batch normalization ----

    struct BatchNormStats {
        TP running_mean;  // (1,C,1,1), never part of the gradient path
        TP running_var;
    };

    /// Train mode normalizes by batch statistics (eps 1e-5 by default) and,
    /// when update_running is set, folds them into the running stats with
    /// momentum 0.1. Eval mode uses the running stats.
    TP batchnorm(const TP& x, const TP& gamma, const TP& beta, BatchNormStats& stats, bool train,
                 bool update_running = true, T eps = T(1e-5), T momentum = T(0.1)) {
        int c = x->c;
        if (gamma->size() != static_cast<std::size_t>(c) ||
            beta->size() != static_cast<std::size_t>(c))
            throw DimensionError("batchnorm: gamma/beta length must equal C");
        std::size_t plane = static_cast<std::size_t>(x->h) * x->w;
        std::size_t m = static_cast<std::size_t>(x->n) * plane;
        std::vector<T> mean(c), invstd(c);
        if (train) {
            for (int ic = 0; ic < c; ++ic) {
                T acc = T(0);
                for (int in = 0; in < x->n; ++in) {
                    const T* p = &x->data[x->index(in, ic, 0, 0)];
                    for (std::size_t i = 0; i < plane; ++i) acc += p[i];
                }
                mean[ic] = acc / static_cast<T>(m);
                T var = T(0);
                for (int in = 0; in < x->n; ++in) {
                    const T* p = &x->data[x->index(in, ic, 0, 0)];
                    for (std::size_t i = 0; i < plane; ++i) {
                        T d = p[i] - mean[ic];
                        var += d * d;
                    }
                }
                var /= static_cast<T>(m);
                invstd[ic] = T(1) / std::sqrt(var + eps);
                if (update_running) {
                    T unbiased = m > 1 ? var * static_cast<T>(m) / static_cast<T>(m - 1) : var;
                    stats.running_mean->data[ic] =
                        (T(1) - momentum) * stats.running_mean->data[ic] + momentum * mean[ic];
                    stats.running_var->data[ic] =
                        (T(1) - momentum) * stats.running_var->data[ic] + momentum * unbiased;
                }
            }
        } else {
            for (int ic = 0; ic < c; ++ic) {
                mean[ic] = stats.running_mean->data[ic];
                invstd[ic] = T(1) / std::sqrt(stats.running_var->data[ic] + eps);
            }
        }
        TP out = like(x);
        auto xhat = std::make_shared<std::vector<T>>(x->size());
        for (int in = 0; in < x->n; ++in)
            for (int ic = 0; ic < c; ++ic) {
                const T* p = &x->data[x->index(in, ic, 0, 0)];
                T* xh = xhat->data() + x->index(in, ic, 0, 0);
                T* o = &out->data[out->index(in, ic, 0, 0)];
                T gm = gamma->data[ic], bt = beta->data[ic], mu = mean[ic], is = invstd[ic];
                for (std::size_t i = 0; i < plane; ++i) {
                    xh[i] = (p[i] - mu) * is;
                    o[i] = gm * xh[i] + bt;
                }
            }
        record(out, {x, gamma, beta}, [x, gamma, beta, out, xhat, invstd, plane, m, c, train] {
            // dgamma/dbeta are the same in both modes.
            std::vector<T> sum_g(c, T(0)), sum_gx(c, T(0));
            for (int in = 0; in < x->n; ++in)
                for (int ic = 0; ic < c; ++ic) {
                    const T* g = &out->grad[out->index(in, ic, 0, 0)];
                    const T* xh = xhat->data() + x->index(in, ic, 0, 0);
                    T sg = T(0), sgx = T(0);
                    for (std::size_t i = 0; i < plane; ++i) {
                        sg += g[i];
                        sgx += g[i] * xh[i];
                    }
                    sum_g[ic] += sg;
                    sum_gx[ic] += sgx;
                }
            if (gamma->requires_grad) {
                gamma->ensure_grad();
                for (int ic = 0; ic < c; ++ic) gamma->grad[ic] += sum_gx[ic];
            }
            if (beta->requires_grad) {
                beta->ensure_grad();
                for (int ic = 0; ic < c; ++ic) beta->grad[ic] += sum_g[ic];
            }
            if (x->requires_grad) {
                x->ensure_grad();
                for (int in = 0; in < x->n; ++in)
                    for (int ic = 0; ic < c; ++ic) {
                        const T* g = &out->grad[out->index(in, ic, 0, 0)];
                        const T* xh = xhat->data() + x->index(in, ic, 0, 0);
                        T* xg = &x->grad[x->index(in, ic, 0, 0)];
                        T gi = gamma->data[ic] * invstd[ic];
                        if (train) {
                            T mg = sum_g[ic] / static_cast<T>(m);
                            T mgx = sum_gx[ic] / static_cast<T>(m);
                            for (std::size_t i = 0; i < plane; ++i)
                                xg[i] += gi * (g[i] - mg - xh[i] * mgx);
                        } else {
                            for (std::size_t i = 0; i < plane; ++i) xg[i] += gi * g[i];
                        }
                    }
            }
        });
        return out;
    }

    // ---- backward ----

    /// Populates grads of every requires_grad leaf with d(loss)/d(leaf).
    /// Repeated calls without zeroing leaf grads accumulate.
    void backward(const TP& loss) {
        if (!loss->is_scalar()) throw ContractError("backward requires a scalar loss");
        for (auto& o : outputs_) {
            if (auto p = o.lock()) p->zero_grad();
        }
        loss->ensure_grad();
        loss->grad[0] += T(1);
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) (*it)();
    }

    static T sigmoid_val(T x) {
        if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
        T e = std::exp(x);
        return e / (T(1) + e);
    }

private:
    TP like(const TP& a) { return leaf(a->n, a->c, a->h, a->w); }

    void require_same(const TP& a, const TP& b, const char* op) {
        if (!a->same_shape(*b))
            throw DimensionError(std::string(op) + ": shape mismatch " + a->shape_str() + " vs " +
                                 b->shape_str());
    }

    TP mul_broadcast(const TP& full, const TP& single) {
        TP out = like(full);
        std::size_t plane = static_cast<std::size_t>(full->h) * full->w;
        for (int in = 0; in < full->n; ++in) {
            const T* s = &single->data[single->index(in, 0, 0, 0)];
            for (int ic = 0; ic < full->c; ++ic) {
                const T* f = &full->data[full->index(in, ic, 0, 0)];
                T* o = &out->data[out->index(in, ic, 0, 0)];
                for (std::size_t i = 0; i < plane; ++i) o[i] = f[i] * s[i];
            }
        }
        record(out, {full, single}, [full, single, out, plane] {
            if (full->requires_grad) {
                full->ensure_grad();
                for (int in = 0; in < full->n; ++in) {
                    const T* s = &single->data[single->index(in, 0, 0, 0)];
                    for (int ic = 0; ic < full->c; ++ic) {
                        const T* g = &out->grad[out->index(in, ic, 0, 0)];
                        T* fg = &full->grad[full->index(in, ic, 0, 0)];
                        for (std::size_t i = 0; i < plane; ++i) fg[i] += g[i] * s[i];
                    }
                }
            }
            if (single->requires_grad) {
                single->ensure_grad();
                for (int in = 0; in < full->n; ++in) {
                    T* sg = &single->grad[single->index(in, 0, 0, 0)];
                    for (int ic = 0; ic < full->c; ++ic) {
                        const T* g = &out->grad[out->index(in, ic, 0, 0)];
                        const T* f = &full->data[full->index(in, ic, 0, 0)];
                        for (std::size_t i = 0; i < plane; ++i) sg[i] += g[i] * f[i];
                    }
                }
            }
        });
        return out;
    }

    void record(const TP& out, const std::vector<TP>& inputs, std::function<void()> back) {
        if (!grad_enabled) return;
        bool any = false;
        for (const auto& in : inputs)
            if (in && in->requires_grad) any = true;
        if (!any) return;
        out->requires_grad = true;
        out->ensure_grad();
        outputs_.push_back(out);
        tape_.push_back(std::move(back));
    }

    std::vector<std::function<void()>> tape_;
    std::vector<std::weak_ptr<TensorT<T>>> outputs_;
};

using Graph = GraphT<float>;

}  // namespace uegan
