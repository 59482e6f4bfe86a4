#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "uegan/ops.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

enum class AttentionKind { Reverse, Edge, Uncertainty, BinaryDecision, DilatedEdge };

template <typename T>
struct PredictionMapT {
    TensorPtr<T> logits;  // (N,1,H,W)
    int level = 0;        // 0 = coarsest (ASPP head)
};

template <typename T>
struct AttentionMapT {
    TensorPtr<T> weights;  // (N,1,H,W)
    AttentionKind kind = AttentionKind::Reverse;
};

using PredictionMap = PredictionMapT<float>;
using AttentionMap = AttentionMapT<float>;

namespace detail {
template <typename T>
void require_one_channel(const TensorPtr<T>& t, const char* what) {
    if (t->c != 1) throw DimensionError(std::string(what) + " must have one channel");
}

template <typename T>
void require_spatial(const TensorPtr<T>& a, const TensorPtr<T>& b, const char* what) {
    if (a->h != b->h || a->w != b->w || a->n != b->n)
        throw DimensionError(std::string(what) + ": spatial mismatch " + a->shape_str() + " vs " +
                             b->shape_str());
}
}  // namespace detail

/// Binary edge map of a binary mask: |Gx| + |Gy| of the 3x3 Sobel pair,
/// thresholded at > 0. Replicate padding keeps flat borders edge-free.
/// Non-differentiable by construction.
template <typename T>
TensorT<T> sobel_edges(const TensorT<T>& mask) {
    TensorT<T> out(mask.n, mask.c, mask.h, mask.w);
    int h = mask.h, w = mask.w;
    auto clampi = [](int v, int lim) { return v < 0 ? 0 : (v >= lim ? lim - 1 : v); };
    for (int in = 0; in < mask.n; ++in)
        for (int ic = 0; ic < mask.c; ++ic) {
            const T* src = &mask.data[mask.index(in, ic, 0, 0)];
            T* dst = &out.data[out.index(in, ic, 0, 0)];
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    auto px = [&](int dy, int dx) {
                        return src[clampi(y + dy, h) * w + clampi(x + dx, w)];
                    };
                    T gx = -px(-1, -1) + px(-1, 1) - 2 * px(0, -1) + 2 * px(0, 1) - px(1, -1) +
                           px(1, 1);
                    T gy = -px(-1, -1) - 2 * px(-1, 0) - px(-1, 1) + px(1, -1) + 2 * px(1, 0) +
                           px(1, 1);
                    dst[y * w + x] = (std::abs(gx) + std::abs(gy)) > T(0) ? T(1) : T(0);
                }
        }
    return out;
}

/// Morphological max-filter with a (kernel x kernel) window, clipped at the
/// borders. Kernel must be odd.
template <typename T>
TensorT<T> dilate(const TensorT<T>& mask, int kernel) {
    if (kernel < 1 || kernel % 2 == 0) throw DimensionError("dilate: kernel must be odd");
    if (kernel == 1) return mask;
    int r = kernel / 2, h = mask.h, w = mask.w;
    TensorT<T> out(mask.n, mask.c, mask.h, mask.w);
    for (int in = 0; in < mask.n; ++in)
        for (int ic = 0; ic < mask.c; ++ic) {
            const T* src = &mask.data[mask.index(in, ic, 0, 0)];
            T* dst = &out.data[out.index(in, ic, 0, 0)];
            // Two-pass separable max filter.
            std::vector<T> rowmax(static_cast<std::size_t>(h) * w, T(0));
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    T m = T(0);
                    for (int dx = -r; dx <= r; ++dx) {
                        int xx = x + dx;
                        if (xx >= 0 && xx < w && src[y * w + xx] > m) m = src[y * w + xx];
                    }
                    rowmax[y * w + x] = m;
                }
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    T m = T(0);
                    for (int dy = -r; dy <= r; ++dy) {
                        int yy = y + dy;
                        if (yy >= 0 && yy < h && rowmax[yy * w + x] > m) m = rowmax[yy * w + x];
                    }
                    dst[y * w + x] = m;
                }
        }
    return out;
}

/// Reverse attention: A_R = 1 - sigmoid(U(prev_logits)); F_R = A_R (x) F with
/// the attention map broadcast across feature channels.
template <typename T>
std::pair<AttentionMapT<T>, TensorPtr<T>> reverse_attention(GraphT<T>& g,
                                                            const TensorPtr<T>& prev_logits,
                                                            const TensorPtr<T>& features,
                                                            int up_factor) {
    detail::require_one_channel(prev_logits, "reverse_attention: prediction map");
    auto up = g.bilinear_upsample(prev_logits, up_factor);
    detail::require_spatial(up, features, "reverse_attention");
    auto a_r = g.one_minus(g.sigmoid(up));
    auto f_r = g.mul(features, a_r);
    return {AttentionMapT<T>{a_r, AttentionKind::Reverse}, f_r};
}

/// Edge attention per the binary-decision / Sobel / dilation chain. The edge
/// band is a non-differentiable constant; gradient flows only through the
/// sigmoid factor and the features.
template <typename T>
std::pair<AttentionMapT<T>, TensorPtr<T>> edge_attention(GraphT<T>& g,
                                                         const TensorPtr<T>& prev_logits,
                                                         const TensorPtr<T>& features,
                                                         int up_factor, int dilation_kernel) {
    detail::require_one_channel(prev_logits, "edge_attention: prediction map");
    auto up = g.bilinear_upsample(prev_logits, up_factor);
    detail::require_spatial(up, features, "edge_attention");
    auto s = g.sigmoid(up);
    TensorT<T> b_e(s->n, 1, s->h, s->w);
    for (std::size_t i = 0; i < s->size(); ++i) b_e.data[i] = s->data[i] >= T(0.5) ? T(1) : T(0);
    TensorT<T> d_e = dilate(sobel_edges(b_e), dilation_kernel);
    auto a_e = g.mul(s, g.constant(d_e));
    auto f_e = g.mul(features, a_e);
    return {AttentionMapT<T>{a_e, AttentionKind::Edge}, f_e};
}

/// Pixel-wise entropy of the building probability, natural log, probability
/// clamped to [1e-7, 1-1e-7].
template <typename T>
AttentionMapT<T> uncertainty_map(GraphT<T>& g, const TensorPtr<T>& logits) {
    detail::require_one_channel(logits, "uncertainty_map: prediction map");
    auto p = g.clamp(g.sigmoid(logits), T(1e-7), T(1) - T(1e-7));
    auto q = g.one_minus(p);
    auto ent = g.scale(g.add(g.mul(p, g.log(p)), g.mul(q, g.log(q))), T(-1));
    return AttentionMapT<T>{ent, AttentionKind::Uncertainty};
}

/// Weights encoder skip features by prediction entropy, broadcast across
/// channels. The prediction map must already be at the feature resolution.
template <typename T>
TensorPtr<T> apply_uncertainty_attention(GraphT<T>& g, const TensorPtr<T>& encoder_feats,
                                         const TensorPtr<T>& pred_logits) {
    detail::require_spatial(pred_logits, encoder_feats, "apply_uncertainty_attention");
    auto ent = uncertainty_map(g, pred_logits);
    return g.mul(encoder_feats, ent.weights);
}

template <typename T>
struct RefinementParamsT {
    TensorPtr<T> conv1_w, conv1_b;  // 3x3, 2C -> C
    TensorPtr<T> conv2_w, conv2_b;  // 3x3, C -> 1
};

using RefinementParams = RefinementParamsT<float>;

/// Refinement Module: concat(F_R, F_E) -> 3x3 conv -> relu -> 3x3 conv -> 1
/// channel residual, added to the upsampled previous prediction.
template <typename T>
PredictionMapT<T> refinement_forward(GraphT<T>& g, const PredictionMapT<T>& prev,
                                     const TensorPtr<T>& features,
                                     const RefinementParamsT<T>& params, int up_factor,
                                     int dilation_kernel) {
    auto [a_r, f_r] = reverse_attention(g, prev.logits, features, up_factor);
    auto [a_e, f_e] = edge_attention(g, prev.logits, features, up_factor, dilation_kernel);
    auto cat = g.concat_channels({f_r, f_e});
    auto hid = g.relu(g.conv2d(cat, params.conv1_w, params.conv1_b, 1, 1));
    auto residual = g.conv2d(hid, params.conv2_w, params.conv2_b, 1, 1);
    auto up = g.bilinear_upsample(prev.logits, up_factor);
    return PredictionMapT<T>{g.add(up, residual), prev.level + 1};
}

}  // namespace uegan
