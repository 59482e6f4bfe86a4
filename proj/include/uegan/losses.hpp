#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "uegan/ops.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

struct LossConfig {
    double alpha1 = 0.8;  // dice foreground weight; alpha2 = 1 - alpha1
    double alpha2 = 0.2;
    double dice_epsilon = 1e-6;
    double adv_weight = 1.0;
    std::vector<double> ds_weights;  // per-level deep-supervision weights, default all 1

    double ds_weight(std::size_t level) const {
        return level < ds_weights.size() ? ds_weights[level] : 1.0;
    }
    void validate() const {
        if (alpha1 < 0 || alpha2 < 0 || std::abs(alpha1 + alpha2 - 1.0) > 1e-9)
            throw ConfigError("dice weights must be non-negative and sum to 1");
    }
};

/// Exact taxicab (L1) distance to the nearest foreground pixel via the
/// two-pass chamfer sweep. An empty mask yields `cap` everywhere.
template <typename T>
std::vector<T> taxicab_distance_transform(const T* mask, int h, int w, T cap) {
    const T big = static_cast<T>(h + w + 2);
    std::vector<T> d(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask[i] > T(0.5) ? T(0) : big;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            T v = d[y * w + x];
            if (y > 0) v = std::min(v, d[(y - 1) * w + x] + T(1));
            if (x > 0) v = std::min(v, d[y * w + x - 1] + T(1));
            d[y * w + x] = v;
        }
    for (int y = h - 1; y >= 0; --y)
        for (int x = w - 1; x >= 0; --x) {
            T v = d[y * w + x];
            if (y < h - 1) v = std::min(v, d[(y + 1) * w + x] + T(1));
            if (x < w - 1) v = std::min(v, d[y * w + x + 1] + T(1));
            d[y * w + x] = v;
        }
    for (auto& v : d) v = std::min(v, cap);
    return d;
}

template <typename T>
TensorT<T> taxicab_distance_transform(const TensorT<T>& mask, T cap) {
    TensorT<T> out(mask.n, mask.c, mask.h, mask.w);
    for (int in = 0; in < mask.n; ++in)
        for (int ic = 0; ic < mask.c; ++ic) {
            auto d = taxicab_distance_transform(&mask.data[mask.index(in, ic, 0, 0)], mask.h,
                                                mask.w, cap);
            std::copy(d.begin(), d.end(), out.data.begin() + out.index(in, ic, 0, 0));
        }
    return out;
}

/// Two-sided dice loss with epsilon smoothing on numerators and denominators
/// so empty-class terms evaluate to 1.
template <typename T>
TensorPtr<T> dice_loss(GraphT<T>& g, const TensorPtr<T>& pred_probs, const TensorPtr<T>& gt,
                       const LossConfig& cfg) {
    if (!pred_probs->same_shape(*gt))
        throw DimensionError("dice_loss: shape mismatch " + pred_probs->shape_str() + " vs " +
                             gt->shape_str());
    const T eps = static_cast<T>(cfg.dice_epsilon);
    auto term = [&](const TensorPtr<T>& p, const TensorPtr<T>& y) {
        auto num = g.add_scalar(g.scale(g.sum(g.mul(p, y)), T(2)), eps);
        auto den = g.add_scalar(g.add(g.sum(g.mul(p, p)), g.sum(g.mul(y, y))), eps);
        return g.div(num, den);
    };
    auto pos = term(pred_probs, gt);
    auto neg = term(g.one_minus(pred_probs), g.one_minus(gt));
    auto dsc = g.add(g.scale(pos, static_cast<T>(cfg.alpha1)),
                     g.scale(neg, static_cast<T>(cfg.alpha2)));
    return g.one_minus(dsc);
}

/// Hausdorff-estimating shape loss: mean of (p-g)^2 (d_p^2 + d_g^2). The
/// distance transforms are recomputed from the thresholded prediction each
/// call and excluded from the gradient path.
template <typename T>
TensorPtr<T> hd_loss(GraphT<T>& g, const TensorPtr<T>& pred_probs, const TensorPtr<T>& gt,
                     double cap_override = -1.0) {
    if (!pred_probs->same_shape(*gt))
        throw DimensionError("hd_loss: shape mismatch " + pred_probs->shape_str() + " vs " +
                             gt->shape_str());
    T cap = cap_override > 0 ? static_cast<T>(cap_override)
                             : static_cast<T>(pred_probs->h + pred_probs->w);
    TensorT<T> pred_bin(pred_probs->n, pred_probs->c, pred_probs->h, pred_probs->w);
    for (std::size_t i = 0; i < pred_bin.size(); ++i)
        pred_bin.data[i] = pred_probs->data[i] >= T(0.5) ? T(1) : T(0);
    TensorT<T> dp = taxicab_distance_transform(pred_bin, cap);
    TensorT<T> dg = taxicab_distance_transform(*gt, cap);
    TensorT<T> weight(dp.n, dp.c, dp.h, dp.w);
    for (std::size_t i = 0; i < weight.size(); ++i)
        weight.data[i] = dp.data[i] * dp.data[i] + dg.data[i] * dg.data[i];
    auto diff = g.sub(pred_probs, gt);
    auto sq = g.mul(diff, diff);
    return g.mean(g.mul(sq, g.constant(weight)));
}

/// Multi-scale L1 adversarial loss: per-level mean absolute difference of the
/// critic feature pyramids, averaged over levels.
template <typename T>
TensorPtr<T> multiscale_l1_loss(GraphT<T>& g, const std::vector<TensorPtr<T>>& fake,
                                const std::vector<TensorPtr<T>>& real) {
    if (fake.size() != real.size() || fake.empty())
        throw DimensionError("multiscale_l1_loss: pyramid level count mismatch");
    TensorPtr<T> acc;
    for (std::size_t k = 0; k < fake.size(); ++k) {
        if (!fake[k]->same_shape(*real[k]))
            throw DimensionError("multiscale_l1_loss: level " + std::to_string(k) +
                                 " shape mismatch");
        auto mae = g.mean(g.abs(g.sub(fake[k], real[k])));
        acc = acc ? g.add(acc, mae) : mae;
    }
    return g.scale(acc, T(1) / static_cast<T>(fake.size()));
}

/// Deep-supervised generator objective: sum over levels of
/// ds_weight * (dice + hd) on that level's probabilities, plus the weighted
/// adversarial term. Ground truth must already be at each level's resolution.
template <typename T>
TensorPtr<T> total_generator_loss(GraphT<T>& g, const std::vector<TensorPtr<T>>& level_probs,
                                  const std::vector<TensorPtr<T>>& level_gts,
                                  const TensorPtr<T>& critic_term, const LossConfig& cfg,
                                  TensorPtr<T>* dice_out = nullptr,
                                  TensorPtr<T>* hd_out = nullptr) {
    if (level_probs.size() != level_gts.size())
        throw DimensionError("total_generator_loss: level count mismatch");
    TensorPtr<T> dice_acc, hd_acc;
    for (std::size_t lvl = 0; lvl < level_probs.size(); ++lvl) {
        T wgt = static_cast<T>(cfg.ds_weight(lvl));
        if (wgt == T(0)) continue;
        auto d = g.scale(dice_loss(g, level_probs[lvl], level_gts[lvl], cfg), wgt);
        auto s = g.scale(hd_loss(g, level_probs[lvl], level_gts[lvl]), wgt);
        dice_acc = dice_acc ? g.add(dice_acc, d) : d;
        hd_acc = hd_acc ? g.add(hd_acc, s) : s;
    }
    if (dice_out) *dice_out = dice_acc;
    if (hd_out) *hd_out = hd_acc;
    TensorPtr<T> total = critic_term ? g.scale(critic_term, static_cast<T>(cfg.adv_weight))
                                     : nullptr;
    if (dice_acc) total = total ? g.add(total, dice_acc) : dice_acc;
    if (hd_acc) total = total ? g.add(total, hd_acc) : hd_acc;
    if (!total) throw ContractError("total_generator_loss: no active loss terms");
    return total;
}

}  // namespace uegan
