#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "uegan/attention.hpp"
#include "uegan/ops.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

struct ModelConfig {
    int base_channels = 8;   // paper-scale 64, desk default 8
    int depth = 4;           // encoder stages, bottleneck at 1/2^depth
    int encoder_stride = 2;
    double leaky_slope = 0.2;
    int edge_dilation_kernel = 7;
    int input_channels = 3;
    bool use_refinement = true;
    bool use_uam = true;

    // Kernel sizes 7 for the first two encoder stages, then 5; decoder
    // receptive fields grow per stage: 5,7,9,11.
    int encoder_kernel(int stage) const { return stage < 2 ? 7 : 5; }
    int decoder_kernel(int stage) const { return 5 + 2 * stage; }
    std::vector<int> aspp_dilations() const { return {2, 4, 6}; }

    int encoder_channels(int stage) const { return base_channels << stage; }
    int bottleneck_channels() const { return encoder_channels(depth - 1); }
    // Channels halve per decoder stage, starting at the bottleneck width and
    // ending at the base width; each skip contributes half as many channels.
    int decoder_channels(int stage) const { return bottleneck_channels() >> stage; }

    void validate() const {
        if (base_channels < 1) throw ConfigError("base_channels must be >= 1");
        if (depth < 2) throw ConfigError("depth must be >= 2");
        if (input_channels < 1) throw ConfigError("input_channels must be >= 1");
        if (encoder_stride != 2) throw ConfigError("encoder_stride must be 2");
        if (edge_dilation_kernel < 1 || edge_dilation_kernel % 2 == 0)
            throw ConfigError("edge_dilation_kernel must be odd");
        if (decoder_channels(depth - 1) < 1)
            throw ConfigError("base_channels too small for depth");
    }
};

/// Ordered named-tensor container; creation order fixes checkpoint layout
/// and optimizer state indexing.
template <typename T>
struct ParamSetT {
    std::vector<std::pair<std::string, TensorPtr<T>>> items;

    TensorPtr<T> add(const std::string& name, int n, int c, int h, int w, bool trainable) {
        auto t = make_tensor<T>(n, c, h, w, trainable);
        items.emplace_back(name, t);
        return t;
    }

    TensorPtr<T> get(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return v;
        throw ContractError("parameter not found: " + name);
    }

    bool has(const std::string& name) const {
        for (const auto& [k, v] : items)
            if (k == name) return true;
        return false;
    }

    std::vector<TensorPtr<T>> trainable() const {
        std::vector<TensorPtr<T>> out;
        for (const auto& [k, v] : items)
            if (v->requires_grad) out.push_back(v);
        return out;
    }

    void zero_grads() const {
        for (const auto& [k, v] : items) v->zero_grad();
    }

    template <typename U>
    ParamSetT<U> cast() const {
        ParamSetT<U> out;
        for (const auto& [k, v] : items)
            out.items.emplace_back(k, std::make_shared<TensorT<U>>(v->template cast<U>()));
        return out;
    }
};

using ParamSet = ParamSetT<float>;

namespace netinit {

template <typename T>
void he_uniform(TensorT<T>& t, int fan_in, Rng& rng) {
    double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <typename T>
TensorPtr<T> conv_weight(ParamSetT<T>& ps, const std::string& name, int cout, int cin, int k,
                         Rng& rng) {
    auto w = ps.add(name + ".w", cout, cin, k, k, true);
    he_uniform(*w, cin * k * k, rng);
    return w;
}

template <typename T>
TensorPtr<T> tconv_weight(ParamSetT<T>& ps, const std::string& name, int cin, int cout, int k,
                          Rng& rng) {
    auto w = ps.add(name + ".w", cin, cout, k, k, true);
    he_uniform(*w, cin * k * k, rng);
    return w;
}

template <typename T>
void conv_bias(ParamSetT<T>& ps, const std::string& name, int cout) {
    ps.add(name + ".b", 1, cout, 1, 1, true)->decay_exempt = true;
}

template <typename T>
void bn_params(ParamSetT<T>& ps, const std::string& name, int c) {
    auto gamma = ps.add(name + ".gamma", 1, c, 1, 1, true);
    gamma->fill(T(1));
    gamma->decay_exempt = true;
    ps.add(name + ".beta", 1, c, 1, 1, true)->decay_exempt = true;
    ps.add(name + ".rmean", 1, c, 1, 1, false);
    auto rvar = ps.add(name + ".rvar", 1, c, 1, 1, false);
    rvar->fill(T(1));
}

template <typename T>
void residual_block(ParamSetT<T>& ps, const std::string& name, int cin, int cout, Rng& rng) {
    conv_weight(ps, name + ".conv1", cout, cin, 1, rng);
    conv_bias(ps, name + ".conv1", cout);
    bn_params(ps, name + ".bn1", cout);
    conv_weight(ps, name + ".conv2", cout, cout, 3, rng);
    conv_bias(ps, name + ".conv2", cout);
    bn_params(ps, name + ".bn2", cout);
    conv_weight(ps, name + ".conv3", cout, cout, 1, rng);
    conv_bias(ps, name + ".conv3", cout);
    bn_params(ps, name + ".bn3", cout);
    if (cin != cout) {
        conv_weight(ps, name + ".proj", cout, cin, 1, rng);
        conv_bias(ps, name + ".proj", cout);
    }
}

}  // namespace netinit

/// Deterministic parameter initialization: He-uniform conv weights, zero
/// biases, unit gamma / zero beta.
template <typename T>
ParamSetT<T> build_generator(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamSetT<T> ps;
    using namespace netinit;
    int prev_c = cfg.input_channels;
    for (int s = 0; s < cfg.depth; ++s) {
        int c = cfg.encoder_channels(s);
        int k = cfg.encoder_kernel(s);
        std::string name = "enc" + std::to_string(s);
        conv_weight(ps, name + ".conv", c, prev_c, k, rng);
        conv_bias(ps, name + ".conv", c);
        if (s > 0) bn_params(ps, name + ".bn", c);  // no norm after the first conv
        residual_block(ps, name + ".res", c, c, rng);
        prev_c = c;
    }
    int cb = cfg.bottleneck_channels();
    {
        conv_weight(ps, "aspp.b0", cb, cb, 1, rng);
        conv_bias(ps, "aspp.b0", cb);
        bn_params(ps, "aspp.b0.bn", cb);
        auto dils = cfg.aspp_dilations();
        for (std::size_t i = 0; i < dils.size(); ++i) {
            std::string name = "aspp.b" + std::to_string(i + 1);
            conv_weight(ps, name, cb, cb, 3, rng);
            conv_bias(ps, name, cb);
            bn_params(ps, name + ".bn", cb);
        }
        conv_weight(ps, "aspp.gp", cb, cb, 1, rng);
        conv_bias(ps, "aspp.gp", cb);
        bn_params(ps, "aspp.gp.bn", cb);
        conv_weight(ps, "aspp.fuse", cb, cb * (2 + static_cast<int>(dils.size())), 3, rng);
        conv_bias(ps, "aspp.fuse", cb);
        bn_params(ps, "aspp.fuse.bn", cb);
        conv_weight(ps, "aspp.head", 1, cb, 1, rng);
        conv_bias(ps, "aspp.head", 1);
    }
    prev_c = cb;
    for (int d = 0; d < cfg.depth; ++d) {
        int c = cfg.decoder_channels(d);
        int k = cfg.decoder_kernel(d);
        std::string name = "dec" + std::to_string(d);
        tconv_weight(ps, name + ".up", prev_c, c, k, rng);
        conv_bias(ps, name + ".up", c);
        bn_params(ps, name + ".bn", c);
        bool has_skip = d < cfg.depth - 1;
        int res_in = has_skip ? c + cfg.encoder_channels(cfg.depth - 2 - d) : c;
        residual_block(ps, name + ".res", res_in, c, rng);
        if (cfg.use_refinement) {
            conv_weight(ps, name + ".rm.conv1", c, 2 * c, 3, rng);
            conv_bias(ps, name + ".rm.conv1", c);
            conv_weight(ps, name + ".rm.conv2", 1, c, 3, rng);
            conv_bias(ps, name + ".rm.conv2", 1);
            // Deep-supervision head on the refined logits, identity at init so
            // the refinement chain and the reported maps coincide.
            auto hw = ps.add(name + ".head.w", 1, 1, 1, 1, true);
            hw->fill(T(1));
            conv_bias(ps, name + ".head", 1);
        } else {
            conv_weight(ps, name + ".head", 1, c, 1, rng);
            conv_bias(ps, name + ".head", 1);
        }
        prev_c = c;
    }
    return ps;
}

/// Critic: the generator encoder minus the residual blocks.
template <typename T>
ParamSetT<T> build_critic(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    ParamSetT<T> ps;
    using namespace netinit;
    int prev_c = cfg.input_channels;
    for (int s = 0; s < cfg.depth; ++s) {
        int c = cfg.encoder_channels(s);
        std::string name = "crit" + std::to_string(s);
        conv_weight(ps, name + ".conv", c, prev_c, cfg.encoder_kernel(s), rng);
        conv_bias(ps, name + ".conv", c);
        if (s > 0) bn_params(ps, name + ".bn", c);
        prev_c = c;
    }
    return ps;
}

template <typename T>
struct GeneratorOutputT {
    // Deep-supervision maps ordered coarse -> fine; the last one is the
    // full-resolution prediction.
    std::vector<PredictionMapT<T>> intermediates;
    const PredictionMapT<T>& final() const { return intermediates.back(); }
};

using GeneratorOutput = GeneratorOutputT<float>;

struct ForwardMode {
    bool train = false;
    bool update_running = false;  // fold batch stats into running stats
};

namespace netdetail {

template <typename T>
TensorPtr<T> batchnorm_named(GraphT<T>& g, const TensorPtr<T>& x, const ParamSetT<T>& ps,
                             const std::string& name, const ForwardMode& mode) {
    typename GraphT<T>::BatchNormStats stats{ps.get(name + ".rmean"), ps.get(name + ".rvar")};
    return g.batchnorm(x, ps.get(name + ".gamma"), ps.get(name + ".beta"), stats, mode.train,
                       mode.update_running);
}

template <typename T>
TensorPtr<T> residual_forward(GraphT<T>& g, const TensorPtr<T>& x, const ParamSetT<T>& ps,
                              const std::string& name, Activation act, T slope,
                              const ForwardMode& mode) {
    auto a = [&](const TensorPtr<T>& t) { return g.activation(t, act, slope); };
    auto h1 = a(batchnorm_named(g, g.conv2d(x, ps.get(name + ".conv1.w"),
                                            ps.get(name + ".conv1.b"), 1, 0),
                                ps, name + ".bn1", mode));
    auto h2 = a(batchnorm_named(g, g.conv2d(h1, ps.get(name + ".conv2.w"),
                                            ps.get(name + ".conv2.b"), 1, 1),
                                ps, name + ".bn2", mode));
    auto h3 = batchnorm_named(g, g.conv2d(h2, ps.get(name + ".conv3.w"),
                                          ps.get(name + ".conv3.b"), 1, 0),
                              ps, name + ".bn3", mode);
    TensorPtr<T> skip = x;
    if (ps.has(name + ".proj.w"))
        skip = g.conv2d(x, ps.get(name + ".proj.w"), ps.get(name + ".proj.b"), 1, 0);
    return a(g.add(h3, skip));
}

}  // namespace netdetail

/// ASPP: 1x1 conv, three dilated 3x3 convs, global-context branch, all
/// concatenated and fused by a 3x3 conv. Output keeps the input spatial size.
template <typename T>
TensorPtr<T> aspp_forward(GraphT<T>& g, const TensorPtr<T>& bottleneck, const ParamSetT<T>& ps,
                          const ModelConfig& cfg, const ForwardMode& mode) {
    using netdetail::batchnorm_named;
    std::vector<TensorPtr<T>> branches;
    branches.push_back(g.relu(batchnorm_named(
        g, g.conv2d(bottleneck, ps.get("aspp.b0.w"), ps.get("aspp.b0.b"), 1, 0), ps, "aspp.b0.bn",
        mode)));
    auto dils = cfg.aspp_dilations();
    for (std::size_t i = 0; i < dils.size(); ++i) {
        std::string name = "aspp.b" + std::to_string(i + 1);
        branches.push_back(g.relu(batchnorm_named(
            g,
            g.conv2d(bottleneck, ps.get(name + ".w"), ps.get(name + ".b"), 1, dils[i], dils[i]),
            ps, name + ".bn", mode)));
    }
    auto pooled = g.global_avg_pool(bottleneck);
    auto gctx = g.relu(batchnorm_named(
        g, g.conv2d(pooled, ps.get("aspp.gp.w"), ps.get("aspp.gp.b"), 1, 0), ps, "aspp.gp.bn",
        mode));
    branches.push_back(g.broadcast_hw(gctx, bottleneck->h, bottleneck->w));
    auto cat = g.concat_channels(branches);
    return g.relu(batchnorm_named(
        g, g.conv2d(cat, ps.get("aspp.fuse.w"), ps.get("aspp.fuse.b"), 1, 1), ps, "aspp.fuse.bn",
        mode));
}

/// Full generator: strided encoder with residual blocks, ASPP bottleneck,
/// transpose-conv decoder with uncertainty-weighted skips and per-stage
/// refinement, emitting one prediction map per stage (coarse -> fine).
template <typename T>
GeneratorOutputT<T> generator_forward(GraphT<T>& g, const TensorPtr<T>& image,
                                      const ParamSetT<T>& ps, const ModelConfig& cfg,
                                      const ForwardMode& mode = {}) {
    cfg.validate();
    if (image->c != cfg.input_channels)
        throw DimensionError("generator_forward: expected " +
                             std::to_string(cfg.input_channels) + " input channels");
    int div = 1 << cfg.depth;
    if (image->h % div != 0 || image->w % div != 0)
        throw DimensionError("generator_forward: H and W must be divisible by " +
                             std::to_string(div));
    using netdetail::batchnorm_named;
    using netdetail::residual_forward;
    const T slope = static_cast<T>(cfg.leaky_slope);

    std::vector<TensorPtr<T>> skips;  // post-residual encoder features
    // center [0,1] pixels; the first conv has no norm in front of it
    TensorPtr<T> x = g.add_scalar(g.scale(image, T(2)), T(-1));
    for (int s = 0; s < cfg.depth; ++s) {
        std::string name = "enc" + std::to_string(s);
        int k = cfg.encoder_kernel(s);
        auto y = g.conv2d(x, ps.get(name + ".conv.w"), ps.get(name + ".conv.b"),
                          cfg.encoder_stride, k / 2);
        if (s > 0) y = batchnorm_named(g, y, ps, name + ".bn", mode);
        y = g.leaky_relu(y, slope);
        y = residual_forward(g, y, ps, name + ".res", Activation::LeakyRelu, slope, mode);
        skips.push_back(y);
        x = y;
    }

    auto aspp = aspp_forward(g, x, ps, cfg, mode);
    GeneratorOutputT<T> out;
    PredictionMapT<T> chain{
        g.conv2d(aspp, ps.get("aspp.head.w"), ps.get("aspp.head.b"), 1, 0), 0};
    out.intermediates.push_back(chain);

    TensorPtr<T> feats = aspp;
    for (int d = 0; d < cfg.depth; ++d) {
        std::string name = "dec" + std::to_string(d);
        int k = cfg.decoder_kernel(d);
        auto up = g.conv_transpose2d(feats, ps.get(name + ".up.w"), ps.get(name + ".up.b"), 2,
                                     (k - 1) / 2, 1);
        up = g.relu(batchnorm_named(g, up, ps, name + ".bn", mode));
        TensorPtr<T> merged = up;
        bool has_skip = d < cfg.depth - 1;
        if (has_skip) {
            auto skip = skips[cfg.depth - 2 - d];
            if (cfg.use_uam) {
                auto pred_up = g.bilinear_upsample(chain.logits, 2);
                skip = apply_uncertainty_attention(g, skip, pred_up);
            }
            merged = g.concat_channels({up, skip});
        }
        auto f = residual_forward(g, merged, ps, name + ".res", Activation::Relu, T(0), mode);
        if (cfg.use_refinement) {
            RefinementParamsT<T> rm{ps.get(name + ".rm.conv1.w"), ps.get(name + ".rm.conv1.b"),
                                    ps.get(name + ".rm.conv2.w"), ps.get(name + ".rm.conv2.b")};
            chain = refinement_forward(g, chain, f, rm, 2, cfg.edge_dilation_kernel);
        } else {
            chain = PredictionMapT<T>{
                g.conv2d(f, ps.get(name + ".head.w"), ps.get(name + ".head.b"), 1, 0), d + 1};
        }
        TensorPtr<T> ds = chain.logits;
        if (cfg.use_refinement)
            ds = g.conv2d(chain.logits, ps.get(name + ".head.w"), ps.get(name + ".head.b"), 1, 0);
        out.intermediates.push_back(PredictionMapT<T>{ds, d + 1});
        feats = f;
    }
    if (!out.final().logits->all_finite())
        throw NumericError("generator_forward produced non-finite logits");
    return out;
}

/// Critic input is image (x) mask (broadcast over RGB); returns the feature
/// pyramid, one tensor per encoder stage.
template <typename T>
std::vector<TensorPtr<T>> critic_forward(GraphT<T>& g, const TensorPtr<T>& image,
                                         const TensorPtr<T>& mask_probs, const ParamSetT<T>& ps,
                                         const ModelConfig& cfg, const ForwardMode& mode = {}) {
    if (mask_probs->c != 1) throw DimensionError("critic_forward: mask must have one channel");
    if (mask_probs->h != image->h || mask_probs->w != image->w || mask_probs->n != image->n)
        throw DimensionError("critic_forward: mask/image spatial mismatch");
    const T slope = static_cast<T>(cfg.leaky_slope);
    TensorPtr<T> x = g.mul(image, mask_probs);
    std::vector<TensorPtr<T>> pyramid;
    for (int s = 0; s < cfg.depth; ++s) {
        std::string name = "crit" + std::to_string(s);
        int k = cfg.encoder_kernel(s);
        auto y = g.conv2d(x, ps.get(name + ".conv.w"), ps.get(name + ".conv.b"),
                          cfg.encoder_stride, k / 2);
        if (s > 0) y = netdetail::batchnorm_named(g, y, ps, name + ".bn", mode);
        y = g.leaky_relu(y, slope);
        pyramid.push_back(y);
        x = y;
    }
    return pyramid;
}

}  // namespace uegan
