#pragma once

#include <functional>
#include <string>
#include <vector>

#include "uegan/config.hpp"
#include "uegan/network.hpp"
#include "uegan/raster.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

/// Polynomial decay: lr0 * (1 - step/total)^power. The last step lands at 0.
double poly_lr(double lr0, double power, int step, int total_steps);

/// Adam with L2-style weight decay: lambda * theta is added to the raw
/// gradient before the moment updates. Parameters flagged decay_exempt
/// (biases, norm scales) skip the decay term. Slot order is fixed by the
/// parameter list passed to the first step() call.
class Adam {
public:
    Adam(double beta1, double beta2, double eps, double weight_decay)
        : beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

    void step(const std::vector<TensorP>& params, double lr);

    long long steps_taken() const { return t_; }

private:
    struct Slot {
        std::vector<float> m, v;
    };
    std::vector<Slot> slots_;
    long long t_ = 0;
    double beta1_, beta2_, eps_, wd_;
};

struct SynthSample {
    Tensor image;  // (1,3,H,W), [0,1]
    Mask mask;
};

/// Procedural aerial-style scenes: 2-8 rectangular "roofs" (some rotated) on
/// a textured ground, optional road strip sharing a roof color, Gaussian
/// pixel noise. Per-image foreground fraction is kept within [0.05, 0.4].
std::vector<SynthSample> synth_dataset(int count, int size, uint64_t seed);

/// Random flips / 90-degree rotations applied to image and mask together,
/// plus brightness / contrast / saturation jitter (+-20%) on the image only.
SynthSample augment(const SynthSample& s, Rng& rng);

/// 2x2 block majority vote; ties count as foreground. H and W must be even.
Mask downsample_mask_majority(const Mask& m);

/// Ground truth at every prediction-map resolution, coarse -> fine; the last
/// entry is the input mask itself.
std::vector<Mask> mask_pyramid(const Mask& full, int levels);

struct LossReport {
    int step = 0;
    double lr = 0, dice = 0, hd = 0, adv = 0, total = 0;
    std::string json_line() const;
};

struct ValReport {
    double threshold = 0.5;
    double iou = 0;
    double f1 = 0;
    double object_f1 = 0;
};

/// Alternating two-phase adversarial trainer. The critic phase updates only
/// the critic (generator run without a tape); the generator phase updates
/// only the generator (critic gradients are discarded afterwards).
class Trainer {
public:
    explicit Trainer(const RunConfig& cfg);

    LossReport train_step();
    std::vector<LossReport> train(const std::function<void(const LossReport&)>& on_step = {});

    /// Eval-mode forward; returns the full-resolution building probabilities.
    Raster predict(const Tensor& image) const;

    /// Sweeps the decision threshold on the validation split and reports
    /// aggregate pixel / object metrics at the best one.
    ValReport validate() const;

    ParamSet& generator() { return gen_; }
    const ParamSet& generator() const { return gen_; }
    ParamSet& critic() { return critic_; }
    const ParamSet& critic() const { return critic_; }
    const std::vector<SynthSample>& train_split() const { return train_; }
    const std::vector<SynthSample>& val_split() const { return val_; }
    int step_index() const { return step_; }

private:
    RunConfig cfg_;
    ParamSet gen_, critic_;
    Adam gen_opt_, critic_opt_;
    std::vector<SynthSample> train_, val_;
    Rng batch_rng_;
    int step_ = 0;
};

}  // namespace uegan
