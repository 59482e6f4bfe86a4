#pragma once

#include <cstdint>
#include <string>

#include "uegan/losses.hpp"
#include "uegan/metrics.hpp"
#include "uegan/network.hpp"

namespace uegan {

/// Flat key=value run configuration covering model, loss, metric and
/// training hyperparameters. Unknown keys are rejected.
struct RunConfig {
    ModelConfig model;

    // losses
    double alpha1 = 0.8;
    double dice_epsilon = 1e-6;
    double adv_weight = 1.0;
    double ds_weight = 1.0;
    bool deep_supervision = true;

    MetricConfig metric;

    // optimizer / schedule
    double lr0 = 0.0005;
    double power = 0.9;
    double weight_decay = 0.0002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;

    // run shape
    int steps = 300;
    int batch_size = 8;
    int image_size = 64;
    int train_count = 200;
    int val_count = 50;
    uint64_t seed = 43;

    /// Per-level deep-supervision weights for a generator with `levels`
    /// prediction maps: intermediates get ds_weight (or 0 when deep
    /// supervision is off), the final map always gets 1.
    LossConfig loss_config(int levels) const {
        LossConfig cfg;
        cfg.alpha1 = alpha1;
        cfg.alpha2 = 1.0 - alpha1;
        cfg.dice_epsilon = dice_epsilon;
        cfg.adv_weight = adv_weight;
        cfg.ds_weights.assign(static_cast<std::size_t>(levels),
                              deep_supervision ? ds_weight : 0.0);
        if (levels > 0) cfg.ds_weights.back() = 1.0;
        cfg.validate();
        return cfg;
    }

    void validate() const {
        model.validate();
        loss_config(model.depth + 1);
        if (steps < 0 || batch_size < 1 || image_size < 16 || train_count < 1 || val_count < 1)
            throw ConfigError("invalid run shape");
        if (image_size % (1 << model.depth) != 0)
            throw ConfigError("image_size must be divisible by 2^depth");
    }
};

RunConfig parse_run_config(const std::string& text);
std::string serialize_run_config(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace uegan
