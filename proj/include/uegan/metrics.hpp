#pragma once

#include <vector>

#include "uegan/raster.hpp"

namespace uegan {

struct ConfusionCounts {
    long long tp = 0, fp = 0, fn = 0, tn = 0;
    ConfusionCounts& operator+=(const ConfusionCounts& o) {
        tp += o.tp; fp += o.fp; fn += o.fn; tn += o.tn;
        return *this;
    }
};

struct PixelMetrics {
    double precision = 0, recall = 0, f1 = 0, iou = 0, accuracy = 0;
};

struct MetricConfig {
    int rho = 3;
    double object_iou_threshold = 0.5;
    int connectivity = 8;
};

struct RelaxedMetrics {
    double precision = 0, recall = 0, f1 = 0;
};

/// Component-level counts; associative merge supports aggregation across
/// images before the final F1.
struct ObjectCounts {
    long long tp = 0, fp = 0, fn = 0;
    ObjectCounts& operator+=(const ObjectCounts& o) {
        tp += o.tp; fp += o.fp; fn += o.fn;
        return *this;
    }
    double f1() const;
};

struct ComponentLabels {
    std::vector<int> labels;  // 0 = background, components numbered from 1
    int count = 0;
};

ConfusionCounts confusion(const Mask& pred, const Mask& gt);
PixelMetrics pixel_metrics_from_counts(const ConfusionCounts& c);
PixelMetrics pixel_metrics(const Mask& pred, const Mask& gt);

/// Exact squared Euclidean distance to the nearest foreground pixel.
/// An empty mask yields a value larger than any in-image distance.
std::vector<double> edt_squared(const Mask& mask);

RelaxedMetrics relaxed_pr(const Mask& pred, const Mask& gt, int rho);

/// Deterministic ids: components numbered by raster-scan order of their
/// first pixel. Connectivity 4 or 8.
ComponentLabels connected_components(const Mask& mask, int connectivity);

ObjectCounts object_match(const Mask& pred, const Mask& gt, const MetricConfig& cfg);

struct ObjectF1Result {
    double f1 = 0;
    long long tp = 0, fp = 0, fn = 0;
};
ObjectF1Result object_f1(const Mask& pred, const Mask& gt, const MetricConfig& cfg);

}  // namespace uegan
