#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "uegan/raster.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

struct TileGrid {
    int image_h = 0, image_w = 0;
    int tile = 0;
    int stride = 0;
    std::vector<std::pair<int, int>> origins;  // (row, col), row-major order
    std::vector<float> weight;                 // tile*tile separable triangular kernel
};

/// Overlapping tile layout: stride = round(tile*(1-overlap)), origins at
/// multiples of the stride, final origin clamped to dim-tile.
TileGrid extract_tiles(int image_h, int image_w, int tile, double overlap);

/// Per-pixel weighted average of tile predictions, accumulated in fixed
/// origin order. Weights are center-peaked and strictly positive.
Raster fuse_tiles(const TileGrid& grid, const std::vector<Raster>& tile_predictions);

/// Model under test-time augmentation: (1,C,H,W) image -> probability raster.
using TileModel = std::function<Raster(const Tensor&)>;

/// Identity, h-flip, v-flip, rot90/180/270; inverse-aligned predictions are
/// averaged in probability space. Requires square spatial input.
Raster tta_predict(const Tensor& image, const TileModel& model);

Raster ensemble_average(const std::vector<Raster>& predictions);

/// Sweeps thresholds 0.01..0.99 (step 0.01) maximizing the aggregate metric
/// ("iou" or "f1") over the validation pairs; ties break toward 0.5.
double select_threshold(const std::vector<Raster>& pred_probs, const std::vector<Mask>& gts,
                        const std::string& metric);

/// Tile + optional TTA + fuse over a full image.
Raster predict_tiled(const Tensor& image, const TileModel& model, int tile, double overlap,
                     bool tta);

// Geometric transforms shared with augmentation / TTA tests.
Tensor transform_tensor(const Tensor& t, int op);    // op in [0,6): id,h,v,r90,r180,r270
Raster inverse_transform(const Raster& r, int op);
Raster transform_raster(const Raster& r, int op);

}  // namespace uegan
