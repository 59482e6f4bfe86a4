#include "uegan/inference.hpp"

#include <algorithm>
#include <cmath>

#include "uegan/metrics.hpp"

namespace uegan {

namespace {

std::vector<int> axis_origins(int dim, int tile, int stride) {
    std::vector<int> origins;
    for (int o = 0; o + tile <= dim; o += stride) origins.push_back(o);
    int last = dim - tile;
    if (origins.empty() || origins.back() != last) origins.push_back(last);
    return origins;
}

}  // namespace

TileGrid extract_tiles(int image_h, int image_w, int tile, double overlap) {
    if (tile > image_h || tile > image_w)
        throw DimensionError("extract_tiles: tile larger than image");
    if (tile < 1) throw DimensionError("extract_tiles: tile must be positive");
    if (overlap < 0.0 || overlap >= 1.0)
        throw ContractError("extract_tiles: overlap must be in [0, 1)");
    TileGrid grid;
    grid.image_h = image_h;
    grid.image_w = image_w;
    grid.tile = tile;
    grid.stride = std::max(1, static_cast<int>(std::lround(tile * (1.0 - overlap))));
    auto rows = axis_origins(image_h, tile, grid.stride);
    auto cols = axis_origins(image_w, tile, grid.stride);
    for (int r : rows)
        for (int c : cols) grid.origins.emplace_back(r, c);
    // Separable triangular kernel, strictly positive so single-cover pixels
    // keep a nonzero weight sum.
    grid.weight.assign(static_cast<std::size_t>(tile) * tile, 0.f);
    std::vector<float> w1d(tile);
    for (int i = 0; i < tile; ++i) w1d[i] = static_cast<float>(std::min(i, tile - 1 - i) + 1);
    for (int y = 0; y < tile; ++y)
        for (int x = 0; x < tile; ++x)
            grid.weight[static_cast<std::size_t>(y) * tile + x] = w1d[y] * w1d[x];
    return grid;
}

Raster fuse_tiles(const TileGrid& grid, const std::vector<Raster>& tile_predictions) {
    if (tile_predictions.size() != grid.origins.size())
        throw DimensionError("fuse_tiles: one prediction required per tile origin");
    Raster value(grid.image_h, grid.image_w, 0.f);
    Raster wsum(grid.image_h, grid.image_w, 0.f);
    for (std::size_t t = 0; t < grid.origins.size(); ++t) {
        const Raster& p = tile_predictions[t];
        if (p.h != grid.tile || p.w != grid.tile)
            throw DimensionError("fuse_tiles: tile prediction has wrong size");
        auto [oy, ox] = grid.origins[t];
        for (int y = 0; y < grid.tile; ++y)
            for (int x = 0; x < grid.tile; ++x) {
                float w = grid.weight[static_cast<std::size_t>(y) * grid.tile + x];
                value.at(oy + y, ox + x) += w * p.at(y, x);
                wsum.at(oy + y, ox + x) += w;
            }
    }
    Raster out(grid.image_h, grid.image_w);
    for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] = value.v[i] / wsum.v[i];
    return out;
}

Tensor transform_tensor(const Tensor& t, int op) {
    if (op == 0) return t;
    bool swaps = op >= 3 && op != 4;  // rot90/rot270 swap axes
    int oh = swaps ? t.w : t.h;
    int ow = swaps ? t.h : t.w;
    Tensor out(t.n, t.c, oh, ow);
    for (int n = 0; n < t.n; ++n)
        for (int c = 0; c < t.c; ++c)
            for (int y = 0; y < t.h; ++y)
                for (int x = 0; x < t.w; ++x) {
                    int ny = y, nx = x;
                    switch (op) {
                        case 1: ny = y; nx = t.w - 1 - x; break;          // h-flip
                        case 2: ny = t.h - 1 - y; nx = x; break;          // v-flip
                        case 3: ny = x; nx = t.h - 1 - y; break;          // rot90 ccw->cw mapping
                        case 4: ny = t.h - 1 - y; nx = t.w - 1 - x; break;  // rot180
                        case 5: ny = t.w - 1 - x; nx = y; break;          // rot270
                        default: throw ContractError("transform_tensor: bad op");
                    }
                    out.at(n, c, ny, nx) = t.at(n, c, y, x);
                }
    return out;
}

Raster transform_raster(const Raster& r, int op) {
    Tensor t(1, 1, r.h, r.w);
    t.data = r.v;
    Tensor tt = transform_tensor(t, op);
    Raster out(tt.h, tt.w);
    out.v = tt.data;
    return out;
}

Raster inverse_transform(const Raster& r, int op) {
    static const int inverse[] = {0, 1, 2, 5, 4, 3};
    if (op < 0 || op > 5) throw ContractError("inverse_transform: bad op");
    return transform_raster(r, inverse[op]);
}

Raster tta_predict(const Tensor& image, const TileModel& model) {
    if (image.h != image.w)
        throw DimensionError("tta_predict: rotations require square spatial input");
    Raster acc(image.h, image.w, 0.f);
    for (int op = 0; op < 6; ++op) {
        Raster pred = model(transform_tensor(image, op));
        Raster aligned = inverse_transform(pred, op);
        if (!aligned.same_shape(acc)) throw DimensionError("tta_predict: model changed size");
        for (std::size_t i = 0; i < acc.v.size(); ++i) acc.v[i] += aligned.v[i];
    }
    for (auto& v : acc.v) v /= 6.f;
    return acc;
}

Raster ensemble_average(const std::vector<Raster>& predictions) {
    if (predictions.empty()) throw ContractError("ensemble_average: empty prediction list");
    Raster out(predictions[0].h, predictions[0].w, 0.f);
    for (const auto& p : predictions) {
        if (!p.same_shape(out)) throw DimensionError("ensemble_average: shape mismatch");
        for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += p.v[i];
    }
    for (auto& v : out.v) v /= static_cast<float>(predictions.size());
    return out;
}

double select_threshold(const std::vector<Raster>& pred_probs, const std::vector<Mask>& gts,
                        const std::string& metric) {
    if (pred_probs.empty() || pred_probs.size() != gts.size())
        throw ContractError("select_threshold: need matching nonempty prediction/gt lists");
    if (metric != "iou" && metric != "f1")
        throw ConfigError("select_threshold: metric must be iou or f1");
    double best_score = -1.0, best_t = 0.5, best_dist = 1e9;
    for (int k = 1; k <= 99; ++k) {
        double t = k * 0.01;
        ConfusionCounts agg;
        for (std::size_t i = 0; i < pred_probs.size(); ++i)
            agg += confusion(binarize(pred_probs[i], static_cast<float>(t)), gts[i]);
        auto m = pixel_metrics_from_counts(agg);
        double score = metric == "iou" ? m.iou : m.f1;
        double dist = std::abs(t - 0.5);
        if (score > best_score + 1e-12 ||
            (std::abs(score - best_score) <= 1e-12 && dist < best_dist - 1e-12)) {
            best_score = score;
            best_t = t;
            best_dist = dist;
        }
    }
    return best_t;
}

Raster predict_tiled(const Tensor& image, const TileModel& model, int tile, double overlap,
                     bool tta) {
    if (image.n != 1) throw DimensionError("predict_tiled: batch must be 1");
    TileGrid grid = extract_tiles(image.h, image.w, tile, overlap);
    std::vector<Raster> preds;
    preds.reserve(grid.origins.size());
    for (auto [oy, ox] : grid.origins) {
        Tensor patch(1, image.c, tile, tile);
        for (int c = 0; c < image.c; ++c)
            for (int y = 0; y < tile; ++y)
                for (int x = 0; x < tile; ++x)
                    patch.at(0, c, y, x) = image.at(0, c, oy + y, ox + x);
        preds.push_back(tta ? tta_predict(patch, model) : model(patch));
    }
    return fuse_tiles(grid, preds);
}

}  // namespace uegan
