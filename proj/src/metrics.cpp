#include "uegan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <tuple>

namespace uegan {

namespace {

// 0/0 ratios: 1 if both masks are empty, else 0.
double ratio(long long num, long long den, bool both_empty) {
    if (den == 0) return both_empty ? 1.0 : 0.0;
    return static_cast<double>(num) / static_cast<double>(den);
}

// Felzenszwalb-Huttenlocher 1D squared distance transform.
void dt1d(const std::vector<double>& f, std::vector<double>& d, int n) {
    static thread_local std::vector<int> v;
    static thread_local std::vector<double> z;
    v.assign(n, 0);
    z.assign(n + 1, 0.0);
    int k = 0;
    v[0] = 0;
    z[0] = -std::numeric_limits<double>::infinity();
    z[1] = std::numeric_limits<double>::infinity();
    for (int q = 1; q < n; ++q) {
        double s;
        for (;;) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s > z[k]) break;
            --k;
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = std::numeric_limits<double>::infinity();
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        double dq = q - v[k];
        d[q] = dq * dq + f[v[k]];
    }
}

}  // namespace

ConfusionCounts confusion(const Mask& pred, const Mask& gt) {
    if (!pred.same_shape(gt)) throw DimensionError("confusion: mask shape mismatch");
    ConfusionCounts c;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        bool p = pred.v[i] != 0, g = gt.v[i] != 0;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

PixelMetrics pixel_metrics_from_counts(const ConfusionCounts& c) {
    bool both_empty = c.tp + c.fp == 0 && c.tp + c.fn == 0;
    PixelMetrics m;
    m.precision = ratio(c.tp, c.tp + c.fp, both_empty);
    m.recall = ratio(c.tp, c.tp + c.fn, both_empty);
    m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, both_empty);
    m.iou = ratio(c.tp, c.tp + c.fp + c.fn, both_empty);
    long long total = c.tp + c.fp + c.fn + c.tn;
    m.accuracy = total == 0 ? 1.0 : static_cast<double>(c.tp + c.tn) / total;
    return m;
}

PixelMetrics pixel_metrics(const Mask& pred, const Mask& gt) {
    return pixel_metrics_from_counts(confusion(pred, gt));
}

std::vector<double> edt_squared(const Mask& mask) {
    int h = mask.h, w = mask.w;
    double inf = 1e18;
    std::vector<double> d(static_cast<std::size_t>(h) * w);
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = mask.v[i] ? 0.0 : inf;
    std::vector<double> col(h), dcol(h);
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) col[y] = d[static_cast<std::size_t>(y) * w + x];
        dt1d(col, dcol, h);
        for (int y = 0; y < h; ++y) d[static_cast<std::size_t>(y) * w + x] = dcol[y];
    }
    std::vector<double> row(w), drow(w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) row[x] = d[static_cast<std::size_t>(y) * w + x];
        dt1d(row, drow, w);
        for (int x = 0; x < w; ++x) d[static_cast<std::size_t>(y) * w + x] = drow[x];
    }
    return d;
}

RelaxedMetrics relaxed_pr(const Mask& pred, const Mask& gt, int rho) {
    if (!pred.same_shape(gt)) throw DimensionError("relaxed_pr: mask shape mismatch");
    if (rho < 0) throw ContractError("relaxed_pr: rho must be >= 0");
    double r2 = static_cast<double>(rho) * rho;
    auto dist_gt = edt_squared(gt);
    auto dist_pred = edt_squared(pred);
    long long pred_fg = 0, pred_ok = 0, gt_fg = 0, gt_ok = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        if (pred.v[i]) {
            ++pred_fg;
            if (dist_gt[i] <= r2) ++pred_ok;
        }
        if (gt.v[i]) {
            ++gt_fg;
            if (dist_pred[i] <= r2) ++gt_ok;
        }
    }
    bool both_empty = pred_fg == 0 && gt_fg == 0;
    RelaxedMetrics m;
    m.precision = ratio(pred_ok, pred_fg, both_empty);
    m.recall = ratio(gt_ok, gt_fg, both_empty);
    if (m.precision + m.recall > 0)
        m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
    else
        m.f1 = both_empty ? 1.0 : 0.0;
    return m;
}

ComponentLabels connected_components(const Mask& mask, int connectivity) {
    if (connectivity != 4 && connectivity != 8)
        throw ContractError("connected_components: connectivity must be 4 or 8");
    ComponentLabels out;
    out.labels.assign(mask.v.size(), 0);
    int h = mask.h, w = mask.w;
    static const int dy8[] = {-1, -1, -1, 0, 0, 1, 1, 1};
    static const int dx8[] = {-1, 0, 1, -1, 1, -1, 0, 1};
    static const int dy4[] = {-1, 0, 0, 1};
    static const int dx4[] = {0, -1, 1, 0};
    const int* dy = connectivity == 8 ? dy8 : dy4;
    const int* dx = connectivity == 8 ? dx8 : dx4;
    int nn = connectivity;
    std::deque<int> queue;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::size_t i = static_cast<std::size_t>(y) * w + x;
            if (!mask.v[i] || out.labels[i]) continue;
            int id = ++out.count;
            out.labels[i] = id;
            queue.push_back(static_cast<int>(i));
            while (!queue.empty()) {
                int cur = queue.front();
                queue.pop_front();
                int cy = cur / w, cx = cur % w;
                for (int k = 0; k < nn; ++k) {
                    int ny = cy + dy[k], nx = cx + dx[k];
                    if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                    std::size_t ni = static_cast<std::size_t>(ny) * w + nx;
                    if (mask.v[ni] && !out.labels[ni]) {
                        out.labels[ni] = id;
                        queue.push_back(static_cast<int>(ni));
                    }
                }
            }
        }
    return out;
}

ObjectCounts object_match(const Mask& pred, const Mask& gt, const MetricConfig& cfg) {
    if (!pred.same_shape(gt)) throw DimensionError("object_match: mask shape mismatch");
    auto pc = connected_components(pred, cfg.connectivity);
    auto gc = connected_components(gt, cfg.connectivity);
    // Per-component sizes and pairwise intersections.
    std::vector<long long> psize(pc.count + 1, 0), gsize(gc.count + 1, 0);
    std::map<std::pair<int, int>, long long> inter;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        int pl = pc.labels[i], gl = gc.labels[i];
        if (pl) ++psize[pl];
        if (gl) ++gsize[gl];
        if (pl && gl) ++inter[{gl, pl}];
    }
    // Candidate pairs above threshold, greedy in descending IoU; ties broken
    // by (gt id, pred id) for determinism.
    struct Cand { double iou; int g, p; };
    std::vector<Cand> cands;
    for (const auto& [key, is] : inter) {
        auto [gl, pl] = key;
        double iou = static_cast<double>(is) / static_cast<double>(gsize[gl] + psize[pl] - is);
        if (iou >= cfg.object_iou_threshold) cands.push_back({iou, gl, pl});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        return std::tie(a.g, a.p) < std::tie(b.g, b.p);
    });
    std::vector<char> gused(gc.count + 1, 0), pused(pc.count + 1, 0);
    ObjectCounts counts;
    for (const auto& c : cands) {
        if (gused[c.g] || pused[c.p]) continue;
        gused[c.g] = pused[c.p] = 1;
        ++counts.tp;
    }
    counts.fp = pc.count - counts.tp;
    counts.fn = gc.count - counts.tp;
    return counts;
}

double ObjectCounts::f1() const {
    long long den = 2 * tp + fp + fn;
    if (den == 0) return 1.0;
    return 2.0 * static_cast<double>(tp) / static_cast<double>(den);
}

ObjectF1Result object_f1(const Mask& pred, const Mask& gt, const MetricConfig& cfg) {
    auto c = object_match(pred, gt, cfg);
    return ObjectF1Result{c.f1(), c.tp, c.fp, c.fn};
}

}  // namespace uegan
