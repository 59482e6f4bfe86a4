#pragma once

#include <cstdint>
#include <vector>

#include "uegan/common.hpp"

namespace uegan {

/// Single-channel {0,1} raster.
struct Mask {
    int h = 0, w = 0;
    std::vector<uint8_t> v;

    Mask() = default;
    Mask(int h_, int w_) : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, 0) {}

    uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Mask& o) const { return h == o.h && w == o.w; }
    bool empty_fg() const {
        for (uint8_t b : v)
            if (b) return false;
        return true;
    }
};

/// Single-channel float raster (probabilities, attention weights).
struct Raster {
    int h = 0, w = 0;
    std::vector<float> v;

    Raster() = default;
    Raster(int h_, int w_, float fill = 0.f)
        : h(h_), w(w_), v(static_cast<std::size_t>(h_) * w_, fill) {}

    float& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }
    float at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const Raster& o) const { return h == o.h && w == o.w; }
};

inline Mask binarize(const Raster& r, float threshold) {
    Mask m(r.h, r.w);
    for (std::size_t i = 0; i < r.v.size(); ++i) m.v[i] = r.v[i] >= threshold ? 1 : 0;
    return m;
}

}  // namespace uegan
