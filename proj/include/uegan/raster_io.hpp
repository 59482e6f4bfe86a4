#pragma once

#include <string>
#include <utility>
#include <vector>

#include "uegan/network.hpp"
#include "uegan/raster.hpp"
#include "uegan/tensor.hpp"

namespace uegan {

/// Binary PPM (P6), RGB scaled to [0,1], as a (1,3,H,W) tensor.
Tensor load_ppm(const std::string& path);
void save_ppm(const std::string& path, const Tensor& image);

/// Binary PGM (P5). Masks binarize at 128 (255 = building).
Mask load_mask_pgm(const std::string& path);
Raster load_raster_pgm(const std::string& path);
void save_pgm(const std::string& path, const Mask& mask);

/// Gray values scaled linearly; autoscale maps [min,max] -> [0,255], useful
/// for exporting attention maps for inspection.
void save_pgm(const std::string& path, const Raster& raster, bool autoscale = false);

/// UEGT checkpoint container: magic "UEGT", then an ordered list of named
/// tensors (u16 name length, UTF-8 name, u32 rank, u32 dims, f32 payload),
/// all little-endian.
void save_checkpoint(const std::string& path, const ParamSet& params);
std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path);

/// Loads a checkpoint into an existing parameter set; every entry must match
/// an existing parameter's name and shape, and cover the set exactly.
void load_checkpoint_into(const std::string& path, ParamSet& params);

}  // namespace uegan
