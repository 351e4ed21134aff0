#pragma once

#include <string>

#include "imitate/phantom.hpp"

namespace imitate::phantom {

/// Dataset directory layout: 16-bit grayscale slice PNGs, 8-bit label mask
/// PNGs, and a manifest.json with per-slice metadata plus a full echo of the
/// generating spec, plan, and signal state.
void save_dataset(const SliceDataset& dataset, const std::string& dir);
SliceDataset load_dataset(const std::string& dir);

std::string slice_filename(int position, int index);
std::string mask_filename(int position, int index);

}  // namespace imitate::phantom
