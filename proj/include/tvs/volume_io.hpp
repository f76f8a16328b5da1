#pragma once

#include <string>

#include "tvs/compounding.hpp"
#include "tvs/imaging.hpp"
#include "tvs/phantom.hpp"

namespace tvs {

// Atomic text write: stage to <path>.tmp, then rename over the target.
void atomic_write_text(const std::string& path, const std::string& content);

std::string read_text(const std::string& path);

// Raw little-endian uint8 voxel dump (x fastest, then y, then z) at
// <base>.raw plus a JSON sidecar at <base>.json describing dims, spacing,
// origin and dtype.
void write_label_grid(const LabelGrid& grid, const std::string& base_path);
void write_label_volume(const LabelVolume& vol, const std::string& base_path);
void write_intensity_volume(const IntensityVolume& vol, const std::string& base_path);

// Binary 8-bit PGM, one frame per file.
void write_pgm(const Image8& img, const std::string& path);

}  // namespace tvs
