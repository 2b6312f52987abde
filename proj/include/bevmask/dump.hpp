#pragma once

#include <string>

#include "bevmask/raster.hpp"

namespace bevmask {

// Raster dump: header (u32 channels, u32 H, u32 W, f64 resolution) followed
// by row-major little-endian 64-bit floats. Bitwise round trip.
void write_dump(const std::string& path, const MaskStack& m);
MaskStack read_dump(const std::string& path);

// Canonical in-memory encoding (identical bytes to the file contents).
std::string dump_bytes(const MaskStack& m);

// 8-bit greyscale PGM export of one channel for visual inspection.
void write_pgm(const std::string& path, const MaskStack& m, int channel);

}  // namespace bevmask
