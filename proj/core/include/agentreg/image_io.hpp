#pragma once

// Netpbm images: binary P5 (grey) and P6 (RGB), 8 or 16 bits per sample.

#include <iosfwd>
#include <string>

#include "agentreg/numerics.hpp"

namespace agentreg {

/// H×W×1 for P5, H×W×3 for P6; samples scaled to [0, 1].
Tensor read_pnm(std::istream& in);
Tensor read_pnm(const std::string& path);

/// Writes P5 or P6 at 8 bits, mapping [lo, hi] linearly to [0, 255].
void write_pnm(std::ostream& out, const Tensor& image, double lo, double hi);
void write_pnm(const std::string& path, const Tensor& image, double lo, double hi);

}  // namespace agentreg
