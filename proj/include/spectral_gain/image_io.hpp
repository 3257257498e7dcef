#pragma once

#include <filesystem>

#include "spectral_gain/tensor.hpp"

namespace spectral_gain {

// One row per line, space-separated values in shortest round-trip form.
// Accepts any tensor whose height/width span its elements.
void write_matrix(const Tensor& plane, const std::filesystem::path& path);
Tensor read_matrix(const std::filesystem::path& path);

// 8-bit binary PGM with values mapped linearly from [min, max] to [0, 255];
// a constant plane maps to 0.
void write_pgm(const Tensor& plane, const std::filesystem::path& path);

// Binary P5 (grayscale) or P6 (RGB) with maxval <= 255, returned as
// (h, w, c) with raw 0..255 values. Throws FormatError on anything else.
Tensor read_pnm(const std::filesystem::path& path);

}  // namespace spectral_gain
