#pragma once

#include "plume/raster/grid.hpp"

namespace plume::raster {

/// Upsamples by an integer factor with separable 4-point cubic (Lagrange)
/// interpolation on pixel centres. The 4x4 stencil is shifted inward at the
/// borders so the scheme reproduces cubic polynomial surfaces exactly
/// everywhere. Output pixels whose stencil touches nodata are nodata.
///
/// factor must be 1, 2 or 3; the input needs at least 4x4 pixels
/// (StencilError otherwise). factor 1 returns an unchanged copy.
Raster resample_bicubic(const Raster& grid, int factor);

/// Serial reference kept for testing the parallel path above.
Raster resample_bicubic_serial(const Raster& grid, int factor);

}  // namespace plume::raster
