#pragma once

#include <cstddef>

#include <json.hpp>

#include "plume/raster/grid.hpp"
#include "plume/raster/scene.hpp"

namespace plume::quantify {

/// Molar mass of methane, kg/mol.
inline constexpr double kMolarMassCh4 = 0.01604;
/// Single source of truth for column conversion: 1 ppb*m = 4.462e-8 mol/m^2
/// (ideal gas, 1013.25 hPa, 288.15 K).
inline constexpr double kMolPerM2PerPpbM = 4.462e-8;
inline constexpr double kDefaultPixelAreaM2 = 100.0;

/// Effective wind U_eff = alpha * U10 + beta plus the fractional wind error
/// used for the uncertainty. Only wind uncertainty is propagated.
struct FluxConfig {
    double alpha = 0.33;
    double beta = 0.45;  // m/s
    double wind_fractional_error = 0.5;
    double pixel_area_m2 = kDefaultPixelAreaM2;
};

struct FluxEstimate {
    double flux_kg_h = 0.0;
    double uncertainty_kg_h = 0.0;
    double ime_kg = 0.0;
    double plume_length_m = 0.0;
    double u_eff_m_s = 0.0;
    std::size_t mask_pixels = 0;
    FluxConfig config;

    nlohmann::json to_json() const;
};

/// Integrated mass enhancement over the mask, kg. dch4 in ppb*m must be
/// non-negative on the mask; EmptyMask for an empty mask, GridMismatch when
/// the mask does not match the raster.
double ime(const raster::Raster& dch4, const raster::Mask& mask, double pixel_area_m2 = kDefaultPixelAreaM2);

/// flux = U_eff * IME / L * 3600 with L = sqrt(mask area). WindUndefined for zero wind.
FluxEstimate flux(const raster::Raster& dch4, const raster::Mask& mask, raster::Wind wind,
                  const FluxConfig& cfg = {});

}  // namespace plume::quantify
