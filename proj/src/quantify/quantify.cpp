#include "plume/quantify/quantify.hpp"

#include <cmath>
#include <string>

#include "plume/errors.hpp"

namespace plume::quantify {

double ime(const raster::Raster& dch4, const raster::Mask& mask, double pixel_area_m2) {
    if (!dch4.same_shape(mask)) throw GridMismatch("plume mask does not match the concentration raster");
    std::size_t n = 0;
    double column_sum = 0.0;  // ppb*m
    for (std::size_t i = 0; i < mask.size(); ++i) {
        if (!mask[i]) continue;
        ++n;
        const double v = dch4[i];
        if (!(v >= 0.0)) throw RangeError("negative or missing dch4 inside the plume mask");
        column_sum += v;
    }
    if (n == 0) throw EmptyMask("plume mask is empty");
    return column_sum * kMolPerM2PerPpbM * pixel_area_m2 * kMolarMassCh4;
}

FluxEstimate flux(const raster::Raster& dch4, const raster::Mask& mask, raster::Wind wind, const FluxConfig& cfg) {
    const double u10 = wind.speed();
    if (!(u10 > 0.0)) throw WindUndefined("wind speed must be positive for flux estimation");
    FluxEstimate f;
    f.config = cfg;
    f.ime_kg = ime(dch4, mask, cfg.pixel_area_m2);
    f.mask_pixels = raster::count_true(mask);
    f.plume_length_m = std::sqrt(static_cast<double>(f.mask_pixels) * cfg.pixel_area_m2);
    f.u_eff_m_s = cfg.alpha * u10 + cfg.beta;
    f.flux_kg_h = f.u_eff_m_s * f.ime_kg / f.plume_length_m * 3600.0;
    // dU_eff = alpha * dU10 with dU10 = fractional error * U10.
    const double du_eff = cfg.alpha * cfg.wind_fractional_error * u10;
    f.uncertainty_kg_h = du_eff * f.ime_kg / f.plume_length_m * 3600.0;
    return f;
}

nlohmann::json FluxEstimate::to_json() const {
    return {
        {"flux_kg_h", flux_kg_h},
        {"uncertainty_kg_h", uncertainty_kg_h},
        {"ime_kg", ime_kg},
        {"L_m", plume_length_m},
        {"u_eff", u_eff_m_s},
        {"mask_pixels", mask_pixels},
        {"alpha", config.alpha},
        {"beta", config.beta},
        {"wind_fractional_error", config.wind_fractional_error},
        {"uncertainty_model", "wind-only"},
    };
}

}  // namespace plume::quantify
