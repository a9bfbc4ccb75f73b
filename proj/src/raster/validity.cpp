#include "plume/raster/validity.hpp"

#include <cmath>
#include <numbers>

#include "plume/errors.hpp"

namespace plume::raster {

CloudMask ThresholdCloudMasker::classify(const Scene& scene) const {
    const int rows = scene.rows();
    const int cols = scene.cols();
    const auto& blue = scene.band(Band::Blue);
    const auto& nir = scene.band(Band::Nir);
    CloudMask out(rows, cols, PixelClass::Clear);

    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            bool missing = false;
            for (Band b : kAllBands)
                if (!std::isfinite(scene.band(b)(r, c))) missing = true;
            if (missing) out(r, c) = PixelClass::Missing;
            else if (blue(r, c) > cfg_.cloud_blue_min) out(r, c) = PixelClass::Cloud;
        }

    // Shadows fall on the side away from the sun. Azimuth is clockwise from
    // north, so the step towards the sun is (-cos az, +sin az) in (row, col).
    const double az = scene.solar_azimuth_deg * std::numbers::pi / 180.0;
    const double step_r = -std::cos(az);
    const double step_c = std::sin(az);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (out(r, c) != PixelClass::Clear || !(nir(r, c) < cfg_.shadow_nir_max)) continue;
            for (int k = 1; k <= cfg_.shadow_search_px; ++k) {
                const int rr = r + static_cast<int>(std::lround(step_r * k));
                const int cc = c + static_cast<int>(std::lround(step_c * k));
                if (!out.in_bounds(rr, cc)) break;
                if (out(rr, cc) == PixelClass::Cloud) {
                    out(r, c) = PixelClass::Shadow;
                    break;
                }
            }
        }
    return out;
}

ValidityReport validity_report(const Scene& scene, const CloudMask& mask) {
    if (mask.rows() != scene.rows() || mask.cols() != scene.cols())
        throw GridMismatch("cloud mask shape differs from scene");
    std::size_t cloud = 0, shadow = 0, missing = 0;
    for (auto v : mask) {
        cloud += v == PixelClass::Cloud;
        shadow += v == PixelClass::Shadow;
        missing += v == PixelClass::Missing;
    }
    const double n = static_cast<double>(mask.size());
    ValidityReport rep;
    if (n == 0) {
        rep.usable = false;
        return rep;
    }
    rep.fraction_cloud = cloud / n;
    rep.fraction_shadow = shadow / n;
    rep.fraction_missing = missing / n;
    // Compare counts rather than summed fractions to avoid rounding at exactly 50%.
    rep.usable = static_cast<double>(cloud + shadow + missing) <= kMaxInvalidFraction * n;
    return rep;
}

Mask usable_pixels(const CloudMask& mask) {
    Mask out(mask.rows(), mask.cols());
    for (std::size_t i = 0; i < mask.size(); ++i) out[i] = mask[i] == PixelClass::Clear ? 1 : 0;
    return out;
}

double invalid_fraction(const Scene& scene) {
    if (scene.validity.empty()) return 0.0;
    const auto usable = count_true(scene.validity);
    return 1.0 - static_cast<double>(usable) / static_cast<double>(scene.validity.size());
}

bool is_usable(const Scene& scene) {
    if (scene.validity.empty()) return true;
    const auto bad = scene.validity.size() - count_true(scene.validity);
    return static_cast<double>(bad) <= kMaxInvalidFraction * static_cast<double>(scene.validity.size());
}

}  // namespace plume::raster
