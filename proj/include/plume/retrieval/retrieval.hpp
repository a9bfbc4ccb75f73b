#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>

#include "plume/raster/scene.hpp"
#include "plume/rtlut/rtlut.hpp"

namespace plume::retrieval {

inline constexpr double kDefaultLookbackDays = 120.0;

struct ReferenceChoice {
    std::size_t index = 0;  // position in the history span
    std::string scene_id;
    double similarity = 0.0;  // mean absolute reflectance difference, lower is closer
    double age_days = 0.0;
};

/// Most similar usable earlier pass of the same satellite family within the
/// lookback window, compared on BLUE, GREEN, RED and SWIR1 over jointly valid
/// pixels. Ties go to the most recent candidate.
ReferenceChoice select_reference(std::span<const raster::Scene> history, const raster::Scene& current,
                                 double lookback_days = kDefaultLookbackDays);
ReferenceChoice select_reference(std::span<const raster::Scene* const> history, const raster::Scene& current,
                                 double lookback_days = kDefaultLookbackDays);

enum class Kind { Mbsp, Mbmp };
std::string_view kind_name(Kind k);

struct RetrievalProduct {
    Kind kind = Kind::Mbsp;
    raster::Raster delta_r;  // fractional signal, NaN where invalid
    raster::Raster dch4;     // ppb*m, >= 0 everywhere
    raster::Mask valid;
    double c_current = 0.0;
    std::optional<double> c_reference;
    std::string reference_id;
    double amf = 0.0;
    std::size_t negative_clipped = 0;  // pixels with tau_eff > 1 set to 0
    std::size_t saturated = 0;         // pixels beyond the LUT range set to its maximum
    bool negative_signal() const { return negative_clipped > 0; }
};

/// Zero-intercept least-squares coefficient c with c * SWIR2 ~ SWIR1 over the
/// valid pixels. RegressionError when fewer than 25% of pixels are valid or
/// SWIR1 is (numerically) constant.
double regression_coefficient(const raster::Scene& scene, const raster::Mask& valid);

/// (c * SWIR2 - SWIR1) / SWIR1 on valid pixels, NaN elsewhere.
raster::Raster mbsp_signal(const raster::Scene& scene, const raster::Mask& valid, double c);

RetrievalProduct mbsp(const raster::Scene& scene, const rtlut::RtLut& lut);
RetrievalProduct mbmp(const raster::Scene& scene, const raster::Scene& reference, const rtlut::RtLut& lut);

/// Signal only: delta_r, valid, coefficients and AMF; dch4 is left empty.
RetrievalProduct mbsp(const raster::Scene& scene);
RetrievalProduct mbmp(const raster::Scene& scene, const raster::Scene& reference);
/// Per-pixel inversion of 1 + delta_r against the ratio channel.
void invert_signal(RetrievalProduct& product, const rtlut::RtLut& lut);

/// Writes mbmp.tif (delta_r), dch4.tif and retrieval.json into `dir`.
void save_product(const RetrievalProduct& product, const raster::GeoTransform& geo, const std::filesystem::path& dir);

}  // namespace plume::retrieval
