#pragma once

#include <memory>

#include "plume/raster/grid.hpp"
#include "plume/raster/scene.hpp"

namespace plume::raster {

enum class PixelClass : unsigned char { Clear = 0, Cloud = 1, Shadow = 2, Missing = 3 };

/// Per-pixel classification. Classes are disjoint; missing wins over cloud,
/// cloud over shadow.
using CloudMask = Grid<PixelClass>;

struct ValidityReport {
    double fraction_cloud = 0.0;
    double fraction_shadow = 0.0;
    double fraction_missing = 0.0;
    bool usable = true;
};

inline constexpr double kMaxInvalidFraction = 0.5;

/// Pluggable cloud/shadow detector.
class CloudMasker {
public:
    virtual ~CloudMasker() = default;
    virtual CloudMask classify(const Scene& scene) const = 0;
};

struct ThresholdMaskerConfig {
    double cloud_blue_min = 0.25;
    double shadow_nir_max = 0.08;
    int shadow_search_px = 30;
};

/// Default masker: bright blue flags cloud; dark NIR lying down-sun of a
/// cloud pixel (along the solar azimuth) flags shadow.
class ThresholdCloudMasker final : public CloudMasker {
public:
    explicit ThresholdCloudMasker(ThresholdMaskerConfig cfg = {}) : cfg_(cfg) {}
    CloudMask classify(const Scene& scene) const override;

private:
    ThresholdMaskerConfig cfg_;
};

ValidityReport validity_report(const Scene& scene, const CloudMask& mask);

/// Validity mask (1 = clear) derived from a classification.
Mask usable_pixels(const CloudMask& mask);

/// Fraction of unusable pixels in the scene's attached validity mask.
double invalid_fraction(const Scene& scene);
bool is_usable(const Scene& scene);

}  // namespace plume::raster
