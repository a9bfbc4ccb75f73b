#pragma once

#include <array>
#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "plume/raster/geotiff.hpp"
#include "plume/raster/grid.hpp"

namespace plume::raster {

/// The six bands shared by MSI and OLI. Coastal aerosol and cirrus bands are
/// deliberately not representable.
enum class Band : int { Blue = 0, Green, Red, Nir, Swir1, Swir2 };
inline constexpr int kBandCount = 6;
inline constexpr std::array<Band, kBandCount> kAllBands = {Band::Blue, Band::Green, Band::Red,
                                                           Band::Nir,  Band::Swir1, Band::Swir2};

enum class Satellite { S2A, S2B, L8, L9 };

std::string_view band_name(Band b);
std::string_view satellite_name(Satellite s);
Satellite parse_satellite(std::string_view s);
bool is_landsat(Satellite s);
/// Satellites of the same family may serve as reference passes for one another.
bool same_family(Satellite a, Satellite b);
/// File stem of a band in a scene bundle, e.g. "B11" (Sentinel-2) or "B6" (Landsat).
std::string band_file_stem(Satellite s, Band b);

using Timestamp = std::chrono::sys_seconds;

/// ISO-8601 UTC, "2023-01-15T10:30:21Z".
std::string format_timestamp(Timestamp t);
/// Compact form used for bundle directory names, "20230115T103021".
std::string format_timestamp_compact(Timestamp t);
/// Accepts either of the two forms above.
Timestamp parse_timestamp(std::string_view s);

struct Wind {
    double u = 0.0;  // eastward, m/s
    double v = 0.0;  // northward, m/s
    double speed() const { return std::hypot(u, v); }
};

struct PixelPos {
    int row = 0;
    int col = 0;
    friend bool operator==(const PixelPos&, const PixelPos&) = default;
};

inline constexpr double kTargetResolutionM = 10.0;
inline constexpr double kCropEdgeM = 2000.0;

/// One pass over one site. Bands are resampled to 10 m and share one grid.
struct Scene {
    std::string site_id;
    Satellite satellite = Satellite::S2A;
    Timestamp timestamp{};
    std::array<Raster, kBandCount> bands;
    Mask validity;  // 1 = usable pixel
    Wind wind;
    std::string wind_source = "era5-land";
    GeoTransform geo;
    double solar_zenith_deg = 30.0;
    double view_zenith_deg = 5.0;
    double solar_azimuth_deg = 135.0;
    PixelPos source_px;  // registered emission source inside the crop
    bool synthetic = false;
    std::optional<Mask> truth_mask;

    int rows() const { return bands[0].rows(); }
    int cols() const { return bands[0].cols(); }
    Raster& band(Band b) { return bands[static_cast<int>(b)]; }
    const Raster& band(Band b) const { return bands[static_cast<int>(b)]; }
    /// "{site_id}/{compact timestamp}", stable across runs.
    std::string scene_id() const;
    double crop_edge_m() const { return rows() * geo.pixel_size; }
};

/// Checks the cross-band invariants and throws GridMismatch on violation.
void check_scene(const Scene& scene);

struct LoadOptions {
    bool apply_cloud_mask = true;
};

/// Loads `{site_id}/{timestamp}/` containing one GeoTIFF per band plus
/// meta.json. Coarser bands are bicubically upsampled to 10 m.
Scene load_scene(const std::filesystem::path& bundle, const LoadOptions& opts = {});

/// Writes a bundle that load_scene reads back bit-for-bit.
void save_scene(const Scene& scene, const std::filesystem::path& bundle);

}  // namespace plume::raster
