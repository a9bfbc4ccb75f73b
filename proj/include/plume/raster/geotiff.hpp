#pragma once

#include <filesystem>
#include <optional>

#include "plume/raster/grid.hpp"

namespace plume::raster {

/// Affine georeference of a north-up raster: upper-left corner of the
/// upper-left pixel plus pixel size in CRS units.
struct GeoTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_size = 10.0;
    int epsg = 0;

    friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

struct GeoRaster {
    Raster grid;
    GeoTransform geo;
};

/// Minimal baseline-TIFF codec: single band, uncompressed, strip or tile
/// layout on read; float32 single strip on write. GeoTIFF tags handled are
/// ModelPixelScale, ModelTiepoint and the projected-CRS GeoKey.
GeoRaster read_geotiff(const std::filesystem::path& path);
void write_geotiff(const std::filesystem::path& path, const GeoRaster& raster);

}  // namespace plume::raster
