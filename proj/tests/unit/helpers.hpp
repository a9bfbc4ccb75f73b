#pragma once

#include <filesystem>
#include <random>
#include <unistd.h>
#include <string>

#include "plume/raster/scene.hpp"
#include "plume/rng.hpp"

namespace testutil {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("plume_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Clear scene with mildly textured bands and SWIR2 = swir_ratio * SWIR1.
inline plume::raster::Scene flat_scene(int rows, int cols, std::uint64_t seed, double swir_ratio = 0.75) {
    using namespace plume::raster;
    plume::Rng rng(seed);
    Scene s;
    s.site_id = "site_a";
    s.timestamp = parse_timestamp("2021-05-04T10:20:30Z");
    s.wind = {3.0, -1.0};
    s.source_px = {rows / 2, cols / 2};
    const double base[6] = {0.08, 0.11, 0.14, 0.24, 0.30, 0.0};
    for (int b = 0; b < 5; ++b) {
        s.bands[b] = Raster(rows, cols);
        for (auto& v : s.bands[b]) v = base[b] * (1.0 + 0.2 * plume::uniform01(rng));
    }
    s.bands[5] = Raster(rows, cols);
    for (std::size_t i = 0; i < s.bands[5].size(); ++i) s.bands[5][i] = swir_ratio * s.bands[4][i];
    s.validity = Mask(rows, cols, 1);
    return s;
}

}  // namespace testutil
