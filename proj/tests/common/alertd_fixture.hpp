#pragma once

// A hermetic ingest day for alertd: three monitored sites, a month of clear
// history passes per onshore site and one new pass per site on the fixture
// day. The tm_02 pass is mostly cloud.

#include <filesystem>
#include <string>
#include <vector>

#include "plume/raster/registry.hpp"
#include "plume/raster/validity.hpp"
#include "plume/rtlut/rtlut.hpp"
#include "plume/simulator/simulator.hpp"
#include "plume/synthetic/synthetic.hpp"

namespace fixture {

inline constexpr const char* kDay = "2023-06-14T00:00:00Z";
inline constexpr int kSize = 64;

struct IngestDay {
    std::vector<plume::raster::SiteRecord> sites;
    plume::raster::Timestamp day_start{};
    plume::raster::Timestamp day_end{};
    std::string plume_scene;   // usable onshore pass carrying an injected plume
    std::string offshore_scene;
    std::string cloudy_scene;
};

inline plume::raster::SiteRecord site(std::string id, std::string country, bool offshore) {
    plume::raster::SiteRecord s;
    s.site_id = std::move(id);
    s.country = std::move(country);
    s.offshore = offshore;
    s.sector = offshore ? plume::raster::Sector::Offshore : plume::raster::Sector::OilGas;
    s.lon = 54.0;
    s.lat = 38.5;
    return s;
}

/// Writes scene bundles under `scene_root/<site>/<timestamp>/` and the site
/// registry to `registry_csv`.
inline IngestDay write_ingest_day(const std::filesystem::path& scene_root, const std::filesystem::path& registry_csv,
                                  const plume::rtlut::RtLut& lut) {
    using namespace plume;
    using namespace std::chrono;
    IngestDay day;
    day.sites = {site("tm_01", "Turkmenistan", false), site("tm_02", "Turkmenistan", false),
                 site("off_01", "Norway", true)};
    raster::save_site_registry(day.sites, registry_csv);
    day.day_start = raster::parse_timestamp(kDay);
    day.day_end = day.day_start + days(1);

    std::uint64_t seed = 71;
    for (const auto& s : day.sites) {
        synthetic::SiteStyle style;
        style.site_id = s.site_id;
        style.country = s.country;
        style.noise = 0.0;
        style.cloud_probability = 0.0;
        Rng rng(seed++);
        const auto surface = synthetic::make_surface(kSize, kSize, style, rng);
        const raster::Wind wind{3.0, 1.0};
        const synthetic::PassOptions clear{false, 0.01};
        if (!s.offshore)
            for (int back : {30, 20, 10}) {
                auto p = synthetic::make_pass(surface, style, day.day_start - days(back) + hours(10), wind, rng, clear);
                raster::save_scene(p, scene_root / s.site_id / raster::format_timestamp_compact(p.timestamp));
            }
        auto today = synthetic::make_pass(surface, style, day.day_start + hours(10) + minutes(20), wind, rng, clear);
        if (s.site_id == "tm_01") {
            const auto plume = synthetic::make_plume(kSize, kSize, today.source_px, wind, 3000.0,
                                                     synthetic::PlumeShape{}, "fixture");
            today = simulator::inject_plume(today, plume, lut);
            day.plume_scene = today.scene_id();
        } else if (s.site_id == "tm_02") {
            for (auto& band : today.bands)
                for (int r = 0; r < kSize * 3 / 4; ++r)
                    for (int c = 0; c < kSize; ++c) band(r, c) = 0.5;
            today.validity = raster::usable_pixels(raster::ThresholdCloudMasker{}.classify(today));
            day.cloudy_scene = today.scene_id();
        } else {
            today.wind_source = "geos-fp";
            day.offshore_scene = today.scene_id();
        }
        raster::save_scene(today, scene_root / s.site_id / raster::format_timestamp_compact(today.timestamp));
    }
    return day;
}

}  // namespace fixture
