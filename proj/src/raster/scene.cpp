#include "plume/raster/scene.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "plume/errors.hpp"
#include "plume/raster/resample.hpp"
#include "plume/raster/validity.hpp"

namespace plume::raster {

using nlohmann::json;

std::string_view band_name(Band b) {
    switch (b) {
        case Band::Blue: return "BLUE";
        case Band::Green: return "GREEN";
        case Band::Red: return "RED";
        case Band::Nir: return "NIR";
        case Band::Swir1: return "SWIR1";
        case Band::Swir2: return "SWIR2";
    }
    return "?";
}

std::string_view satellite_name(Satellite s) {
    switch (s) {
        case Satellite::S2A: return "S2A";
        case Satellite::S2B: return "S2B";
        case Satellite::L8: return "L8";
        case Satellite::L9: return "L9";
    }
    return "?";
}

Satellite parse_satellite(std::string_view s) {
    if (s == "S2A") return Satellite::S2A;
    if (s == "S2B") return Satellite::S2B;
    if (s == "L8") return Satellite::L8;
    if (s == "L9") return Satellite::L9;
    throw FormatError("unknown satellite '" + std::string(s) + "'");
}

bool is_landsat(Satellite s) { return s == Satellite::L8 || s == Satellite::L9; }
bool same_family(Satellite a, Satellite b) { return is_landsat(a) == is_landsat(b); }

std::string band_file_stem(Satellite s, Band b) {
    static constexpr std::array<const char*, kBandCount> msi = {"B02", "B03", "B04", "B08", "B11", "B12"};
    static constexpr std::array<const char*, kBandCount> oli = {"B2", "B3", "B4", "B5", "B6", "B7"};
    return is_landsat(s) ? oli[static_cast<int>(b)] : msi[static_cast<int>(b)];
}

std::string format_timestamp(Timestamp t) {
    const auto days = std::chrono::floor<std::chrono::days>(t);
    const std::chrono::year_month_day ymd{days};
    const std::chrono::hh_mm_ss hms{t - days};
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02lldZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long long>(hms.seconds().count()));
    return buf;
}

std::string format_timestamp_compact(Timestamp t) {
    std::string s = format_timestamp(t);
    std::string out;
    for (char ch : s)
        if (ch != '-' && ch != ':' && ch != 'Z') out.push_back(ch);
    return out;
}

Timestamp parse_timestamp(std::string_view s) {
    int y = 0, mo = 0, d = 0, h = 0, mi = 0, sec = 0;
    const std::string str(s);
    int n = std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d", &y, &mo, &d, &h, &mi, &sec);
    if (n != 6) {
        n = std::sscanf(str.c_str(), "%4d%2d%2dT%2d%2d%2d", &y, &mo, &d, &h, &mi, &sec);
        if (n != 6) {
            n = std::sscanf(str.c_str(), "%4d-%2d-%2d", &y, &mo, &d);
            if (n != 3) throw FormatError("bad timestamp '" + str + "'");
            h = mi = sec = 0;
        }
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(mo)},
                                          std::chrono::day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || sec > 60) throw FormatError("bad timestamp '" + str + "'");
    return std::chrono::sys_days{ymd} + std::chrono::hours{h} + std::chrono::minutes{mi} + std::chrono::seconds{sec};
}

std::string Scene::scene_id() const { return site_id + "/" + format_timestamp_compact(timestamp); }

void check_scene(const Scene& scene) {
    const int r = scene.rows();
    const int c = scene.cols();
    for (Band b : kAllBands) {
        if (scene.band(b).rows() != r || scene.band(b).cols() != c)
            throw GridMismatch("band " + std::string(band_name(b)) + " does not share the scene grid");
    }
    if (!scene.validity.empty() && !scene.validity.same_shape(scene.band(Band::Blue)))
        throw GridMismatch("validity mask shape differs from bands");
    if (scene.truth_mask && !scene.truth_mask->same_shape(scene.band(Band::Blue)))
        throw GridMismatch("truth mask shape differs from bands");
    if (!std::isfinite(scene.wind.u) || !std::isfinite(scene.wind.v)) throw FormatError("wind components must be finite");
}

namespace {

Mask missing_free(const Scene& s) {
    Mask m(s.rows(), s.cols(), 1);
    for (Band b : kAllBands) {
        const auto& g = s.band(b);
        for (std::size_t i = 0; i < g.size(); ++i)
            if (!std::isfinite(g[i])) m[i] = 0;
    }
    return m;
}

json read_json(const std::filesystem::path& p) {
    std::ifstream in(p);
    if (!in) throw FormatError("cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(p.string() + ": " + e.what());
    }
}

}  // namespace

Scene load_scene(const std::filesystem::path& bundle, const LoadOptions& opts) {
    const json meta = read_json(bundle / "meta.json");
    Scene s;
    try {
        s.site_id = meta.at("site_id").get<std::string>();
        s.satellite = parse_satellite(meta.at("satellite").get<std::string>());
        s.timestamp = parse_timestamp(meta.at("timestamp").get<std::string>());
        const auto& w = meta.at("wind");
        s.wind = {w.at("u10").get<double>(), w.at("v10").get<double>()};
        s.wind_source = w.value("source", std::string("era5-land"));
        s.solar_zenith_deg = meta.value("solar_zenith_deg", 30.0);
        s.view_zenith_deg = meta.value("view_zenith_deg", 5.0);
        s.solar_azimuth_deg = meta.value("solar_azimuth_deg", 135.0);
        s.synthetic = meta.value("synthetic", false);
    } catch (const json::exception& e) {
        throw FormatError((bundle / "meta.json").string() + ": " + e.what());
    }

    std::optional<GeoTransform> ref_geo;
    double extent_x = 0.0, extent_y = 0.0;
    for (Band b : kAllBands) {
        const auto path = bundle / (band_file_stem(s.satellite, b) + ".tif");
        if (!std::filesystem::exists(path)) throw BandMissing(path.string() + " not found (" + std::string(band_name(b)) + ")");
        GeoRaster gr = read_geotiff(path);
        const double res = gr.geo.pixel_size;
        const int factor = static_cast<int>(std::lround(res / kTargetResolutionM));
        if (factor < 1 || std::abs(res - factor * kTargetResolutionM) > 1e-6)
            throw GridMismatch(path.string() + ": resolution " + std::to_string(res) + " m is not a multiple of 10 m");
        const double ex = gr.grid.cols() * res;
        const double ey = gr.grid.rows() * res;
        if (!ref_geo) {
            ref_geo = gr.geo;
            ref_geo->pixel_size = kTargetResolutionM;
            extent_x = ex;
            extent_y = ey;
        } else if (std::abs(gr.geo.origin_x - ref_geo->origin_x) > 1e-6 ||
                   std::abs(gr.geo.origin_y - ref_geo->origin_y) > 1e-6 || std::abs(ex - extent_x) > 1e-6 ||
                   std::abs(ey - extent_y) > 1e-6 || gr.geo.epsg != ref_geo->epsg) {
            throw GridMismatch(path.string() + ": georeference differs from the other bands");
        }
        s.band(b) = resample_bicubic(gr.grid, factor);
    }
    s.geo = *ref_geo;
    check_scene(s);

    if (meta.contains("source_px")) {
        s.source_px = {meta["source_px"].at(0).get<int>(), meta["source_px"].at(1).get<int>()};
    } else {
        s.source_px = {s.rows() / 2, s.cols() / 2};
    }

    const Mask present = missing_free(s);
    if (std::filesystem::exists(bundle / "validity.tif")) {
        const auto v = read_geotiff(bundle / "validity.tif").grid;
        if (!v.same_shape(present)) throw GridMismatch("validity.tif shape differs from bands");
        s.validity = Mask(s.rows(), s.cols());
        for (std::size_t i = 0; i < v.size(); ++i) s.validity[i] = (v[i] > 0.5 && present[i]) ? 1 : 0;
    } else if (opts.apply_cloud_mask) {
        s.validity = usable_pixels(ThresholdCloudMasker{}.classify(s));
    } else {
        s.validity = present;
    }
    if (std::filesystem::exists(bundle / "truth_mask.tif")) {
        const auto t = read_geotiff(bundle / "truth_mask.tif").grid;
        Mask m(t.rows(), t.cols());
        for (std::size_t i = 0; i < t.size(); ++i) m[i] = t[i] > 0.5 ? 1 : 0;
        s.truth_mask = std::move(m);
    }
    check_scene(s);
    return s;
}

void save_scene(const Scene& scene, const std::filesystem::path& bundle) {
    check_scene(scene);
    std::filesystem::create_directories(bundle);
    GeoTransform geo = scene.geo;
    geo.pixel_size = kTargetResolutionM;
    for (Band b : kAllBands) write_geotiff(bundle / (band_file_stem(scene.satellite, b) + ".tif"), {scene.band(b), geo});
    if (!scene.validity.empty()) {
        Raster v(scene.rows(), scene.cols());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = scene.validity[i];
        write_geotiff(bundle / "validity.tif", {v, geo});
    }
    if (scene.truth_mask) {
        Raster t(scene.rows(), scene.cols());
        for (std::size_t i = 0; i < t.size(); ++i) t[i] = (*scene.truth_mask)[i];
        write_geotiff(bundle / "truth_mask.tif", {t, geo});
    }
    json meta = {
        {"site_id", scene.site_id},
        {"satellite", std::string(satellite_name(scene.satellite))},
        {"timestamp", format_timestamp(scene.timestamp)},
        {"wind", {{"u10", scene.wind.u}, {"v10", scene.wind.v}, {"source", scene.wind_source}}},
        {"solar_zenith_deg", scene.solar_zenith_deg},
        {"view_zenith_deg", scene.view_zenith_deg},
        {"solar_azimuth_deg", scene.solar_azimuth_deg},
        {"source_px", {scene.source_px.row, scene.source_px.col}},
        {"epsg", scene.geo.epsg},
        {"synthetic", scene.synthetic},
    };
    std::ofstream(bundle / "meta.json") << meta.dump(2) << '\n';
}

}  // namespace plume::raster
