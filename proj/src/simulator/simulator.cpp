#include "plume/simulator/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "plume/errors.hpp"
#include "plume/raster/validity.hpp"

namespace plume::simulator {

using raster::Band;
using raster::Mask;
using raster::PixelPos;
using raster::Raster;
using raster::Scene;
using raster::Wind;

void PlumeRecord::validate() const {
    if (!dch4.same_shape(mask)) throw FormatError("plume " + plume_id + ": dch4 and mask shapes differ");
    if (raster::count_true(mask) == 0) throw FormatError("plume " + plume_id + ": empty mask");
    for (std::size_t i = 0; i < mask.size(); ++i) {
        const bool pos = dch4[i] > 0.0;
        if (pos != (mask[i] != 0)) throw FormatError("plume " + plume_id + ": dch4 > 0 must coincide with the mask");
    }
    if (!std::isfinite(wind.speed())) throw FormatError("plume " + plume_id + ": wind must be finite");
}

double SimulationPolicy::synthetic_probability(std::size_t real_positives) const {
    if (real_positives == 0) return p_synthetic_when_0_real;
    if (real_positives <= 5) return p_synthetic_when_1to5_real;
    return p_synthetic_when_gt5_real;
}

void SimulationPolicy::validate() const {
    for (double p : {p_synthetic_when_0_real, p_synthetic_when_1to5_real, p_synthetic_when_gt5_real, p_positive})
        if (!(p >= 0.0 && p <= 1.0)) throw RangeError("simulation probabilities must lie in [0, 1]");
    if (!(wind_tolerance > 0.0) || !(max_wind > 0.0)) throw RangeError("wind tolerances must be positive");
    if (max_attempts < 1) throw RangeError("max_attempts must be positive");
}

std::optional<std::size_t> sample_donor_plume(std::span<const PlumeRecord> library, Wind target,
                                              const SimulationPolicy& policy, Rng& rng) {
    const double speed = target.speed();
    if (speed > policy.max_wind) return std::nullopt;
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < library.size(); ++i)
        if (std::abs(library[i].wind.speed() - speed) <= policy.wind_tolerance) eligible.push_back(i);
    if (eligible.empty()) return std::nullopt;
    return eligible[uniform_index(rng, eligible.size())];
}

double image_wind_angle(Wind w) { return std::atan2(-w.v, w.u); }

namespace {

struct Offset {
    long x = 0;  // column offset from pivot
    long y = 0;  // row offset from pivot
};

double normalize_angle(double a) {
    a = std::remainder(a, 2.0 * std::numbers::pi);
    if (a <= -std::numbers::pi) a += 2.0 * std::numbers::pi;
    return a;
}

// Paeth rotation by three integer shears. std::lround is odd-symmetric, which
// makes rotate(-a) the exact inverse of rotate(a).
Offset shear_rotate(Offset p, double angle) {
    angle = normalize_angle(angle);
    if (std::abs(angle) > std::numbers::pi / 2) {
        p = {-p.x, -p.y};
        angle -= std::copysign(std::numbers::pi, angle);
    }
    const double a = -std::tan(angle / 2.0);
    const double b = std::sin(angle);
    p.x += std::lround(a * static_cast<double>(p.y));
    p.y += std::lround(b * static_cast<double>(p.x));
    p.x += std::lround(a * static_cast<double>(p.y));
    return p;
}

double bilinear(const Raster& g, double r, double c) {
    const int r0 = static_cast<int>(std::floor(r));
    const int c0 = static_cast<int>(std::floor(c));
    const double fr = r - r0;
    const double fc = c - c0;
    auto at = [&](int rr, int cc) { return g.in_bounds(rr, cc) ? g(rr, cc) : 0.0; };
    return (1 - fr) * ((1 - fc) * at(r0, c0) + fc * at(r0, c0 + 1)) +
           fr * ((1 - fc) * at(r0 + 1, c0) + fc * at(r0 + 1, c0 + 1));
}

}  // namespace

Mask rotate_mask(const Mask& mask, PixelPos pivot, double angle) {
    Mask out(mask.rows(), mask.cols(), 0);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) {
            if (!mask(r, c)) continue;
            const Offset q = shear_rotate({c - pivot.col, r - pivot.row}, angle);
            const long rr = pivot.row + q.y;
            const long cc = pivot.col + q.x;
            if (out.in_bounds(static_cast<int>(rr), static_cast<int>(cc))) out(static_cast<int>(rr), static_cast<int>(cc)) = 1;
        }
    return out;
}

Raster rotate_bilinear(const Raster& field, PixelPos pivot, double angle) {
    const double cs = std::cos(angle);
    const double sn = std::sin(angle);
    Raster out(field.rows(), field.cols(), 0.0);
    for (int r = 0; r < field.rows(); ++r)
        for (int c = 0; c < field.cols(); ++c) {
            const double x = c - pivot.col;
            const double y = r - pivot.row;
            const double sx = cs * x + sn * y;
            const double sy = -sn * x + cs * y;
            out(r, c) = bilinear(field, pivot.row + sy, pivot.col + sx);
        }
    return out;
}

PlumeRecord rotate_to_wind(const PlumeRecord& plume, Wind target) {
    if (target.speed() <= 0.0) throw DirectionUndefined("target wind is zero; rotation angle undefined");
    if (plume.wind.speed() <= 0.0) throw DirectionUndefined("donor plume " + plume.plume_id + " has zero wind");
    const double angle = normalize_angle(image_wind_angle(target) - image_wind_angle(plume.wind));
    if (std::abs(angle) < 1e-12) return plume;

    PlumeRecord out = plume;
    out.mask = rotate_mask(plume.mask, plume.source_px, angle);
    const Raster field = rotate_bilinear(plume.dch4, plume.source_px, angle);
    out.dch4 = Raster(plume.dch4.rows(), plume.dch4.cols(), 0.0);
    for (int r = 0; r < out.mask.rows(); ++r)
        for (int c = 0; c < out.mask.cols(); ++c) {
            if (!out.mask(r, c)) continue;
            double v = field(r, c);
            if (!(v > 0.0)) {
                // Bilinear support missed this mask pixel; take the value the
                // shear map carried here.
                const Offset q = shear_rotate({c - plume.source_px.col, r - plume.source_px.row}, -angle);
                v = plume.dch4(plume.source_px.row + static_cast<int>(q.y), plume.source_px.col + static_cast<int>(q.x));
            }
            out.dch4(r, c) = v;
        }
    // rescale to the donor's total column
    double before = 0.0, after = 0.0;
    for (double v : plume.dch4) before += v;
    for (double v : out.dch4) after += v;
    if (after > 0.0)
        for (double& v : out.dch4) v *= before / after;
    out.wind = target;
    return out;
}

Scene inject_plume(const Scene& scene, const PlumeRecord& plume, const rtlut::RtLut& lut) {
    if (!raster::is_usable(scene)) throw Error("inject_plume: scene " + scene.scene_id() + " is not usable");
    if (scene.truth_mask && raster::count_true(*scene.truth_mask) > 0)
        throw Error("inject_plume: scene " + scene.scene_id() + " already contains a plume");
    if (!plume.dch4.same_shape(plume.mask)) throw FormatError("plume dch4 and mask shapes differ");

    const int dr = scene.source_px.row - plume.source_px.row;
    const int dc = scene.source_px.col - plume.source_px.col;
    Scene out = scene;
    Mask placed(scene.rows(), scene.cols(), 0);
    const double amf = rtlut::amf_from_angles(scene.solar_zenith_deg, scene.view_zenith_deg);
    const rtlut::TauCurve tau1(lut, rtlut::Channel::Swir1, amf);
    const rtlut::TauCurve tau2(lut, rtlut::Channel::Swir2, amf);
    auto& s1 = out.band(Band::Swir1);
    auto& s2 = out.band(Band::Swir2);
    for (int r = 0; r < plume.mask.rows(); ++r)
        for (int c = 0; c < plume.mask.cols(); ++c) {
            const double d = plume.dch4(r, c);
            if (!plume.mask(r, c) && !(d > 0.0)) continue;
            const int rr = r + dr;
            const int cc = c + dc;
            if (!placed.in_bounds(rr, cc))
                throw ExtentError("plume " + plume.plume_id + " extends beyond the scene crop");
            if (!(d > 0.0)) continue;
            placed(rr, cc) = 1;
            s1(rr, cc) *= tau1(d);
            s2(rr, cc) *= tau2(d);
        }
    out.synthetic = true;
    out.truth_mask = std::move(placed);
    return out;
}

// ---------------------------------------------------------------- library I/O

void save_plume(const PlumeRecord& p, const std::filesystem::path& library_dir) {
    const auto dir = library_dir / ("plume_" + p.plume_id);
    std::filesystem::create_directories(dir);
    raster::GeoTransform geo;
    raster::write_geotiff(dir / "dch4.tif", {p.dch4, geo});
    Raster m(p.mask.rows(), p.mask.cols());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = p.mask[i];
    raster::write_geotiff(dir / "mask.tif", {m, geo});
    nlohmann::json j = {
        {"plume_id", p.plume_id},
        {"site_id", p.site_id},
        {"wind", {{"u10", p.wind.u}, {"v10", p.wind.v}}},
        {"flux_kg_h", p.flux_kg_h},
        {"satellite", std::string(raster::satellite_name(p.satellite))},
        {"timestamp", raster::format_timestamp(p.timestamp)},
        {"source_px", {p.source_px.row, p.source_px.col}},
    };
    std::ofstream(dir / "plume.json") << j.dump(2) << '\n';
}

PlumeRecord load_plume(const std::filesystem::path& dir) {
    std::ifstream in(dir / "plume.json");
    if (!in) throw FormatError("cannot open " + (dir / "plume.json").string());
    PlumeRecord p;
    try {
        const auto j = nlohmann::json::parse(in);
        p.plume_id = j.at("plume_id").get<std::string>();
        p.site_id = j.value("site_id", std::string{});
        p.wind = {j.at("wind").at("u10").get<double>(), j.at("wind").at("v10").get<double>()};
        p.flux_kg_h = j.value("flux_kg_h", 0.0);
        p.satellite = raster::parse_satellite(j.value("satellite", std::string("S2A")));
        p.timestamp = raster::parse_timestamp(j.value("timestamp", std::string("1970-01-01T00:00:00Z")));
        p.source_px = {j.at("source_px").at(0).get<int>(), j.at("source_px").at(1).get<int>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError((dir / "plume.json").string() + ": " + e.what());
    }
    p.dch4 = raster::read_geotiff(dir / "dch4.tif").grid;
    const auto m = raster::read_geotiff(dir / "mask.tif").grid;
    p.mask = Mask(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.size(); ++i) p.mask[i] = m[i] > 0.5 ? 1 : 0;
    p.validate();
    return p;
}

std::vector<PlumeRecord> load_plume_library(const std::filesystem::path& library_dir) {
    std::vector<std::filesystem::path> dirs;
    for (const auto& e : std::filesystem::directory_iterator(library_dir))
        if (e.is_directory() && e.path().filename().string().starts_with("plume_")) dirs.push_back(e.path());
    std::sort(dirs.begin(), dirs.end());
    std::vector<PlumeRecord> out;
    for (const auto& d : dirs) out.push_back(load_plume(d));
    return out;
}

// ---------------------------------------------------------------- sampling

namespace {

TrainingSample from_example(const Example& ex, std::size_t site, bool positive) {
    TrainingSample s;
    s.scene = *ex.scene;
    s.reference = ex.reference;
    s.positive = positive;
    s.site_index = site;
    if (positive && ex.scene->truth_mask) s.truth = *ex.scene->truth_mask;
    else s.truth = Mask(ex.scene->rows(), ex.scene->cols(), 0);
    return s;
}

}  // namespace

std::optional<TrainingSample> draw_for_site(const DatasetIndex& index, std::size_t site, bool positive,
                                            const SimulationPolicy& policy, Rng& rng) {
    const SiteSamples& ss = index.sites.at(site);
    if (!positive) {
        if (ss.negatives.empty()) return std::nullopt;
        return from_example(ss.negatives[uniform_index(rng, ss.negatives.size())], site, false);
    }

    const double p_syn = policy.synthetic_probability(ss.positives.size());
    if (bernoulli(rng, p_syn) && !ss.negatives.empty() && index.lut != nullptr) {
        const Example& base = ss.negatives[uniform_index(rng, ss.negatives.size())];
        const auto donor = sample_donor_plume(index.library, base.scene->wind, policy, rng);
        if (donor) {
            try {
                const PlumeRecord aligned = rotate_to_wind(index.library[*donor], base.scene->wind);
                TrainingSample s;
                s.scene = inject_plume(*base.scene, aligned, *index.lut);
                s.reference = base.reference;
                s.truth = *s.scene.truth_mask;
                s.positive = true;
                s.synthetic = true;
                s.site_index = site;
                s.donor = donor;
                return s;
            } catch (const DirectionUndefined&) {
                // calm scene: fall through to the real-positive ladder
            } catch (const ExtentError&) {
            }
        }
    }
    if (!ss.positives.empty()) return from_example(ss.positives[uniform_index(rng, ss.positives.size())], site, true);
    return std::nullopt;
}

TrainingSample draw_training_sample(const DatasetIndex& index, const SimulationPolicy& policy, Rng& rng) {
    if (index.sites.empty()) throw SamplerStarvation("dataset index has no sites");
    for (int attempt = 0; attempt < policy.max_attempts; ++attempt) {
        const std::size_t site = uniform_index(rng, index.sites.size());
        const bool positive = bernoulli(rng, policy.p_positive);
        if (auto s = draw_for_site(index, site, positive, policy, rng)) return std::move(*s);
    }
    throw SamplerStarvation("no sample after " + std::to_string(policy.max_attempts) + " location draws");
}

}  // namespace plume::simulator
