#include "plume/retrieval/retrieval.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "plume/errors.hpp"
#include "plume/raster/validity.hpp"

namespace plume::retrieval {

using raster::Band;
using raster::Mask;
using raster::Raster;
using raster::Scene;

std::string_view kind_name(Kind k) { return k == Kind::Mbsp ? "MBSP" : "MBMP"; }

namespace {

template <typename At>
ReferenceChoice select_reference_impl(std::size_t count, At at, const Scene& current, double lookback_days) {
    constexpr std::array<Band, 4> kCompared = {Band::Red, Band::Green, Band::Blue, Band::Swir1};
    std::optional<ReferenceChoice> best;
    Scene const* best_scene = nullptr;
    const std::string current_id = current.scene_id();

    for (std::size_t k = 0; k < count; ++k) {
        const Scene& cand = at(k);
        if (cand.site_id != current.site_id || cand.scene_id() == current_id) continue;
        if (!raster::same_family(cand.satellite, current.satellite)) continue;
        if (!raster::is_usable(cand)) continue;
        if (cand.rows() != current.rows() || cand.cols() != current.cols()) continue;
        const double age = std::chrono::duration<double>(current.timestamp - cand.timestamp).count() / 86400.0;
        if (!(age > 0.0) || age > lookback_days) continue;

        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < cand.band(Band::Blue).size(); ++i) {
            if (!cand.validity.empty() && !cand.validity[i]) continue;
            if (!current.validity.empty() && !current.validity[i]) continue;
            double d = 0.0;
            bool finite = true;
            for (Band b : kCompared) {
                const double x = current.band(b)[i] - cand.band(b)[i];
                if (!std::isfinite(x)) finite = false;
                d += std::abs(x);
            }
            if (!finite) continue;
            sum += d;
            n += kCompared.size();
        }
        if (n == 0) continue;
        const double score = sum / static_cast<double>(n);
        const bool better = !best || score < best->similarity ||
                            (score == best->similarity && cand.timestamp > best_scene->timestamp);
        if (better) {
            best = ReferenceChoice{k, cand.scene_id(), score, age};
            best_scene = &cand;
        }
    }
    if (!best) throw NoReferenceError("no usable reference pass for " + current_id);
    return *best;
}

}  // namespace

ReferenceChoice select_reference(std::span<const Scene> history, const Scene& current, double lookback_days) {
    return select_reference_impl(
        history.size(), [&](std::size_t k) -> const Scene& { return history[k]; }, current, lookback_days);
}

ReferenceChoice select_reference(std::span<const Scene* const> history, const Scene& current, double lookback_days) {
    return select_reference_impl(
        history.size(), [&](std::size_t k) -> const Scene& { return *history[k]; }, current, lookback_days);
}

namespace {

Mask swir_valid(const Scene& s) {
    const auto& s1 = s.band(Band::Swir1);
    const auto& s2 = s.band(Band::Swir2);
    Mask m(s.rows(), s.cols(), 0);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const bool ok = (s.validity.empty() || s.validity[i]) && std::isfinite(s1[i]) && std::isfinite(s2[i]) &&
                        s1[i] > 0.0 && s2[i] > 0.0;
        m[i] = ok ? 1 : 0;
    }
    return m;
}

}  // namespace

double regression_coefficient(const Scene& scene, const Mask& valid) {
    const auto& s1 = scene.band(Band::Swir1);
    const auto& s2 = scene.band(Band::Swir2);
    const std::size_t n_valid = raster::count_true(valid);
    if (static_cast<double>(n_valid) < 0.25 * static_cast<double>(valid.size()) || n_valid < 2)
        throw RegressionError("SWIR bands valid on fewer than 25% of pixels");
    double s12 = 0.0, s22 = 0.0, sum1 = 0.0, sum11 = 0.0;
    for (std::size_t i = 0; i < valid.size(); ++i) {
        if (!valid[i]) continue;
        s12 += s1[i] * s2[i];
        s22 += s2[i] * s2[i];
        sum1 += s1[i];
        sum11 += s1[i] * s1[i];
    }
    const double n = static_cast<double>(n_valid);
    const double mean = sum1 / n;
    const double var = std::max(0.0, sum11 / n - mean * mean);
    if (!(s22 > 0.0) || var <= 1e-12 * mean * mean)
        throw RegressionError("degenerate SWIR regression (SWIR1 variance ~ 0)");
    return s12 / s22;
}

Raster mbsp_signal(const Scene& scene, const Mask& valid, double c) {
    const auto& s1 = scene.band(Band::Swir1);
    const auto& s2 = scene.band(Band::Swir2);
    Raster out(scene.rows(), scene.cols(), raster::kNoData);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (valid[i]) out[i] = (c * s2[i] - s1[i]) / s1[i];
    return out;
}

void invert_signal(RetrievalProduct& p, const rtlut::RtLut& lut) {
    const rtlut::TauCurve curve(lut, rtlut::Channel::Ratio, p.amf);
    p.dch4 = Raster(p.delta_r.rows(), p.delta_r.cols(), 0.0);
    p.negative_clipped = 0;
    p.saturated = 0;
    for (std::size_t i = 0; i < p.dch4.size(); ++i) {
        if (!p.valid[i]) continue;
        const double tau_eff = 1.0 + p.delta_r[i];
        if (tau_eff >= 1.0) {
            if (tau_eff > 1.0) ++p.negative_clipped;
            continue;
        }
        if (tau_eff <= curve.tau_min()) {
            ++p.saturated;
            p.dch4[i] = curve.max_dch4();
            continue;
        }
        p.dch4[i] = rtlut::invert_tau(curve, tau_eff);
    }
}

RetrievalProduct mbsp(const Scene& scene) {
    RetrievalProduct p;
    p.kind = Kind::Mbsp;
    p.valid = swir_valid(scene);
    p.c_current = regression_coefficient(scene, p.valid);
    p.delta_r = mbsp_signal(scene, p.valid, p.c_current);
    p.amf = rtlut::amf_from_angles(scene.solar_zenith_deg, scene.view_zenith_deg);
    return p;
}

RetrievalProduct mbsp(const Scene& scene, const rtlut::RtLut& lut) {
    RetrievalProduct p = mbsp(scene);
    invert_signal(p, lut);
    return p;
}

RetrievalProduct mbmp(const Scene& scene, const Scene& reference) {
    if (scene.rows() != reference.rows() || scene.cols() != reference.cols())
        throw GridMismatch("reference pass grid differs from current pass");
    const Mask vs = swir_valid(scene);
    const Mask vr = swir_valid(reference);
    RetrievalProduct p;
    p.kind = Kind::Mbmp;
    p.reference_id = reference.scene_id();
    p.c_current = regression_coefficient(scene, vs);
    p.c_reference = regression_coefficient(reference, vr);
    const Raster rs = mbsp_signal(scene, vs, p.c_current);
    const Raster rr = mbsp_signal(reference, vr, *p.c_reference);
    p.valid = Mask(scene.rows(), scene.cols(), 0);
    p.delta_r = Raster(scene.rows(), scene.cols(), raster::kNoData);
    for (std::size_t i = 0; i < p.valid.size(); ++i) {
        if (vs[i] && vr[i]) {
            p.valid[i] = 1;
            p.delta_r[i] = rs[i] - rr[i];
        }
    }
    p.amf = rtlut::amf_from_angles(scene.solar_zenith_deg, scene.view_zenith_deg);
    return p;
}

RetrievalProduct mbmp(const Scene& scene, const Scene& reference, const rtlut::RtLut& lut) {
    RetrievalProduct p = mbmp(scene, reference);
    invert_signal(p, lut);
    return p;
}

void save_product(const RetrievalProduct& p, const raster::GeoTransform& geo, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    raster::write_geotiff(dir / "mbmp.tif", {p.delta_r, geo});
    raster::write_geotiff(dir / "dch4.tif", {p.dch4, geo});
    nlohmann::json j = {
        {"kind", std::string(kind_name(p.kind))},
        {"c_current", p.c_current},
        {"c_reference", p.c_reference ? nlohmann::json(*p.c_reference) : nlohmann::json(nullptr)},
        {"reference_id", p.reference_id},
        {"amf", p.amf},
        {"negative_clipped", p.negative_clipped},
        {"saturated", p.saturated},
        {"negative_signal", p.negative_signal()},
    };
    std::ofstream(dir / "retrieval.json") << j.dump(2) << '\n';
}

}  // namespace plume::retrieval
