#include "plume/rtlut/rtlut.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "plume/errors.hpp"

#ifndef PLUME_DATA_DIR
#define PLUME_DATA_DIR "data"
#endif

namespace plume::rtlut {

using nlohmann::json;
using raster::Band;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char ch : bytes) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    return h;
}

std::string_view channel_name(Channel c) {
    switch (c) {
        case Channel::Swir1: return "SWIR1";
        case Channel::Swir2: return "SWIR2";
        case Channel::Ratio: return "SWIR2/SWIR1";
    }
    return "?";
}

Channel parse_channel(std::string_view s) {
    if (s == "SWIR1") return Channel::Swir1;
    if (s == "SWIR2") return Channel::Swir2;
    if (s == "SWIR2/SWIR1") return Channel::Ratio;
    throw FormatError("unknown LUT channel '" + std::string(s) + "'");
}

Channel channel_for(Band b) {
    if (b == Band::Swir1) return Channel::Swir1;
    if (b == Band::Swir2) return Channel::Swir2;
    throw RangeError("band " + std::string(raster::band_name(b)) + " has no methane LUT channel");
}

std::filesystem::path default_model_path() {
    if (const char* env = std::getenv("PLUME_DATA_DIR")) return std::filesystem::path(env) / "absorption_model.json";
    return std::filesystem::path(PLUME_DATA_DIR) / "absorption_model.json";
}

// ---------------------------------------------------------------- model I/O

namespace {

double planck(double wavelength_nm, double temperature_k) {
    const double lam = wavelength_nm * 1e-9;
    constexpr double c2 = 1.438777e-2;  // hc/k, m K
    return 1.0 / (std::pow(lam, 5) * (std::exp(c2 / (lam * temperature_k)) - 1.0));
}

std::vector<double> flat_top_srf(const std::vector<double>& wl, double center, double fwhm) {
    // Super-Gaussian of order 8, half maximum at center +- fwhm/2.
    std::vector<double> out(wl.size());
    const double half = fwhm / 2.0;
    for (std::size_t i = 0; i < wl.size(); ++i) {
        const double x = (wl[i] - center) / half;
        out[i] = std::exp(-std::log(2.0) * std::pow(x * x, 4));
    }
    return out;
}

Band band_from_key(const std::string& key) {
    if (key == "SWIR1") return Band::Swir1;
    if (key == "SWIR2") return Band::Swir2;
    throw FormatError("absorption model: unsupported band '" + key + "'");
}

void check_ascending(const std::vector<double>& g, const char* what, bool strict = true) {
    for (std::size_t i = 1; i < g.size(); ++i)
        if (strict ? !(g[i] > g[i - 1]) : !(g[i] >= g[i - 1]))
            throw GridError(std::string(what) + " grid must be strictly ascending");
}

}  // namespace

void AbsorptionModel::validate() const {
    if (bands.empty()) throw SpectralSupportError("absorption model has no bands");
    for (const auto& [band, s] : bands) {
        const std::size_t n = s.wavelength_nm.size();
        const std::string name(raster::band_name(band));
        if (n < 2) throw SpectralSupportError(name + ": spectral grid needs at least two points");
        if (s.sigma.size() != n || s.irradiance.size() != n || s.t_atm.size() != n || s.srf.size() != n)
            throw SpectralSupportError(name + ": spectral curves do not share the wavelength grid");
        check_ascending(s.wavelength_nm, "wavelength");
        for (double v : s.sigma)
            if (!(v >= 0.0) || !std::isfinite(v)) throw SpectralSupportError(name + ": sigma must be finite and >= 0");
    }
}

AbsorptionModel AbsorptionModel::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    AbsorptionModel m;
    try {
        for (const auto& [key, b] : j.at("bands").items()) {
            BandSpectrum s;
            s.wavelength_nm = b.at("wavelength_nm").get<std::vector<double>>();
            s.sigma = b.at("sigma_m2_per_mol").get<std::vector<double>>();
            const std::size_t n = s.wavelength_nm.size();
            if (b.contains("irradiance")) {
                s.irradiance = b["irradiance"].get<std::vector<double>>();
            } else {
                s.irradiance.resize(n);
                for (std::size_t i = 0; i < n; ++i) s.irradiance[i] = planck(s.wavelength_nm[i], 5778.0);
            }
            if (b.contains("t_atm")) s.t_atm = b["t_atm"].get<std::vector<double>>();
            else s.t_atm.assign(n, 0.9);
            if (b.contains("srf")) s.srf = b["srf"].get<std::vector<double>>();
            else s.srf = flat_top_srf(s.wavelength_nm, b.at("center_nm").get<double>(), b.at("fwhm_nm").get<double>());
            m.bands[band_from_key(key)] = std::move(s);
        }
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    m.validate();
    return m;
}

void AbsorptionModel::save(const std::filesystem::path& path) const {
    json j;
    for (const auto& [band, s] : bands) {
        j["bands"][std::string(raster::band_name(band))] = {
            {"wavelength_nm", s.wavelength_nm}, {"sigma_m2_per_mol", s.sigma}, {"irradiance", s.irradiance},
            {"t_atm", s.t_atm},                 {"srf", s.srf},
        };
    }
    std::ofstream(path) << j.dump() << '\n';
}

// ---------------------------------------------------------------- table

RtLut::RtLut(std::vector<double> dch4_grid, std::vector<double> amf_grid,
             std::array<std::vector<double>, kChannelCount> tables, std::string provenance)
    : dch4_(std::move(dch4_grid)), amf_(std::move(amf_grid)), tables_(std::move(tables)),
      provenance_(std::move(provenance)) {
    if (dch4_.size() < 2 || amf_.size() < 2) throw GridError("LUT grids need at least two knots");
    check_ascending(dch4_, "dch4");
    check_ascending(amf_, "amf");
    if (dch4_.front() != 0.0) throw GridError("dch4 grid must start at 0");
    if (amf_.front() <= 0.0) throw GridError("amf grid must be positive");
    for (const auto& t : tables_)
        if (t.size() != dch4_.size() * amf_.size()) throw GridError("LUT table size does not match its grids");
}

RtLut build_lut(const AbsorptionModel& model, const std::vector<double>& dch4_grid,
                const std::vector<double>& amf_grid) {
    model.validate();
    if (dch4_grid.empty() || amf_grid.empty()) throw GridError("LUT grids must be non-empty");
    check_ascending(dch4_grid, "dch4");
    check_ascending(amf_grid, "amf");
    if (dch4_grid.front() != 0.0) throw GridError("dch4 grid must start at 0");
    for (Band b : {Band::Swir1, Band::Swir2})
        if (!model.bands.contains(b))
            throw SpectralSupportError("absorption model lacks band " + std::string(raster::band_name(b)));

    const std::size_t nd = dch4_grid.size();
    const std::size_t na = amf_grid.size();
    std::array<std::vector<double>, kChannelCount> tables;
    for (Band b : {Band::Swir1, Band::Swir2}) {
        const auto& s = model.bands.at(b);
        const std::size_t n = s.wavelength_nm.size();
        // Trapezoid weights times the band weighting E_g * T_atm * srf.
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) {
            const double left = i > 0 ? s.wavelength_nm[i] - s.wavelength_nm[i - 1] : 0.0;
            const double right = i + 1 < n ? s.wavelength_nm[i + 1] - s.wavelength_nm[i] : 0.0;
            g[i] = 0.5 * (left + right) * s.irradiance[i] * s.t_atm[i] * s.srf[i];
        }
        double denom = 0.0;
        for (double v : g) denom += v;
        if (!(denom > 0.0) || !std::isfinite(denom))
            throw SpectralSupportError(std::string(raster::band_name(b)) + ": SRF has no weighted spectral support");

        auto& table = tables[static_cast<int>(channel_for(b))];
        table.resize(nd * na);
        for (std::size_t i = 0; i < nd; ++i)
            for (std::size_t j = 0; j < na; ++j) {
                if (dch4_grid[i] == 0.0) {
                    table[i * na + j] = 1.0;
                    continue;
                }
                const double column = amf_grid[j] * dch4_grid[i] * kMolPerM2PerPpbM;
                double num = 0.0;
                for (std::size_t k = 0; k < n; ++k) num += g[k] * std::exp(-s.sigma[k] * column);
                table[i * na + j] = num / denom;
            }
    }
    auto& ratio = tables[static_cast<int>(Channel::Ratio)];
    ratio.resize(nd * na);
    for (std::size_t k = 0; k < nd * na; ++k)
        ratio[k] = tables[static_cast<int>(Channel::Swir2)][k] / tables[static_cast<int>(Channel::Swir1)][k];

    std::ostringstream prov;
    json pj;
    for (const auto& [band, s] : model.bands)
        pj[std::string(raster::band_name(band))] = {s.wavelength_nm, s.sigma, s.irradiance, s.t_atm, s.srf};
    pj["dch4"] = dch4_grid;
    pj["amf"] = amf_grid;
    prov << std::hex << fnv1a(pj.dump());
    return RtLut(dch4_grid, amf_grid, std::move(tables), prov.str());
}

std::vector<double> default_dch4_grid(double max_dch4, int knots) {
    if (knots < 3) throw GridError("dch4 grid needs at least three knots");
    std::vector<double> g{0.0};
    const double lo = 10.0;
    const int n = knots - 1;
    for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(max_dch4 / lo, static_cast<double>(i) / (n - 1)));
    g.back() = max_dch4;
    return g;
}

std::vector<double> default_amf_grid(double lo, double hi, int knots) {
    if (knots < 2) throw GridError("amf grid needs at least two knots");
    std::vector<double> g(static_cast<std::size_t>(knots));
    for (int i = 0; i < knots; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (knots - 1);
    g.back() = hi;
    return g;
}

void RtLut::save(const std::filesystem::path& json_path) const {
    auto bin_path = json_path;
    bin_path.replace_extension(".bin");
    json header = {
        {"format", "rtlut/1"},
        {"channels", {channel_name(Channel::Swir1), channel_name(Channel::Swir2), channel_name(Channel::Ratio)}},
        {"dch4_grid", dch4_},
        {"amf_grid", amf_},
        {"dch4_unit", "ppb*m"},
        {"background_ppb", kBackgroundPpb},
        {"provenance", provenance_},
        {"payload", bin_path.filename().string()},
        {"layout", "channel-major, then dch4, then amf; float64 little-endian"},
    };
    std::ofstream(json_path) << header.dump(2) << '\n';
    std::ofstream bin(bin_path, std::ios::binary | std::ios::trunc);
    if (!bin) throw FormatError("cannot write " + bin_path.string());
    static_assert(std::endian::native == std::endian::little);
    for (const auto& t : tables_)
        bin.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

RtLut RtLut::load(const std::filesystem::path& json_path) {
    std::ifstream in(json_path);
    if (!in) throw FormatError("cannot open " + json_path.string());
    json h;
    try {
        h = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(json_path.string() + ": " + e.what());
    }
    auto dch4 = h.at("dch4_grid").get<std::vector<double>>();
    auto amf = h.at("amf_grid").get<std::vector<double>>();
    const auto channels = h.at("channels").get<std::vector<std::string>>();
    const auto bin_path = json_path.parent_path() / h.at("payload").get<std::string>();
    std::ifstream bin(bin_path, std::ios::binary);
    if (!bin) throw FormatError("cannot open " + bin_path.string());
    std::array<std::vector<double>, kChannelCount> tables;
    for (const auto& name : channels) {
        std::vector<double> t(dch4.size() * amf.size());
        bin.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
        if (!bin) throw FormatError(bin_path.string() + ": payload truncated");
        tables[static_cast<int>(parse_channel(name))] = std::move(t);
    }
    return RtLut(std::move(dch4), std::move(amf), std::move(tables), h.value("provenance", std::string{}));
}

// ---------------------------------------------------------------- spline

CubicSpline::CubicSpline(std::vector<double> x, std::vector<double> y) : x_(std::move(x)), y_(std::move(y)) {
    const std::size_t n = x_.size();
    if (n < 2 || y_.size() != n) throw GridError("spline needs at least two matching knots");
    slope_.assign(n, 0.0);
    std::vector<double> dx(n - 1), m(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        dx[i] = x_[i + 1] - x_[i];
        m[i] = (y_[i + 1] - y_[i]) / dx[i];
    }
    if (n == 2) {
        slope_[0] = slope_[1] = m[0];
        return;
    }
    if (n == 3) {
        // Not-a-knot on three points is the interpolating parabola.
        const double a = (m[1] - m[0]) / (x_[2] - x_[0]);
        slope_[0] = m[0] - a * dx[0];
        slope_[1] = m[0] + a * dx[0];
        slope_[2] = m[1] + a * dx[1];
        return;
    }
    // Tridiagonal system for the knot slopes with not-a-knot end rows.
    std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0), rhs(n, 0.0);
    diag[0] = dx[1];
    upper[0] = dx[0] + dx[1];
    rhs[0] = ((dx[0] + 2.0 * (dx[0] + dx[1])) * dx[1] * m[0] + dx[0] * dx[0] * m[1]) / (dx[0] + dx[1]);
    for (std::size_t i = 1; i + 1 < n; ++i) {
        lower[i] = dx[i];
        diag[i] = 2.0 * (dx[i - 1] + dx[i]);
        upper[i] = dx[i - 1];
        rhs[i] = 3.0 * (dx[i] * m[i - 1] + dx[i - 1] * m[i]);
    }
    const std::size_t k = n - 1;
    lower[k] = dx[k - 1] + dx[k - 2];
    diag[k] = dx[k - 2];
    rhs[k] = (dx[k - 1] * dx[k - 1] * m[k - 2] + (2.0 * (dx[k - 2] + dx[k - 1]) + dx[k - 1]) * dx[k - 2] * m[k - 1]) /
             (dx[k - 2] + dx[k - 1]);
    // Thomas algorithm.
    for (std::size_t i = 1; i < n; ++i) {
        const double w = lower[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    slope_[k] = rhs[k] / diag[k];
    for (std::size_t i = k; i-- > 0;) slope_[i] = (rhs[i] - upper[i] * slope_[i + 1]) / diag[i];
}

std::size_t CubicSpline::interval(double q) const {
    auto it = std::upper_bound(x_.begin(), x_.end(), q);
    std::size_t i = it == x_.begin() ? 0 : static_cast<std::size_t>(it - x_.begin()) - 1;
    return std::min(i, x_.size() - 2);
}

double CubicSpline::operator()(double q) const {
    const std::size_t i = interval(q);
    const double h = x_[i + 1] - x_[i];
    const double t = (q - x_[i]) / h;
    if (t == 0.0) return y_[i];
    if (t == 1.0) return y_[i + 1];
    const double t2 = t * t, t3 = t2 * t;
    const double h00 = 2 * t3 - 3 * t2 + 1, h10 = t3 - 2 * t2 + t, h01 = -2 * t3 + 3 * t2, h11 = t3 - t2;
    return h00 * y_[i] + h10 * h * slope_[i] + h01 * y_[i + 1] + h11 * h * slope_[i + 1];
}

double CubicSpline::derivative(double q) const {
    const std::size_t i = interval(q);
    const double h = x_[i + 1] - x_[i];
    const double t = (q - x_[i]) / h;
    const double t2 = t * t;
    const double d00 = 6 * t2 - 6 * t, d10 = 3 * t2 - 4 * t + 1, d01 = -6 * t2 + 6 * t, d11 = 3 * t2 - 2 * t;
    return (d00 * y_[i] + d01 * y_[i + 1]) / h + d10 * slope_[i] + d11 * slope_[i + 1];
}

// ---------------------------------------------------------------- interpolation

namespace {

void check_amf(const RtLut& lut, double amf) {
    const auto& g = lut.amf_grid();
    if (!(amf >= g.front() && amf <= g.back()))
        throw RangeError("AMF " + std::to_string(amf) + " outside LUT range [" + std::to_string(g.front()) + ", " +
                         std::to_string(g.back()) + "]");
}

}  // namespace

TauCurve::TauCurve(const RtLut& lut, Channel channel, double amf) {
    check_amf(lut, amf);
    const auto& dg = lut.dch4_grid();
    const auto& ag = lut.amf_grid();
    std::vector<double> column(dg.size());
    std::vector<double> row(ag.size());
    for (std::size_t i = 0; i < dg.size(); ++i) {
        for (std::size_t j = 0; j < ag.size(); ++j) row[j] = lut.tau(channel, i, j);
        column[i] = CubicSpline(ag, row)(amf);
    }
    spline_ = CubicSpline(dg, std::move(column));
    max_ = dg.back();
    tau_min_ = spline_(max_);
}

double TauCurve::operator()(double dch4) const {
    if (std::isnan(dch4)) return dch4;
    if (dch4 < 0.0) throw RangeError("negative dch4 " + std::to_string(dch4));
    return spline_(std::min(dch4, max_));
}

double TauCurve::derivative(double dch4) const {
    if (dch4 < 0.0) throw RangeError("negative dch4 " + std::to_string(dch4));
    if (dch4 > max_) return 0.0;
    return spline_.derivative(dch4);
}

double interp_tau(const RtLut& lut, Channel channel, double dch4, double amf, InterpStats* stats) {
    const TauCurve curve(lut, channel, amf);
    if (stats && dch4 > curve.max_dch4()) ++stats->clamped;
    return curve(dch4);
}

raster::Raster interp_tau(const RtLut& lut, Channel channel, const raster::Raster& dch4, double amf,
                          InterpStats* stats) {
    const TauCurve curve(lut, channel, amf);
    raster::Raster out(dch4.rows(), dch4.cols());
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < dch4.size(); ++i) {
        if (dch4[i] > curve.max_dch4()) ++clamped;
        out[i] = curve(dch4[i]);
    }
    if (stats) stats->clamped += clamped;
    return out;
}

double invert_tau(const TauCurve& curve, double tau_obs, const InvertOptions& opts) {
    if (!(tau_obs <= 1.0 + 1e-12)) throw RangeError("tau " + std::to_string(tau_obs) + " above 1 is not invertible");
    if (tau_obs >= 1.0) return 0.0;
    if (tau_obs < curve.tau_min())
        throw RangeError("tau " + std::to_string(tau_obs) + " below table minimum " + std::to_string(curve.tau_min()));
    double lo = 0.0, hi = curve.max_dch4();
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < opts.max_iterations; ++it) {
        mid = 0.5 * (lo + hi);
        const double t = curve(mid);
        if (std::abs(t - tau_obs) <= opts.tolerance) break;
        if (t > tau_obs) lo = mid;
        else hi = mid;
    }
    return mid;
}

double invert_tau(const RtLut& lut, Channel channel, double tau_obs, double amf, const InvertOptions& opts) {
    return invert_tau(TauCurve(lut, channel, amf), tau_obs, opts);
}

double amf_from_angles(double solar_zenith_deg, double view_zenith_deg) {
    for (double a : {solar_zenith_deg, view_zenith_deg})
        if (!(a >= 0.0 && a < 85.0))
            throw RangeError("zenith angle " + std::to_string(a) + " outside [0, 85) degrees");
    const double k = std::numbers::pi / 180.0;
    return 1.0 / std::cos(solar_zenith_deg * k) + 1.0 / std::cos(view_zenith_deg * k);
}

}  // namespace plume::rtlut
