#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "plume/raster/grid.hpp"
#include "plume/raster/scene.hpp"

namespace plume::rtlut {

/// Spectral inputs for one methane-absorbing band. All curves share the
/// wavelength grid.
struct BandSpectrum {
    std::vector<double> wavelength_nm;
    std::vector<double> sigma;       // absorption cross-section, m^2/mol
    std::vector<double> irradiance;  // E_g, arbitrary units
    std::vector<double> t_atm;       // background atmospheric transmittance
    std::vector<double> srf;         // spectral response
};

/// Beer-Lambert stand-in for a full radiative-transfer code.
struct AbsorptionModel {
    std::map<raster::Band, BandSpectrum> bands;  // SWIR1 and SWIR2

    /// Reads model.json. Missing irradiance defaults to a 5778 K Planck
    /// curve, missing t_atm to a flat 0.9, and a missing srf to a flat-top
    /// response built from `center_nm` / `fwhm_nm`.
    static AbsorptionModel load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;
    void validate() const;
};

/// The shipped model in data/absorption_model.json.
std::filesystem::path default_model_path();

/// ppb*m -> mol/m^2 (ideal gas at 1013.25 hPa, 288.15 K).
inline constexpr double kMolPerM2PerPpbM = 4.462e-8;
inline constexpr double kBackgroundPpb = 1800.0;

/// Table channels. The ratio channel SWIR2/SWIR1 drives the band-ratio
/// retrievals.
enum class Channel : int { Swir1 = 0, Swir2 = 1, Ratio = 2 };
inline constexpr int kChannelCount = 3;
std::string_view channel_name(Channel c);
Channel parse_channel(std::string_view s);
Channel channel_for(raster::Band b);

/// Integrated band transmittance tau[channel](dch4, amf). Immutable.
class RtLut {
public:
    RtLut() = default;
    /// tables[c] is row-major over (dch4 index, amf index). Throws GridError
    /// on non-ascending grids or mismatched table sizes.
    RtLut(std::vector<double> dch4_grid, std::vector<double> amf_grid,
          std::array<std::vector<double>, kChannelCount> tables, std::string provenance = {});

    const std::vector<double>& dch4_grid() const { return dch4_; }
    const std::vector<double>& amf_grid() const { return amf_; }
    double tau(Channel c, std::size_t i_dch4, std::size_t j_amf) const {
        return tables_[static_cast<int>(c)][i_dch4 * amf_.size() + j_amf];
    }
    const std::vector<double>& table(Channel c) const { return tables_[static_cast<int>(c)]; }
    const std::string& provenance() const { return provenance_; }
    double background_ppb() const { return kBackgroundPpb; }
    double max_dch4() const { return dch4_.back(); }

    /// JSON header at `json_path` plus little-endian float64 payload at the
    /// same stem with a `.bin` extension.
    void save(const std::filesystem::path& json_path) const;
    static RtLut load(const std::filesystem::path& json_path);

    friend bool operator==(const RtLut&, const RtLut&) = default;

private:
    std::vector<double> dch4_;
    std::vector<double> amf_;
    std::array<std::vector<double>, kChannelCount> tables_;
    std::string provenance_;
};

/// Trapezoidal band integration of exp(-amf * sigma * dch4) weighted by
/// E_g * T_atm * srf. dch4_grid must start at 0.
RtLut build_lut(const AbsorptionModel& model, const std::vector<double>& dch4_grid,
                const std::vector<double>& amf_grid);

/// Defaults: 0 plus 63 log-spaced knots up to 20,000 ppb*m; 16 linear AMF knots over [2, 6].
std::vector<double> default_dch4_grid(double max_dch4 = 20000.0, int knots = 64);
std::vector<double> default_amf_grid(double lo = 2.0, double hi = 6.0, int knots = 16);

/// Cubic spline with not-a-knot end conditions (C2 inside, exact at knots).
class CubicSpline {
public:
    CubicSpline() = default;
    CubicSpline(std::vector<double> x, std::vector<double> y);
    double operator()(double q) const;
    double derivative(double q) const;
    const std::vector<double>& knots() const { return x_; }

private:
    std::size_t interval(double q) const;
    std::vector<double> x_, y_, slope_;
};

/// Spline in dch4 at one fixed AMF, built from the tensor-product spline.
class TauCurve {
public:
    TauCurve(const RtLut& lut, Channel channel, double amf);
    /// Values above the grid maximum are clamped; negative input throws RangeError.
    double operator()(double dch4) const;
    double derivative(double dch4) const;
    double max_dch4() const { return max_; }
    double tau_min() const { return tau_min_; }

private:
    CubicSpline spline_;
    double max_ = 0.0;
    double tau_min_ = 1.0;
};

struct InterpStats {
    std::size_t clamped = 0;  // MonotoneClamp warnings
};

double interp_tau(const RtLut& lut, Channel channel, double dch4, double amf, InterpStats* stats = nullptr);
raster::Raster interp_tau(const RtLut& lut, Channel channel, const raster::Raster& dch4, double amf,
                          InterpStats* stats = nullptr);

struct InvertOptions {
    double tolerance = 1e-8;
    int max_iterations = 100;
};

/// Bisection for dch4 with tau(dch4) = tau_obs. RangeError outside (tau_min, 1].
double invert_tau(const RtLut& lut, Channel channel, double tau_obs, double amf, const InvertOptions& opts = {});
double invert_tau(const TauCurve& curve, double tau_obs, const InvertOptions& opts = {});

/// 1/cos(solar) + 1/cos(view); both angles must lie in [0, 85) degrees.
double amf_from_angles(double solar_zenith_deg, double view_zenith_deg);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t seed = 14695981039346656037ull);

}  // namespace plume::rtlut
