#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "plume/errors.hpp"
#include "plume/rtlut/rtlut.hpp"

using namespace plume;
using namespace plume::rtlut;
using raster::Band;

namespace {

// Uniform grid with flat weighting so the trapezoid weights are h/2 at the
// ends and h inside.
BandSpectrum flat_band(double lo, double hi, int n, double sigma = 0.0) {
    BandSpectrum b;
    for (int i = 0; i < n; ++i) b.wavelength_nm.push_back(lo + (hi - lo) * i / (n - 1));
    b.sigma.assign(n, sigma);
    b.irradiance.assign(n, 1.0);
    b.t_atm.assign(n, 1.0);
    b.srf.assign(n, 1.0);
    return b;
}

AbsorptionModel flat_model(double sigma1 = 0.0, double sigma2 = 0.0) {
    AbsorptionModel m;
    m.bands[Band::Swir1] = flat_band(1560, 1660, 41, sigma1);
    m.bands[Band::Swir2] = flat_band(2110, 2290, 61, sigma2);
    return m;
}

RtLut exponential_lut(double k) {
    const auto dg = default_dch4_grid();
    const auto ag = default_amf_grid();
    std::array<std::vector<double>, kChannelCount> t;
    for (auto& v : t) v.resize(dg.size() * ag.size());
    for (std::size_t i = 0; i < dg.size(); ++i)
        for (std::size_t j = 0; j < ag.size(); ++j) {
            const double e = std::exp(-k * ag[j] * dg[i]);
            t[0][i * ag.size() + j] = 1.0;
            t[1][i * ag.size() + j] = e;
            t[2][i * ag.size() + j] = e;
        }
    return RtLut(dg, ag, t);
}

const RtLut& shipped() {
    static const RtLut lut =
        build_lut(AbsorptionModel::load(default_model_path()), default_dch4_grid(), default_amf_grid());
    return lut;
}

}  // namespace

TEST_CASE("zero enhancement row is exactly one") {
    const RtLut& lut = shipped();
    for (int c = 0; c < kChannelCount; ++c)
        for (std::size_t j = 0; j < lut.amf_grid().size(); ++j) CHECK(lut.tau(static_cast<Channel>(c), 0, j) == 1.0);
}

TEST_CASE("zero cross-section gives unit transmittance everywhere") {
    const RtLut lut = build_lut(flat_model(), default_dch4_grid(16), default_amf_grid(2.0, 6.0, 4));
    for (int c = 0; c < kChannelCount; ++c)
        for (double v : lut.table(static_cast<Channel>(c))) CHECK(v == 1.0);
}

TEST_CASE("single absorption line matches the hand-integrated closed form") {
    AbsorptionModel m = flat_model();
    auto& s2 = m.bands[Band::Swir2];
    const int k = 30;
    const double sigma = 0.4;
    s2.sigma[k] = sigma;
    const int n = static_cast<int>(s2.wavelength_nm.size());
    const std::vector<double> dg = {0.0, 500.0, 3000.0, 20000.0};
    const std::vector<double> ag = {2.0, 3.22, 6.0};
    const RtLut lut = build_lut(m, dg, ag);
    for (std::size_t i = 0; i < dg.size(); ++i)
        for (std::size_t j = 0; j < ag.size(); ++j) {
            // interior node weight h over total (n - 1) h
            const double col = ag[j] * dg[i] * kMolPerM2PerPpbM;
            const double want = 1.0 - (1.0 - std::exp(-sigma * col)) / (n - 1);
            CHECK(lut.tau(Channel::Swir2, i, j) == doctest::Approx(want).epsilon(1e-6));
            CHECK(lut.tau(Channel::Swir1, i, j) == 1.0);
            CHECK(lut.tau(Channel::Ratio, i, j) == doctest::Approx(want).epsilon(1e-6));
        }
}

TEST_CASE("build_lut input validation") {
    CHECK_THROWS_AS(build_lut(flat_model(), {0.0, 10.0, 5.0}, {2.0, 3.0}), GridError);
    CHECK_THROWS_AS(build_lut(flat_model(), {1.0, 10.0}, {2.0, 3.0}), GridError);
    CHECK_THROWS_AS(build_lut(flat_model(), {0.0, 10.0}, {3.0, 2.0}), GridError);
    AbsorptionModel m = flat_model();
    std::fill(m.bands[Band::Swir2].srf.begin(), m.bands[Band::Swir2].srf.end(), 0.0);
    CHECK_THROWS_AS(build_lut(m, {0.0, 10.0}, {2.0, 3.0}), SpectralSupportError);
    AbsorptionModel missing;
    missing.bands[Band::Swir1] = flat_band(1560, 1660, 11);
    CHECK_THROWS_AS(build_lut(missing, {0.0, 10.0}, {2.0, 3.0}), SpectralSupportError);
}

TEST_CASE("build_lut is deterministic") {
    const auto model = AbsorptionModel::load(default_model_path());
    const RtLut a = build_lut(model, default_dch4_grid(), default_amf_grid());
    const RtLut b = build_lut(model, default_dch4_grid(), default_amf_grid());
    CHECK(a == b);
}

TEST_CASE("shipped table is monotone and SWIR2 absorbs more") {
    const RtLut& lut = shipped();
    const auto nd = lut.dch4_grid().size();
    const auto na = lut.amf_grid().size();
    for (Channel c : {Channel::Swir1, Channel::Swir2, Channel::Ratio})
        for (std::size_t i = 0; i < nd; ++i)
            for (std::size_t j = 0; j < na; ++j) {
                const double v = lut.tau(c, i, j);
                CHECK(v > 0.0);
                CHECK(v <= 1.0);
                if (i > 0) CHECK(v <= lut.tau(c, i - 1, j));
                if (j > 0) CHECK(v <= lut.tau(c, i, j - 1));
            }
    for (std::size_t i = 1; i < nd; ++i)
        for (std::size_t j = 0; j < na; ++j) CHECK(lut.tau(Channel::Swir2, i, j) < lut.tau(Channel::Swir1, i, j));
}

TEST_CASE("lut save and load round trip") {
    testutil::TempDir dir("lut");
    shipped().save(dir.path() / "lut.json");
    CHECK(std::filesystem::exists(dir.path() / "lut.bin"));
    CHECK(RtLut::load(dir.path() / "lut.json") == shipped());
}

TEST_CASE("interpolation reproduces knots") {
    const RtLut& lut = shipped();
    const auto& dg = lut.dch4_grid();
    const auto& ag = lut.amf_grid();
    for (std::size_t i = 0; i < dg.size(); i += 7)
        for (std::size_t j = 0; j < ag.size(); j += 3)
            CHECK(std::abs(interp_tau(lut, Channel::Ratio, dg[i], ag[j]) - lut.tau(Channel::Ratio, i, j)) <= 1e-12);
}

TEST_CASE("interpolation between knots of an exponential table") {
    const double k = 1e-5;
    const RtLut lut = exponential_lut(k);
    const auto& dg = lut.dch4_grid();
    double worst = 0.0;
    for (double amf : {2.1, 3.22, 4.45, 5.9})
        for (std::size_t i = 0; i + 1 < dg.size(); ++i) {
            const double x = 0.5 * (dg[i] + dg[i + 1]);
            const double want = std::exp(-k * amf * x);
            worst = std::max(worst, std::abs(interp_tau(lut, Channel::Swir2, x, amf) - want) / want);
        }
    CHECK(worst <= 1e-4);
}

TEST_CASE("interpolation range handling") {
    const RtLut& lut = shipped();
    CHECK_THROWS_AS(interp_tau(lut, Channel::Swir2, 100.0, 1.5), RangeError);
    CHECK_THROWS_AS(interp_tau(lut, Channel::Swir2, 100.0, 6.5), RangeError);
    CHECK_THROWS_AS(interp_tau(lut, Channel::Swir2, -1.0, 3.0), RangeError);
    InterpStats stats;
    const double top = interp_tau(lut, Channel::Swir2, lut.max_dch4(), 3.0);
    CHECK(interp_tau(lut, Channel::Swir2, 2 * lut.max_dch4(), 3.0, &stats) == top);
    CHECK(stats.clamped == 1);

    raster::Raster q(2, 2, 100.0);
    q(1, 1) = 3 * lut.max_dch4();
    InterpStats rs;
    const auto out = interp_tau(lut, Channel::Swir2, q, 3.0, &rs);
    CHECK(out(0, 0) == interp_tau(lut, Channel::Swir2, 100.0, 3.0));
    CHECK(out(1, 1) == top);
    CHECK(rs.clamped == 1);
}

TEST_CASE("interpolant slope is continuous across knots") {
    const RtLut& lut = shipped();
    const TauCurve curve(lut, Channel::Ratio, 3.22);
    const auto& dg = lut.dch4_grid();
    for (std::size_t i = 2; i + 1 < dg.size(); ++i) {
        const double x = dg[i];
        const double h = 1e-6 * (dg[i + 1] - dg[i - 1]);
        const double left = (curve(x) - curve(x - h)) / h;
        const double right = (curve(x + h) - curve(x)) / h;
        CHECK(std::abs(left - right) <= 1e-3 * std::max(std::abs(left), std::abs(right)));
    }
}

TEST_CASE("inversion") {
    const RtLut& lut = shipped();
    CHECK(invert_tau(lut, Channel::Ratio, 1.0, 3.0) == 0.0);
    CHECK_THROWS_AS(invert_tau(lut, Channel::Ratio, 1.2, 3.0), RangeError);
    CHECK_THROWS_AS(invert_tau(lut, Channel::Ratio, 0.0, 3.0), RangeError);

    plume::Rng rng(20);
    const auto& dg = lut.dch4_grid();
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
        const double amf = plume::uniform(rng, 2.0, 6.0);
        const double x = plume::uniform(rng, dg[1], dg[dg.size() - 2]);
        const double tau = interp_tau(lut, Channel::Ratio, x, amf);
        worst = std::max(worst, std::abs(invert_tau(lut, Channel::Ratio, tau, amf) - x));
    }
    CHECK(worst <= 1.0);
}

TEST_CASE("air mass factor from angles") {
    CHECK(amf_from_angles(0, 0) == doctest::Approx(2.0));
    CHECK(amf_from_angles(60, 0) == doctest::Approx(3.0));
    CHECK_THROWS_AS(amf_from_angles(90, 0), RangeError);
    CHECK_THROWS_AS(amf_from_angles(10, 85), RangeError);
}

TEST_CASE("absorption model save and load") {
    testutil::TempDir dir("model");
    const AbsorptionModel m = flat_model(0.1, 0.3);
    m.save(dir.path() / "model.json");
    const AbsorptionModel back = AbsorptionModel::load(dir.path() / "model.json");
    CHECK(back.bands.at(Band::Swir2).sigma == m.bands.at(Band::Swir2).sigma);
    CHECK(back.bands.at(Band::Swir1).wavelength_nm == m.bands.at(Band::Swir1).wavelength_nm);
    AbsorptionModel bad = m;
    bad.bands[Band::Swir1].sigma[3] = -1.0;
    CHECK_THROWS_AS(bad.validate(), SpectralSupportError);
}
