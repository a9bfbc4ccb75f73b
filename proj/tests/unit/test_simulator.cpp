#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "helpers.hpp"
#include "plume/errors.hpp"
#include "plume/retrieval/retrieval.hpp"
#include "plume/simulator/simulator.hpp"
#include "plume/synthetic/synthetic.hpp"

using namespace plume;
using namespace plume::simulator;
using raster::Band;
using raster::Scene;
using raster::Wind;

namespace {

const rtlut::RtLut& lut() {
    static const rtlut::RtLut l =
        rtlut::build_lut(rtlut::AbsorptionModel::load(rtlut::default_model_path()), rtlut::default_dch4_grid(),
                         rtlut::default_amf_grid());
    return l;
}

PlumeRecord square_plume(int size, int half, double value, Wind wind = {3.0, 0.0}) {
    PlumeRecord p;
    p.plume_id = "square";
    p.site_id = "donor";
    p.dch4 = raster::Raster(size, size, 0.0);
    p.mask = raster::Mask(size, size, 0);
    p.source_px = {size / 2, size / 2};
    p.wind = wind;
    for (int r = size / 2 - half; r <= size / 2 + half; ++r)
        for (int c = size / 2 - half; c <= size / 2 + half; ++c) {
            p.dch4(r, c) = value;
            p.mask(r, c) = 1;
        }
    return p;
}

PlumeRecord with_wind(double speed) {
    PlumeRecord p = square_plume(16, 2, 1000.0, {speed, 0.0});
    p.plume_id = std::to_string(speed);
    return p;
}

double column_sum(const raster::Raster& r) {
    double s = 0.0;
    for (double v : r) s += v;
    return s;
}

// One site with clear negatives and `real` positives.
struct SiteFixture {
    std::vector<Scene> scenes;
    DatasetIndex index;

    SiteFixture(int real, Wind wind) {
        scenes.reserve(4 + real);
        for (int k = 0; k < 4; ++k) {
            Scene s = testutil::flat_scene(32, 32, 50 + k);
            s.wind = wind;
            scenes.push_back(std::move(s));
        }
        for (int k = 0; k < real; ++k) {
            Scene s = testutil::flat_scene(32, 32, 70 + k);
            s.truth_mask = raster::Mask(32, 32, 0);
            (*s.truth_mask)(16, 16) = 1;
            scenes.push_back(std::move(s));
        }
        SiteSamples ss;
        ss.site_id = "site_a";
        for (int k = 0; k < 4; ++k) ss.negatives.push_back({&scenes[k], &scenes[(k + 1) % 4]});
        for (int k = 0; k < real; ++k) ss.positives.push_back({&scenes[4 + k], &scenes[0]});
        index.sites.push_back(std::move(ss));
        index.library = {square_plume(16, 2, 2000.0, {3.0, 0.0})};
        index.lut = &lut();
    }
};

double synthetic_fraction(int real, int draws, std::uint64_t seed) {
    SiteFixture f(real, {3.0, 1.0});
    SimulationPolicy policy;
    Rng rng(seed);
    int synthetic = 0;
    for (int i = 0; i < draws; ++i) {
        auto s = draw_for_site(f.index, 0, true, policy, rng);
        REQUIRE(s.has_value());
        CHECK(s->positive);
        synthetic += s->synthetic ? 1 : 0;
    }
    return static_cast<double>(synthetic) / draws;
}

}  // namespace

TEST_CASE("donor sampling by wind speed") {
    const std::vector<PlumeRecord> library = {with_wind(2.0), with_wind(4.4), with_wind(6.0)};
    const SimulationPolicy policy;
    Rng rng(1);

    SUBCASE("too windy") { CHECK_FALSE(sample_donor_plume(library, {10.0, 0.0}, policy, rng).has_value()); }
    SUBCASE("only donors within tolerance") {
        std::set<std::size_t> seen;
        for (int i = 0; i < 200; ++i) {
            const auto d = sample_donor_plume(library, {0.0, 3.0}, policy, rng);
            REQUIRE(d.has_value());
            seen.insert(*d);
        }
        CHECK(seen == std::set<std::size_t>{0, 1});
    }
    SUBCASE("no qualifier") {
        const std::vector<PlumeRecord> far = {with_wind(8.5)};
        CHECK_FALSE(sample_donor_plume(far, {2.0, 0.0}, policy, rng).has_value());
    }
}

TEST_CASE("rotation") {
    const auto plumes = synthetic::fixture_plumes();

    SUBCASE("same direction is the identity") {
        const PlumeRecord& p = plumes[0];
        const Wind stronger{p.wind.u * 2.0, p.wind.v * 2.0};
        const PlumeRecord out = rotate_to_wind(p, stronger);
        CHECK(out.dch4 == p.dch4);
        CHECK(out.mask == p.mask);
    }
    SUBCASE("zero target wind") { CHECK_THROWS_AS(rotate_to_wind(plumes[0], {0.0, 0.0}), DirectionUndefined); }
    SUBCASE("quarter turn of a bar conserves mass") {
        PlumeRecord bar;
        bar.plume_id = "bar";
        bar.dch4 = raster::Raster(41, 41, 0.0);
        bar.mask = raster::Mask(41, 41, 0);
        bar.source_px = {20, 20};
        bar.wind = {4.0, 0.0};
        for (int c = 20; c < 36; ++c)
            for (int r = 19; r <= 21; ++r) {
                bar.dch4(r, c) = 3000.0;
                bar.mask(r, c) = 1;
            }
        // eastward to northward: the bar now runs up the image
        const PlumeRecord out = rotate_to_wind(bar, {0.0, 4.0});
        CHECK(std::abs(column_sum(out.dch4) - column_sum(bar.dch4)) <= 0.02 * column_sum(bar.dch4));
        CHECK(out.mask(10, 20) == 1);
        CHECK(out.mask(20, 30) == 0);
        CHECK(raster::count_true(out.mask) == raster::count_true(bar.mask));
    }
    SUBCASE("rotation is an involution on fixture masks") {
        for (const auto& p : plumes)
            for (double deg : {17.0, 90.0, 133.0, -61.0, 180.0}) {
                const double a = deg * std::numbers::pi / 180.0;
                const auto there = rotate_mask(p.mask, p.source_px, a);
                CHECK(rotate_mask(there, p.source_px, -a) == p.mask);
            }
    }
    SUBCASE("rotated records stay valid") {
        for (const auto& p : plumes) {
            const PlumeRecord out = rotate_to_wind(p, {-2.0, 3.0});
            CHECK_NOTHROW(out.validate());
            CHECK(std::abs(column_sum(out.dch4) - column_sum(p.dch4)) <= 0.02 * column_sum(p.dch4));
        }
    }
}

TEST_CASE("injection") {
    Scene s = testutil::flat_scene(40, 40, 3);
    s.wind = {3.0, 0.0};

    SUBCASE("zero column leaves the scene unchanged") {
        PlumeRecord p = square_plume(16, 2, 1.0);
        for (auto& v : p.dch4) v = 0.0;
        const Scene out = inject_plume(s, p, lut());
        for (int b = 0; b < raster::kBandCount; ++b) CHECK(out.bands[b] == s.bands[b]);
    }
    SUBCASE("SWIR2 is attenuated more than SWIR1") {
        const PlumeRecord p = square_plume(16, 3, 5000.0);
        const Scene out = inject_plume(s, p, lut());
        CHECK(out.synthetic);
        REQUIRE(out.truth_mask.has_value());
        CHECK(raster::count_true(*out.truth_mask) == 49);
        for (std::size_t i = 0; i < out.truth_mask->size(); ++i) {
            const double r1 = out.band(Band::Swir1)[i] / s.band(Band::Swir1)[i];
            const double r2 = out.band(Band::Swir2)[i] / s.band(Band::Swir2)[i];
            if ((*out.truth_mask)[i]) {
                CHECK(r2 < r1);
                CHECK(r1 < 1.0);
            } else {
                CHECK(r1 == 1.0);
                CHECK(r2 == 1.0);
            }
        }
        for (Band b : {Band::Blue, Band::Green, Band::Red, Band::Nir}) CHECK(out.band(b) == s.band(b));
    }
    SUBCASE("plume beyond the crop") {
        PlumeRecord p = square_plume(16, 2, 1000.0);
        s.source_px = {1, 1};
        CHECK_THROWS_AS(inject_plume(s, p, lut()), ExtentError);
    }
}

TEST_CASE("injection round trip through MBMP on fixture plumes") {
    const auto plumes = synthetic::fixture_plumes();
    REQUIRE(plumes.size() >= 10);
    for (std::size_t k = 0; k < plumes.size(); ++k) {
        const auto& p = plumes[k];
        auto pair = synthetic::fixture_scene_pair(200 + k);
        pair.scene.wind = p.wind;
        const Scene inj = inject_plume(pair.scene, p, lut());
        const auto prod = retrieval::mbmp(inj, pair.scene, lut());
        const int dr = inj.source_px.row - p.source_px.row;
        const int dc = inj.source_px.col - p.source_px.col;
        double worst = 0.0;
        std::size_t inter = 0, uni = 0;
        for (int r = 0; r < inj.rows(); ++r)
            for (int c = 0; c < inj.cols(); ++c) {
                const int pr = r - dr, pc = c - dc;
                const double t = p.dch4.in_bounds(pr, pc) ? p.dch4(pr, pc) : 0.0;
                const bool a = t > 500.0;
                const bool b = prod.dch4(r, c) > 500.0;
                inter += a && b;
                uni += a || b;
                if (a) worst = std::max(worst, std::abs(prod.dch4(r, c) - t) / t);
            }
        CHECK(worst <= 0.15);
        CHECK(static_cast<double>(inter) / static_cast<double>(uni) >= 0.6);
    }
}

TEST_CASE("sampling tiers") {
    SUBCASE("no real plumes always synthesizes") { CHECK(synthetic_fraction(0, 500, 1) == 1.0); }
    SUBCASE("seven real plumes") { CHECK(std::abs(synthetic_fraction(7, 10000, 2) - 0.1) <= 0.01); }
    SUBCASE("three real plumes") { CHECK(std::abs(synthetic_fraction(3, 10000, 3) - 0.9) <= 0.01); }
    SUBCASE("policy tiers") {
        const SimulationPolicy p;
        CHECK(p.synthetic_probability(0) == 1.0);
        CHECK(p.synthetic_probability(1) == 0.9);
        CHECK(p.synthetic_probability(5) == 0.9);
        CHECK(p.synthetic_probability(6) == 0.1);
    }
}

TEST_CASE("windy sites never receive synthetic plumes") {
    SiteFixture windy(2, {9.5, 0.0});
    SimulationPolicy policy;
    Rng rng(4);
    for (int i = 0; i < 300; ++i) {
        const TrainingSample s = draw_training_sample(windy.index, policy, rng);
        CHECK_FALSE(s.synthetic);
    }
    SiteFixture starved(0, {9.5, 0.0});
    for (auto& n : starved.index.sites[0].negatives) n = {nullptr, nullptr};
    starved.index.sites[0].negatives.clear();
    CHECK_THROWS_AS(draw_training_sample(starved.index, policy, rng), SamplerStarvation);
}

TEST_CASE("sample streams are reproducible") {
    SiteFixture f(2, {3.0, 1.0});
    SimulationPolicy policy;
    Rng a(9), b(9);
    for (int i = 0; i < 50; ++i) {
        const auto x = draw_training_sample(f.index, policy, a);
        const auto y = draw_training_sample(f.index, policy, b);
        CHECK(x.positive == y.positive);
        CHECK(x.synthetic == y.synthetic);
        CHECK(x.truth == y.truth);
        CHECK(x.scene.band(Band::Swir2) == y.scene.band(Band::Swir2));
    }
}

TEST_CASE("plume library round trip") {
    testutil::TempDir dir("library");
    const auto plumes = synthetic::fixture_plumes();
    for (std::size_t k = 0; k < 3; ++k) save_plume(plumes[k], dir.path());
    const auto back = load_plume_library(dir.path());
    REQUIRE(back.size() == 3);
    for (const auto& p : back) {
        const auto it = std::find_if(plumes.begin(), plumes.end(), [&](const auto& q) { return q.plume_id == p.plume_id; });
        REQUIRE(it != plumes.end());
        CHECK(p.mask == it->mask);
        CHECK(p.source_px == it->source_px);
        CHECK(p.flux_kg_h == doctest::Approx(it->flux_kg_h));
        for (std::size_t i = 0; i < p.dch4.size(); ++i) CHECK(p.dch4[i] == doctest::Approx(it->dch4[i]).epsilon(1e-6));
    }
    PlumeRecord bad = plumes[0];
    bad.dch4[0] = 5.0;
    CHECK_THROWS_AS(bad.validate(), FormatError);
}
