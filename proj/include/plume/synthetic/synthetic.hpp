#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "plume/raster/registry.hpp"
#include "plume/raster/scene.hpp"
#include "plume/rng.hpp"
#include "plume/rtlut/rtlut.hpp"
#include "plume/simulator/simulator.hpp"

namespace plume::synthetic {

/// Fixed surface reflectance of one site, one raster per band.
struct Surface {
    std::array<raster::Raster, raster::kBandCount> bands;
    int rows() const { return bands[0].rows(); }
    int cols() const { return bands[0].cols(); }
};

struct SiteStyle {
    std::string site_id;
    std::string country = "Synthland";
    raster::Sector sector = raster::Sector::OilGas;
    double lon = 0.0, lat = 0.0;
    raster::Satellite satellite = raster::Satellite::S2A;
    double brightness = 1.0;       // multiplies the base spectrum
    double texture = 0.15;         // relative amplitude of spatial structure
    double noise = 0.002;          // per-pixel reflectance noise (absolute)
    double cloud_probability = 0.15;
    double mean_wind = 4.0;        // m/s
    double plume_strength = 1.0;   // multiplies sampled plume peaks
};

Surface make_surface(int rows, int cols, const SiteStyle& style, Rng& rng);

struct PassOptions {
    bool clouds = true;
    double brightness_jitter = 0.03;
};

/// One acquisition over the surface: per-band brightness jitter, noise,
/// optional cloud blobs with shadows. Validity comes from the threshold cloud
/// masker; the source pixel is the crop centre.
raster::Scene make_pass(const Surface& surface, const SiteStyle& style, raster::Timestamp t, raster::Wind wind,
                        Rng& rng, const PassOptions& opts = {});

struct PlumeShape {
    double decay_px = 12.0;   // along-wind e-folding length
    double sigma0_px = 1.5;   // cross-wind spread at the source
    double spread = 0.2;      // cross-wind spread growth per pixel downwind
    double mask_fraction = 0.08;
};

/// Downwind Gaussian plume on a rows x cols grid with its source at
/// `source`, scaled to the given peak column. dch4 is positive exactly on
/// the mask; flux_kg_h is catalogued from the field with quantify::flux.
simulator::PlumeRecord make_plume(int rows, int cols, raster::PixelPos source, raster::Wind wind, double peak_ppbm,
                                  const PlumeShape& shape, const std::string& plume_id);

PlumeShape random_shape(Rng& rng);

/// Deterministic fixture plumes (at least ten) on 64 x 64 grids with the
/// source at (32, 32).
std::vector<simulator::PlumeRecord> fixture_plumes();

/// A cloud-free 200 x 200 fixture scene (noise-free by default) and an earlier pass of the
/// same surface to serve as its reference.
struct FixturePair {
    raster::Scene scene;
    raster::Scene reference;
};
FixturePair fixture_scene_pair(std::uint64_t seed, int size = 200, double noise = 0.0);

// ---------------------------------------------------------------- corpus

struct CorpusConfig {
    int train_sites = 8;
    bool shifted_site = true;  // adds a ninth, distribution-shifted site
    int crop = 64;
    int scenes_per_site = 250;
    double prevalence = 0.10;
    int first_year = 2019;
    int last_year = 2022;
    int validation_year = 2021;
    int test_year = 2022;
    int library_plumes = 80;
    std::uint64_t seed = 7;
};

enum class Split { Train, Validation, Test };
std::string_view split_name(Split s);

struct CorpusScene {
    raster::Scene scene;
    Split split = Split::Train;
    std::size_t site = 0;
    std::optional<double> flux_kg_h;  // catalogued flux of a real plume
};

struct Corpus {
    CorpusConfig config;
    std::vector<SiteStyle> styles;  // train sites first, shifted site last
    std::vector<raster::SiteRecord> sites;
    std::vector<CorpusScene> scenes;  // per site in time order
    std::vector<simulator::PlumeRecord> library;

    bool is_shifted(std::size_t site) const { return config.shifted_site && site + 1 == styles.size(); }
};

Corpus generate_corpus(const CorpusConfig& config, const rtlut::RtLut& lut);

/// Layout: sites.csv, corpus.json, scenes/<site>/<timestamp>/, plumes/.
void save_corpus(const Corpus& corpus, const std::filesystem::path& root);
Corpus load_corpus(const std::filesystem::path& root);

/// Scene index with the reference pass chosen for each scene (nullptr when
/// no reference qualifies).
struct PairedScene {
    const CorpusScene* item = nullptr;
    const raster::Scene* reference = nullptr;
};
std::vector<PairedScene> pair_references(const Corpus& corpus);

}  // namespace plume::synthetic
