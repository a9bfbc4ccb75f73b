#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plume/raster/scene.hpp"
#include "plume/rng.hpp"
#include "plume/rtlut/rtlut.hpp"

namespace plume::simulator {

/// A labelled plume: a concentration field that is positive exactly on its
/// mask, the wind at acquisition and the catalogued flux.
struct PlumeRecord {
    std::string plume_id;
    std::string site_id;
    raster::Raster dch4;  // ppb*m
    raster::Mask mask;
    raster::Wind wind;
    double flux_kg_h = 0.0;
    raster::Satellite satellite = raster::Satellite::S2A;
    raster::Timestamp timestamp{};
    raster::PixelPos source_px;

    /// Throws FormatError unless dch4 > 0 exactly on the (non-empty) mask.
    void validate() const;
};

struct SimulationPolicy {
    double wind_tolerance = 1.5;  // m/s
    double max_wind = 9.0;        // m/s
    double p_synthetic_when_0_real = 1.0;
    double p_synthetic_when_1to5_real = 0.9;
    double p_synthetic_when_gt5_real = 0.1;
    double p_positive = 0.5;
    int max_attempts = 100;

    double synthetic_probability(std::size_t real_positives) const;
    void validate() const;
};

/// Uniform draw among plumes whose wind speed is within tolerance of the
/// target speed. nullopt when the target is too windy or nothing qualifies.
std::optional<std::size_t> sample_donor_plume(std::span<const PlumeRecord> library, raster::Wind target,
                                              const SimulationPolicy& policy, Rng& rng);

/// Direction of the wind in image coordinates (x = column east, y = row south), radians.
double image_wind_angle(raster::Wind w);

/// Rotates mask and concentration about the source pixel so the plume axis
/// follows `target`. The mask is moved by three integer shears (a bijection,
/// so rotating back by the opposite angle restores it exactly); the field is
/// resampled bilinearly and restricted to the rotated mask.
PlumeRecord rotate_to_wind(const PlumeRecord& plume, raster::Wind target);

/// Rotation primitive used by rotate_to_wind, exposed for testing.
raster::Mask rotate_mask(const raster::Mask& mask, raster::PixelPos pivot, double angle_rad);
raster::Raster rotate_bilinear(const raster::Raster& field, raster::PixelPos pivot, double angle_rad);

/// Multiplies SWIR1 and SWIR2 by the LUT transmittance of the plume column,
/// aligning the plume's source pixel with the scene's. The result is tagged
/// synthetic and carries the placed mask as ground truth.
raster::Scene inject_plume(const raster::Scene& scene, const PlumeRecord& plume, const rtlut::RtLut& lut);

/// Plume library directory: `plume_{id}/dch4.tif + mask.tif + plume.json`.
void save_plume(const PlumeRecord& plume, const std::filesystem::path& library_dir);
PlumeRecord load_plume(const std::filesystem::path& plume_dir);
std::vector<PlumeRecord> load_plume_library(const std::filesystem::path& library_dir);

// ---------------------------------------------------------------- sampling

/// A scene paired with its reference pass.
struct Example {
    const raster::Scene* scene = nullptr;
    const raster::Scene* reference = nullptr;
};

struct SiteSamples {
    std::string site_id;
    std::vector<Example> negatives;
    std::vector<Example> positives;  // real plumes; scene->truth_mask holds the label
};

struct DatasetIndex {
    std::vector<SiteSamples> sites;
    std::vector<PlumeRecord> library;
    const rtlut::RtLut* lut = nullptr;
};

struct TrainingSample {
    raster::Scene scene;
    const raster::Scene* reference = nullptr;
    raster::Mask truth;
    bool positive = false;
    bool synthetic = false;
    std::size_t site_index = 0;
    std::optional<std::size_t> donor;  // library index for synthetic samples
};

/// One dataloader call: uniform site, coin for the plume indicator, then the
/// tiered real/synthetic choice. Failed synthetic draws fall back to a real
/// positive, else the location is redrawn (SamplerStarvation after
/// policy.max_attempts).
TrainingSample draw_training_sample(const DatasetIndex& index, const SimulationPolicy& policy, Rng& rng);

/// The per-site step of draw_training_sample; nullopt means "redraw the location".
std::optional<TrainingSample> draw_for_site(const DatasetIndex& index, std::size_t site, bool positive,
                                            const SimulationPolicy& policy, Rng& rng);

}  // namespace plume::simulator
