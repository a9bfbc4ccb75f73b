#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "plume/alertd/store.hpp"
#include "plume/detector/model.hpp"
#include "plume/raster/validity.hpp"
#include "plume/rtlut/rtlut.hpp"

namespace plume::alertd {

struct SceneHandle {
    std::string site_id;
    raster::Timestamp timestamp{};
    std::filesystem::path bundle;

    std::string scene_id() const;
};

/// Where new passes come from. Implementations throw IngestDeferred when the
/// backing storage cannot be reached.
class SceneSource {
public:
    virtual ~SceneSource() = default;
    /// Passes of one site acquired in [from, to), oldest first.
    virtual std::vector<SceneHandle> list(const std::string& site_id, raster::Timestamp from,
                                          raster::Timestamp to) const = 0;
    virtual raster::Scene load(const SceneHandle& h) const = 0;
};

/// `root/<site_id>/<compact timestamp>/` bundles as written by save_scene.
class DirectorySceneSource final : public SceneSource {
public:
    explicit DirectorySceneSource(std::filesystem::path root) : root_(std::move(root)) {}
    std::vector<SceneHandle> list(const std::string& site_id, raster::Timestamp from,
                                  raster::Timestamp to) const override;
    raster::Scene load(const SceneHandle& h) const override;

private:
    std::filesystem::path root_;
};

struct IngestOptions {
    double lookback_days = 120.0;
    std::filesystem::path product_root;  // per-scene rasters land in product_root/<scene_id>/
    raster::ThresholdMaskerConfig masker;
};

struct IngestContext {
    Store& store;
    const SceneSource& source;
    detector::DetectorModel& model;
    const rtlut::RtLut& lut;
    IngestOptions options;
};

struct IngestReport {
    std::vector<Alert> alerts;
    std::vector<std::string> rejected;  // scene ids failing the validity cutoff
    std::vector<std::string> failed;
    std::size_t skipped = 0;  // already processed

    nlohmann::json to_json() const;
};

/// One pass over every active site for scenes acquired in [from, to).
/// Per-scene errors are logged and recorded; IngestDeferred propagates.
IngestReport run_ingest(IngestContext& ctx, raster::Timestamp from, raster::Timestamp to);

/// Boolean plume mask: pixels of 4-connected components of
/// {prob >= threshold} with at least `min_blob_px` members.
raster::Mask plume_mask(const raster::Raster& prob, double threshold, int min_blob_px);

/// Re-quantifies an alert from an analyst-supplied mask, stores the mask next
/// to the scene products and updates the alert's flux.
Alert override_mask(Store& store, std::int64_t alert_id, const raster::Mask& mask, const std::string& reviewer);

/// Scene score recomputed from the persisted probability raster.
double recompute_score(const Store& store, const std::string& scene_id);

std::filesystem::path product_dir(const std::filesystem::path& product_root, const std::string& scene_id);

/// Daily schedule at a fixed UTC time of day.
struct Schedule {
    int hour = 6;
    int minute = 30;

    static Schedule parse(std::string_view hhmm);  // BadRequest on malformed input
    raster::Timestamp next_run_after(raster::Timestamp now) const;
};

/// Retry delays after IngestDeferred: 60 s, doubling, capped at one hour.
std::chrono::seconds retry_delay(int attempt);

}  // namespace plume::alertd
