#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "plume/raster/registry.hpp"
#include "plume/raster/scene.hpp"

struct sqlite3;

namespace plume::alertd {

enum class Status { New, Inspecting, Validated, Rejected, Notified };

inline constexpr std::array<Status, 5> kAllStatuses = {Status::New, Status::Inspecting, Status::Validated,
                                                       Status::Rejected, Status::Notified};

std::string_view status_name(Status s);
/// BadRequest for unknown names.
Status parse_status(std::string_view s);
/// new -> inspecting -> {validated, rejected}; validated -> notified.
bool transition_allowed(Status from, Status to);

struct Alert {
    std::int64_t alert_id = 0;
    std::string site_id;
    std::string scene_id;
    std::string timestamp;  // acquisition, ISO 8601 UTC
    std::string satellite;
    std::string country;
    double scene_score = 0.0;
    std::optional<double> flux_kg_h;
    std::optional<double> uncertainty_kg_h;
    Status status = Status::New;
    std::string note;
    std::int64_t version = 1;
    std::string model_version;
    std::string created_at;
    std::string updated_at;
    std::optional<std::string> notified_at;

    nlohmann::json to_json() const;
};

struct AlertFilter {
    std::optional<double> min_score, max_score;
    std::optional<double> min_flux, max_flux;
    std::optional<std::string> satellite;
    std::optional<std::string> country;
    std::optional<Status> status;
    std::optional<std::string> site_id;
    int limit = 50;
    int offset = 0;

    /// BadRequest on inverted ranges or bad paging.
    void validate() const;
};

struct AlertPage {
    std::size_t total = 0;
    std::vector<Alert> alerts;

    nlohmann::json to_json() const;
};

struct AuditEntry {
    std::int64_t audit_id = 0;
    std::int64_t alert_id = 0;
    std::string kind = "transition";  // or "mask"
    std::string reviewer;
    Status from = Status::New;
    Status to = Status::New;
    std::string note;
    std::string at;
};

enum class SceneState { Scored, Rejected, Failed };
std::string_view scene_state_name(SceneState s);

struct SceneRecord {
    std::string scene_id;
    std::string site_id;
    std::string satellite;
    std::string timestamp;
    std::string bundle;
    SceneState state = SceneState::Scored;
    bool usable = true;
    double fraction_cloud = 0.0;
    double fraction_shadow = 0.0;
    double fraction_missing = 0.0;
    std::string error;
    std::string processed_at;
};

struct PredictionRecord {
    std::string scene_id;
    std::string model_version;
    std::string film_bank;
    std::string retrieval;  // MBMP or MBSP
    std::string reference_id;
    double scene_score = 0.0;
    double pixel_threshold = 0.5;
    int min_blob_px = 3;
    std::string product_dir;
    raster::Wind wind;
    nlohmann::json flux;  // null when no plume pixels survive
    std::string created_at;
};

using Clock = std::function<raster::Timestamp()>;

/// Embedded store: one SQLite file with tables sites, scenes, predictions,
/// alerts and audit. Each Store owns one connection; several Stores may
/// share a file.
class Store {
public:
    explicit Store(const std::filesystem::path& db_path, Clock clock = {});
    ~Store();
    Store(const Store&) = delete;
    Store& operator=(const Store&) = delete;

    void upsert_sites(const std::vector<raster::SiteRecord>& sites);
    std::vector<raster::SiteRecord> sites() const;
    std::optional<raster::SiteRecord> site(const std::string& site_id) const;
    std::optional<std::string> watermark(const std::string& site_id) const;
    void set_watermark(const std::string& site_id, const std::string& ts);

    bool has_scene(const std::string& scene_id) const;
    void put_scene(const SceneRecord& r);
    std::optional<SceneRecord> scene(const std::string& scene_id) const;
    std::vector<SceneRecord> scenes(std::optional<SceneState> state = std::nullopt) const;

    void put_prediction(const PredictionRecord& p);
    std::optional<PredictionRecord> prediction(const std::string& scene_id) const;

    /// Inserts the alert and returns it with id, version and timestamps set.
    Alert create_alert(Alert a);
    Alert get_alert(std::int64_t id) const;  // NotFound
    std::optional<Alert> alert_for_scene(const std::string& scene_id) const;
    AlertPage list_alerts(const AlertFilter& f) const;
    std::vector<Alert> all_alerts() const;

    /// Optimistic update: ConflictError when `expected_version` is given and
    /// stale, TransitionError when the status machine forbids the move.
    Alert transition(std::int64_t id, Status to, const std::string& reviewer, const std::string& note,
                     std::optional<std::int64_t> expected_version = std::nullopt);
    /// Replaces the flux of an alert (mask override), bumping its version.
    Alert update_flux(std::int64_t id, std::optional<double> flux, std::optional<double> uncertainty,
                      const std::string& reviewer);
    std::vector<AuditEntry> audit(std::optional<std::int64_t> alert_id = std::nullopt) const;

    /// Validated and notified alerts acquired in [from, to), as CSV.
    std::string export_public(const std::string& from, const std::string& to) const;

    std::string now() const;

private:
    sqlite3* db_ = nullptr;
    Clock clock_;
    mutable std::mutex mu_;
};

}  // namespace plume::alertd
