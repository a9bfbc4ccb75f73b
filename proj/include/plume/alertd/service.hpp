#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "plume/alertd/ingest.hpp"
#include "plume/alertd/layers.hpp"
#include "plume/alertd/store.hpp"

namespace httplib {
class Server;
}

namespace plume::alertd {

struct Config {
    std::filesystem::path data_root = "alertd-data";
    std::filesystem::path scene_root = "scenes";
    std::filesystem::path model;     // checkpoint manifest
    std::filesystem::path lut;       // empty: build the default table at startup
    std::filesystem::path registry;  // site CSV
    std::string host = "127.0.0.1";
    int port = 8080;
    Schedule schedule;
    double scan_window_days = 3.0;
    double lookback_days = 120.0;

    std::filesystem::path db_path() const { return data_root / "alertd.db"; }
    std::filesystem::path product_root() const { return data_root / "products"; }

    /// Relative paths resolve against the file's directory. ALERTD_DATA_ROOT,
    /// when set, replaces data_root.
    static Config load(const std::filesystem::path& path);
    static Config from_json(const nlohmann::json& j, const std::filesystem::path& base = {});
};

/// Store plus the models used by ingest. The HTTP API only needs the store,
/// so model and LUT load on first ingest.
class Service {
public:
    explicit Service(Config cfg, Clock clock = {});

    Store& store() { return *store_; }
    const Config& config() const { return cfg_; }

    /// Scans [now - scan window, now] once.
    IngestReport ingest_once();
    IngestReport ingest(raster::Timestamp from, raster::Timestamp to);

    void register_routes(httplib::Server& server);

    /// Runs ingest at each scheduled time until `stop` is set, retrying with
    /// backoff while the scene source is unreachable.
    void run_scheduler(const std::atomic<bool>& stop);

private:
    void ensure_models();

    Config cfg_;
    Clock clock_;
    std::unique_ptr<Store> store_;
    std::unique_ptr<SceneSource> source_;
    std::unique_ptr<detector::DetectorModel> model_;
    std::unique_ptr<rtlut::RtLut> lut_;
    std::mutex ingest_mu_;
};

/// Parses GET /alerts query parameters; BadRequest on malformed values.
AlertFilter parse_filter(const std::multimap<std::string, std::string>& params);

}  // namespace plume::alertd
