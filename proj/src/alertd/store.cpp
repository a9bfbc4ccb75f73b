#include "plume/alertd/store.hpp"

#include <sqlite3.h>

#include <chrono>
#include <sstream>

#include "plume/errors.hpp"

namespace plume::alertd {

namespace {

constexpr const char* kSchema = R"sql(
CREATE TABLE IF NOT EXISTS sites(
  site_id TEXT PRIMARY KEY, lon REAL, lat REAL, country TEXT, sector TEXT,
  offshore INTEGER, active INTEGER, film_bank TEXT, watermark TEXT);
CREATE TABLE IF NOT EXISTS scenes(
  scene_id TEXT PRIMARY KEY, site_id TEXT NOT NULL, satellite TEXT, timestamp TEXT NOT NULL,
  bundle TEXT, state TEXT NOT NULL, usable INTEGER, fraction_cloud REAL, fraction_shadow REAL,
  fraction_missing REAL, error TEXT, processed_at TEXT);
CREATE TABLE IF NOT EXISTS predictions(
  scene_id TEXT PRIMARY KEY, model_version TEXT, film_bank TEXT, retrieval TEXT, reference_id TEXT,
  scene_score REAL, pixel_threshold REAL, min_blob_px INTEGER, product_dir TEXT,
  wind_u REAL, wind_v REAL, flux_json TEXT, created_at TEXT);
CREATE TABLE IF NOT EXISTS alerts(
  alert_id INTEGER PRIMARY KEY AUTOINCREMENT, site_id TEXT NOT NULL, scene_id TEXT NOT NULL UNIQUE,
  timestamp TEXT NOT NULL, satellite TEXT, country TEXT, scene_score REAL NOT NULL,
  flux_kg_h REAL, uncertainty_kg_h REAL, status TEXT NOT NULL, note TEXT NOT NULL DEFAULT '',
  version INTEGER NOT NULL, model_version TEXT, created_at TEXT NOT NULL, updated_at TEXT NOT NULL,
  notified_at TEXT);
CREATE INDEX IF NOT EXISTS alerts_score ON alerts(scene_score DESC, timestamp DESC, alert_id);
CREATE TABLE IF NOT EXISTS audit(
  audit_id INTEGER PRIMARY KEY AUTOINCREMENT, alert_id INTEGER NOT NULL, kind TEXT NOT NULL,
  reviewer TEXT, from_status TEXT, to_status TEXT, note TEXT, at TEXT NOT NULL);
)sql";

class Stmt {
public:
    Stmt(sqlite3* db, const std::string& sql) : db_(db) {
        if (sqlite3_prepare_v2(db, sql.c_str(), -1, &st_, nullptr) != SQLITE_OK)
            throw Error(std::string("sqlite prepare: ") + sqlite3_errmsg(db));
    }
    ~Stmt() { sqlite3_finalize(st_); }
    Stmt(const Stmt&) = delete;

    Stmt& bind(int i, const std::string& v) {
        sqlite3_bind_text(st_, i, v.c_str(), -1, SQLITE_TRANSIENT);
        return *this;
    }
    Stmt& bind(int i, const char* v) { return bind(i, std::string(v)); }
    Stmt& bind(int i, std::string_view v) { return bind(i, std::string(v)); }
    Stmt& bind(int i, double v) {
        sqlite3_bind_double(st_, i, v);
        return *this;
    }
    Stmt& bind(int i, std::int64_t v) {
        sqlite3_bind_int64(st_, i, v);
        return *this;
    }
    Stmt& bind(int i, int v) { return bind(i, static_cast<std::int64_t>(v)); }
    Stmt& bind(int i, bool v) { return bind(i, static_cast<std::int64_t>(v)); }
    template <class T>
    Stmt& bind(int i, const std::optional<T>& v) {
        if (v) return bind(i, *v);
        sqlite3_bind_null(st_, i);
        return *this;
    }

    bool step() {
        const int rc = sqlite3_step(st_);
        if (rc == SQLITE_ROW) return true;
        if (rc == SQLITE_DONE) return false;
        throw Error(std::string("sqlite step: ") + sqlite3_errmsg(db_));
    }
    void run() {
        while (step()) {
        }
    }

    bool is_null(int c) const { return sqlite3_column_type(st_, c) == SQLITE_NULL; }
    std::string text(int c) const {
        const auto* p = sqlite3_column_text(st_, c);
        return p ? reinterpret_cast<const char*>(p) : "";
    }
    double real(int c) const { return sqlite3_column_double(st_, c); }
    std::int64_t integer(int c) const { return sqlite3_column_int64(st_, c); }
    std::optional<double> opt_real(int c) const { return is_null(c) ? std::nullopt : std::optional(real(c)); }
    std::optional<std::string> opt_text(int c) const {
        return is_null(c) ? std::nullopt : std::optional(text(c));
    }

private:
    sqlite3* db_;
    sqlite3_stmt* st_ = nullptr;
};

void exec(sqlite3* db, const char* sql) {
    char* err = nullptr;
    if (sqlite3_exec(db, sql, nullptr, nullptr, &err) != SQLITE_OK) {
        std::string msg = err ? err : "unknown";
        sqlite3_free(err);
        throw Error("sqlite: " + msg);
    }
}

class Txn {
public:
    explicit Txn(sqlite3* db) : db_(db) { exec(db_, "BEGIN IMMEDIATE"); }
    ~Txn() {
        if (!done_) sqlite3_exec(db_, "ROLLBACK", nullptr, nullptr, nullptr);
    }
    void commit() {
        exec(db_, "COMMIT");
        done_ = true;
    }

private:
    sqlite3* db_;
    bool done_ = false;
};

constexpr const char* kAlertCols =
    "alert_id, site_id, scene_id, timestamp, satellite, country, scene_score, flux_kg_h, uncertainty_kg_h, "
    "status, note, version, model_version, created_at, updated_at, notified_at";

Alert read_alert(const Stmt& s) {
    Alert a;
    a.alert_id = s.integer(0);
    a.site_id = s.text(1);
    a.scene_id = s.text(2);
    a.timestamp = s.text(3);
    a.satellite = s.text(4);
    a.country = s.text(5);
    a.scene_score = s.real(6);
    a.flux_kg_h = s.opt_real(7);
    a.uncertainty_kg_h = s.opt_real(8);
    a.status = parse_status(s.text(9));
    a.note = s.text(10);
    a.version = s.integer(11);
    a.model_version = s.text(12);
    a.created_at = s.text(13);
    a.updated_at = s.text(14);
    a.notified_at = s.opt_text(15);
    return a;
}

constexpr const char* kSceneCols =
    "scene_id, site_id, satellite, timestamp, bundle, state, usable, fraction_cloud, fraction_shadow, "
    "fraction_missing, error, processed_at";

SceneState parse_scene_state(const std::string& s) {
    if (s == "scored") return SceneState::Scored;
    if (s == "rejected") return SceneState::Rejected;
    return SceneState::Failed;
}

SceneRecord read_scene(const Stmt& s) {
    SceneRecord r;
    r.scene_id = s.text(0);
    r.site_id = s.text(1);
    r.satellite = s.text(2);
    r.timestamp = s.text(3);
    r.bundle = s.text(4);
    r.state = parse_scene_state(s.text(5));
    r.usable = s.integer(6) != 0;
    r.fraction_cloud = s.real(7);
    r.fraction_shadow = s.real(8);
    r.fraction_missing = s.real(9);
    r.error = s.text(10);
    r.processed_at = s.text(11);
    return r;
}

raster::SiteRecord read_site(const Stmt& s) {
    raster::SiteRecord r;
    r.site_id = s.text(0);
    r.lon = s.real(1);
    r.lat = s.real(2);
    r.country = s.text(3);
    r.sector = raster::parse_sector(s.text(4));
    r.offshore = s.integer(5) != 0;
    r.active = s.integer(6) != 0;
    r.film_bank_id = s.opt_text(7);
    return r;
}

std::string csv_field(const std::string& v) {
    if (v.find_first_of(",\"\n") == std::string::npos) return v;
    std::string out = "\"";
    for (char c : v) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string fmt_opt(const std::optional<double>& v) {
    if (!v) return "";
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
}

}  // namespace

std::string_view status_name(Status s) {
    switch (s) {
        case Status::New: return "new";
        case Status::Inspecting: return "inspecting";
        case Status::Validated: return "validated";
        case Status::Rejected: return "rejected";
        case Status::Notified: return "notified";
    }
    return "new";
}

Status parse_status(std::string_view s) {
    for (Status st : kAllStatuses)
        if (status_name(st) == s) return st;
    throw BadRequest("unknown status '" + std::string(s) + "'");
}

bool transition_allowed(Status from, Status to) {
    switch (from) {
        case Status::New: return to == Status::Inspecting;
        case Status::Inspecting: return to == Status::Validated || to == Status::Rejected;
        case Status::Validated: return to == Status::Notified;
        default: return false;
    }
}

std::string_view scene_state_name(SceneState s) {
    switch (s) {
        case SceneState::Scored: return "scored";
        case SceneState::Rejected: return "rejected";
        case SceneState::Failed: return "failed";
    }
    return "failed";
}

nlohmann::json Alert::to_json() const {
    nlohmann::json j = {{"alert_id", alert_id},
                        {"site_id", site_id},
                        {"scene_id", scene_id},
                        {"timestamp", timestamp},
                        {"satellite", satellite},
                        {"country", country},
                        {"scene_score", scene_score},
                        {"status", status_name(status)},
                        {"note", note},
                        {"version", version},
                        {"model_version", model_version},
                        {"created_at", created_at},
                        {"updated_at", updated_at}};
    j["flux_kg_h"] = flux_kg_h ? nlohmann::json(*flux_kg_h) : nlohmann::json(nullptr);
    j["uncertainty_kg_h"] = uncertainty_kg_h ? nlohmann::json(*uncertainty_kg_h) : nlohmann::json(nullptr);
    j["notified_at"] = notified_at ? nlohmann::json(*notified_at) : nlohmann::json(nullptr);
    j["prediction_ref"] = "/scenes/" + scene_id + "/layers/prob";
    return j;
}

void AlertFilter::validate() const {
    if (limit < 1 || limit > 1000) throw BadRequest("limit must be in [1, 1000]");
    if (offset < 0) throw BadRequest("offset must be non-negative");
    if (min_score && max_score && *min_score > *max_score) throw BadRequest("min_score > max_score");
    if (min_flux && max_flux && *min_flux > *max_flux) throw BadRequest("min_flux > max_flux");
}

nlohmann::json AlertPage::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& a : alerts) arr.push_back(a.to_json());
    return {{"total", total}, {"alerts", arr}};
}

Store::Store(const std::filesystem::path& db_path, Clock clock) : clock_(std::move(clock)) {
    if (!clock_)
        clock_ = [] { return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now()); };
    if (db_path.has_parent_path()) std::filesystem::create_directories(db_path.parent_path());
    if (sqlite3_open(db_path.string().c_str(), &db_) != SQLITE_OK) {
        std::string msg = db_ ? sqlite3_errmsg(db_) : "out of memory";
        sqlite3_close(db_);
        throw Error("cannot open store " + db_path.string() + ": " + msg);
    }
    sqlite3_busy_timeout(db_, 10000);
    exec(db_, "PRAGMA journal_mode=WAL");
    exec(db_, "PRAGMA foreign_keys=ON");
    std::lock_guard lk(mu_);
    Txn t(db_);
    exec(db_, kSchema);
    t.commit();
}

Store::~Store() { sqlite3_close(db_); }

std::string Store::now() const { return raster::format_timestamp(clock_()); }

void Store::upsert_sites(const std::vector<raster::SiteRecord>& sites) {
    std::lock_guard lk(mu_);
    Txn t(db_);
    for (const auto& s : sites) {
        Stmt st(db_,
                "INSERT INTO sites(site_id, lon, lat, country, sector, offshore, active, film_bank) "
                "VALUES(?,?,?,?,?,?,?,?) ON CONFLICT(site_id) DO UPDATE SET lon=excluded.lon, lat=excluded.lat, "
                "country=excluded.country, sector=excluded.sector, offshore=excluded.offshore, "
                "active=excluded.active, film_bank=excluded.film_bank");
        st.bind(1, s.site_id).bind(2, s.lon).bind(3, s.lat).bind(4, s.country).bind(5, raster::sector_name(s.sector));
        st.bind(6, s.offshore).bind(7, s.active).bind(8, s.film_bank_id);
        st.run();
    }
    t.commit();
}

std::vector<raster::SiteRecord> Store::sites() const {
    std::lock_guard lk(mu_);
    Stmt st(db_, "SELECT site_id, lon, lat, country, sector, offshore, active, film_bank FROM sites ORDER BY site_id");
    std::vector<raster::SiteRecord> out;
    while (st.step()) out.push_back(read_site(st));
    return out;
}

std::optional<raster::SiteRecord> Store::site(const std::string& site_id) const {
    std::lock_guard lk(mu_);
    Stmt st(db_, "SELECT site_id, lon, lat, country, sector, offshore, active, film_bank FROM sites WHERE site_id=?");
    st.bind(1, site_id);
    if (!st.step()) return std::nullopt;
    return read_site(st);
}

std::optional<std::string> Store::watermark(const std::string& site_id) const {
    std::lock_guard lk(mu_);
    Stmt st(db_, "SELECT watermark FROM sites WHERE site_id=?");
    st.bind(1, site_id);
    if (!st.step()) return std::nullopt;
    return st.opt_text(0);
}

void Store::set_watermark(const std::string& site_id, const std::string& ts) {
    std::lock_guard lk(mu_);
    Stmt st(db_, "UPDATE sites SET watermark=? WHERE site_id=? AND (watermark IS NULL OR watermark < ?)");
    st.bind(1, ts).bind(2, site_id).bind(3, ts);
    st.run();
}

bool Store::has_scene(const std::string& scene_id) const {
    std::lock_guard lk(mu_);
    Stmt st(db_, "SELECT 1 FROM scenes WHERE scene_id=?");
    st.bind(1, scene_id);
    return st.step();
}

void Store::put_scene(const SceneRecord& r) {
    std::lock_guard lk(mu_);
    Stmt st(db_, std::string("INSERT OR REPLACE INTO scenes(") + kSceneCols + ") VALUES(?,?,?,?,?,?,?,?,?,?,?,?)");
    st.bind(1, r.scene_id).bind(2, r.site_id).bind(3, r.satellite).bind(4, r.timestamp).bind(5, r.bundle);
    st.bind(6, scene_state_name(r.state)).bind(7, r.usable).bind(8, r.fraction_cloud).bind(9, r.fraction_shadow);
    st.bind(10, r.fraction_missing).bind(11, r.error).bind(12, r.processed_at.empty() ? now() : r.processed_at);
    st.run();
}

std::optional<SceneRecord> Store::scene(const std::string& scene_id) const {
    std::lock_guard lk(mu_);
    Stmt st(db_, std::string("SELECT ") + kSceneCols + " FROM scenes WHERE scene_id=?");
    st.bind(1, scene_id);
    if (!st.step()) return std::nullopt;
    return read_scene(st);
}

std::vector<SceneRecord> Store::scenes(std::optional<SceneState> state) const {
    std::lock_guard lk(mu_);
    std::string sql = std::string("SELECT ") + kSceneCols + " FROM scenes";
    if (state) sql += " WHERE state=?";
    sql += " ORDER BY timestamp, scene_id";
    Stmt st(db_, sql);
    if (state) st.bind(1, scene_state_name(*state));
    std::vector<SceneRecord> out;
    while (st.step()) out.push_back(read_scene(st));
    return out;
}

void Store::put_prediction(const PredictionRecord& p) {
    std::lock_guard lk(mu_);
    Stmt st(db_,
            "INSERT OR REPLACE INTO predictions(scene_id, model_version, film_bank, retrieval, reference_id, "
            "scene_score, pixel_threshold, min_blob_px, product_dir, wind_u, wind_v, flux_json, created_at) "
            "VALUES(?,?,?,?,?,?,?,?,?,?,?,?,?)");
    st.bind(1, p.scene_id).bind(2, p.model_version).bind(3, p.film_bank).bind(4, p.retrieval);
    st.bind(5, p.reference_id).bind(6, p.scene_score).bind(7, p.pixel_threshold).bind(8, p.min_blob_px);
    st.bind(9, p.product_dir).bind(10, p.wind.u).bind(11, p.wind.v).bind(12, p.flux.dump());
    st.bind(13, p.created_at.empty() ? now() : p.created_at);
    st.run();
}

std::optional<PredictionRecord> Store::prediction(const std::string& scene_id) const {
    std::lock_guard lk(mu_);
    Stmt st(db_,
            "SELECT scene_id, model_version, film_bank, retrieval, reference_id, scene_score, pixel_threshold, "
            "min_blob_px, product_dir, wind_u, wind_v, flux_json, created_at FROM predictions WHERE scene_id=?");
    st.bind(1, scene_id);
    if (!st.step()) return std::nullopt;
    PredictionRecord p;
    p.scene_id = st.text(0);
    p.model_version = st.text(1);
    p.film_bank = st.text(2);
    p.retrieval = st.text(3);
    p.reference_id = st.text(4);
    p.scene_score = st.real(5);
    p.pixel_threshold = st.real(6);
    p.min_blob_px = static_cast<int>(st.integer(7));
    p.product_dir = st.text(8);
    p.wind = {st.real(9), st.real(10)};
    p.flux = nlohmann::json::parse(st.text(11));
    p.created_at = st.text(12);
    return p;
}

Alert Store::create_alert(Alert a) {
    std::lock_guard lk(mu_);
    const std::string ts = now();
    a.status = Status::New;
    a.version = 1;
    a.created_at = a.updated_at = ts;
    a.notified_at.reset();
    Stmt st(db_,
            "INSERT INTO alerts(site_id, scene_id, timestamp, satellite, country, scene_score, flux_kg_h, "
            "uncertainty_kg_h, status, note, version, model_version, created_at, updated_at) "
            "VALUES(?,?,?,?,?,?,?,?,?,?,?,?,?,?)");
    st.bind(1, a.site_id).bind(2, a.scene_id).bind(3, a.timestamp).bind(4, a.satellite).bind(5, a.country);
    st.bind(6, a.scene_score).bind(7, a.flux_kg_h).bind(8, a.uncertainty_kg_h).bind(9, status_name(a.status));
    st.bind(10, a.note).bind(11, a.version).bind(12, a.model_version).bind(13, a.created_at).bind(14, a.updated_at);
    st.run();
    a.alert_id = sqlite3_last_insert_rowid(db_);
    return a;
}

Alert Store::get_alert(std::int64_t id) const {
    std::lock_guard lk(mu_);
    Stmt st(db_, std::string("SELECT ") + kAlertCols + " FROM alerts WHERE alert_id=?");
    st.bind(1, id);
    if (!st.step()) throw NotFound("no alert " + std::to_string(id));
    return read_alert(st);
}

std::optional<Alert> Store::alert_for_scene(const std::string& scene_id) const {
    std::lock_guard lk(mu_);
    Stmt st(db_, std::string("SELECT ") + kAlertCols + " FROM alerts WHERE scene_id=?");
    st.bind(1, scene_id);
    if (!st.step()) return std::nullopt;
    return read_alert(st);
}

AlertPage Store::list_alerts(const AlertFilter& f) const {
    f.validate();
    std::string where = " WHERE 1=1";
    std::vector<std::function<void(Stmt&, int)>> binds;
    auto add = [&](const char* clause, auto value) {
        where += clause;
        binds.push_back([value](Stmt& s, int i) { s.bind(i, value); });
    };
    if (f.min_score) add(" AND scene_score >= ?", *f.min_score);
    if (f.max_score) add(" AND scene_score <= ?", *f.max_score);
    if (f.min_flux) add(" AND flux_kg_h IS NOT NULL AND flux_kg_h >= ?", *f.min_flux);
    if (f.max_flux) add(" AND flux_kg_h IS NOT NULL AND flux_kg_h <= ?", *f.max_flux);
    if (f.satellite) add(" AND satellite = ?", *f.satellite);
    if (f.country) add(" AND country = ?", *f.country);
    if (f.status) add(" AND status = ?", std::string(status_name(*f.status)));
    if (f.site_id) add(" AND site_id = ?", *f.site_id);

    std::lock_guard lk(mu_);
    AlertPage page;
    {
        Stmt st(db_, "SELECT COUNT(*) FROM alerts" + where);
        for (std::size_t i = 0; i < binds.size(); ++i) binds[i](st, static_cast<int>(i + 1));
        st.step();
        page.total = static_cast<std::size_t>(st.integer(0));
    }
    Stmt st(db_, std::string("SELECT ") + kAlertCols + " FROM alerts" + where +
                     " ORDER BY scene_score DESC, timestamp DESC, alert_id ASC LIMIT ? OFFSET ?");
    int i = 1;
    for (auto& b : binds) b(st, i++);
    st.bind(i, f.limit).bind(i + 1, f.offset);
    while (st.step()) page.alerts.push_back(read_alert(st));
    return page;
}

std::vector<Alert> Store::all_alerts() const {
    std::lock_guard lk(mu_);
    Stmt st(db_, std::string("SELECT ") + kAlertCols + " FROM alerts ORDER BY alert_id");
    std::vector<Alert> out;
    while (st.step()) out.push_back(read_alert(st));
    return out;
}

Alert Store::transition(std::int64_t id, Status to, const std::string& reviewer, const std::string& note,
                        std::optional<std::int64_t> expected_version) {
    std::lock_guard lk(mu_);
    Txn t(db_);
    Alert cur;
    {
        Stmt st(db_, std::string("SELECT ") + kAlertCols + " FROM alerts WHERE alert_id=?");
        st.bind(1, id);
        if (!st.step()) throw NotFound("no alert " + std::to_string(id));
        cur = read_alert(st);
    }
    if (expected_version && *expected_version != cur.version)
        throw ConflictError("alert " + std::to_string(id) + " is at version " + std::to_string(cur.version));
    if (!transition_allowed(cur.status, to))
        throw TransitionError(std::string(status_name(cur.status)) + " -> " + std::string(status_name(to)) +
                              " is not allowed");
    const std::string ts = now();
    {
        Stmt st(db_,
                "UPDATE alerts SET status=?, note=?, version=version+1, updated_at=?, "
                "notified_at=CASE WHEN ?='notified' THEN ? ELSE notified_at END "
                "WHERE alert_id=? AND version=?");
        st.bind(1, status_name(to)).bind(2, note.empty() ? cur.note : note).bind(3, ts);
        st.bind(4, status_name(to)).bind(5, ts).bind(6, id).bind(7, cur.version);
        st.run();
        if (sqlite3_changes(db_) != 1) throw ConflictError("alert " + std::to_string(id) + " changed concurrently");
    }
    {
        Stmt st(db_, "INSERT INTO audit(alert_id, kind, reviewer, from_status, to_status, note, at) "
                     "VALUES(?,'transition',?,?,?,?,?)");
        st.bind(1, id).bind(2, reviewer).bind(3, status_name(cur.status)).bind(4, status_name(to));
        st.bind(5, note).bind(6, ts);
        st.run();
    }
    Alert out;
    {
        Stmt st(db_, std::string("SELECT ") + kAlertCols + " FROM alerts WHERE alert_id=?");
        st.bind(1, id);
        st.step();
        out = read_alert(st);
    }
    t.commit();
    return out;
}

Alert Store::update_flux(std::int64_t id, std::optional<double> flux, std::optional<double> uncertainty,
                         const std::string& reviewer) {
    std::lock_guard lk(mu_);
    Txn t(db_);
    const std::string ts = now();
    {
        Stmt st(db_, "UPDATE alerts SET flux_kg_h=?, uncertainty_kg_h=?, version=version+1, updated_at=? "
                     "WHERE alert_id=?");
        st.bind(1, flux).bind(2, uncertainty).bind(3, ts).bind(4, id);
        st.run();
        if (sqlite3_changes(db_) != 1) throw NotFound("no alert " + std::to_string(id));
    }
    Alert out;
    {
        Stmt st(db_, std::string("SELECT ") + kAlertCols + " FROM alerts WHERE alert_id=?");
        st.bind(1, id);
        st.step();
        out = read_alert(st);
    }
    {
        Stmt st(db_, "INSERT INTO audit(alert_id, kind, reviewer, from_status, to_status, note, at) "
                     "VALUES(?,'mask',?,?,?,?,?)");
        st.bind(1, id).bind(2, reviewer).bind(3, status_name(out.status)).bind(4, status_name(out.status));
        st.bind(5, "flux " + fmt_opt(flux)).bind(6, ts);
        st.run();
    }
    t.commit();
    return out;
}

std::vector<AuditEntry> Store::audit(std::optional<std::int64_t> alert_id) const {
    std::lock_guard lk(mu_);
    std::string sql = "SELECT audit_id, alert_id, kind, reviewer, from_status, to_status, note, at FROM audit";
    if (alert_id) sql += " WHERE alert_id=?";
    sql += " ORDER BY audit_id";
    Stmt st(db_, sql);
    if (alert_id) st.bind(1, *alert_id);
    std::vector<AuditEntry> out;
    while (st.step()) {
        AuditEntry e;
        e.audit_id = st.integer(0);
        e.alert_id = st.integer(1);
        e.kind = st.text(2);
        e.reviewer = st.text(3);
        e.from = parse_status(st.text(4));
        e.to = parse_status(st.text(5));
        e.note = st.text(6);
        e.at = st.text(7);
        out.push_back(std::move(e));
    }
    return out;
}

std::string Store::export_public(const std::string& from, const std::string& to) const {
    std::lock_guard lk(mu_);
    Stmt st(db_, std::string("SELECT ") + kAlertCols +
                     " FROM alerts WHERE status IN ('validated','notified') AND timestamp >= ? AND timestamp < ? "
                     "ORDER BY timestamp, alert_id");
    st.bind(1, from).bind(2, to);
    std::ostringstream os;
    os << "alert_id,site_id,scene_id,timestamp,satellite,country,scene_score,flux_kg_h,uncertainty_kg_h,status,"
          "notified_at\n";
    while (st.step()) {
        const Alert a = read_alert(st);
        os << a.alert_id << ',' << csv_field(a.site_id) << ',' << csv_field(a.scene_id) << ',' << a.timestamp << ','
           << a.satellite << ',' << csv_field(a.country) << ',' << fmt_opt(a.scene_score) << ','
           << fmt_opt(a.flux_kg_h) << ',' << fmt_opt(a.uncertainty_kg_h) << ',' << status_name(a.status) << ','
           << a.notified_at.value_or("") << '\n';
    }
    return os.str();
}

}  // namespace plume::alertd
