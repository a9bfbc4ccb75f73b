#include "plume/alertd/service.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <thread>

#include "plume/errors.hpp"
#include "plume/raster/registry.hpp"

namespace plume::alertd {

namespace fs = std::filesystem;
using nlohmann::json;
using raster::Timestamp;

namespace {

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

double parse_number(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out))
        throw BadRequest("parameter '" + key + "' is not a number: '" + v + "'");
    return out;
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size())
        throw BadRequest("parameter '" + key + "' is not an integer: '" + v + "'");
    return out;
}

std::string parse_window_bound(const std::string& key, const std::string& v) {
    if (v.empty()) throw BadRequest("parameter '" + key + "' is required");
    try {
        return raster::format_timestamp(raster::parse_timestamp(v.size() == 10 ? v + "T00:00:00Z" : v));
    } catch (const Error&) {
        throw BadRequest("parameter '" + key + "' is not a timestamp: '" + v + "'");
    }
}

Timestamp now_seconds() {
    return std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
}

void send_error(httplib::Response& res, int code, const std::string& kind, const std::string& msg) {
    res.status = code;
    res.set_content(json{{"error", kind}, {"message", msg}}.dump(), "application/json");
}

template <class F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const BadRequest& e) {
            send_error(res, 400, "BadRequest", e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "BadRequest", e.what());
        } catch (const NotFound& e) {
            send_error(res, 404, "NotFound", e.what());
        } catch (const ConflictError& e) {
            send_error(res, 409, "ConflictError", e.what());
        } catch (const TransitionError& e) {
            send_error(res, 422, "TransitionError", e.what());
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_error(res, 500, "InternalError", e.what());
        }
    };
}

std::int64_t parse_id(const std::string& s) {
    std::int64_t id = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw BadRequest("bad alert id '" + s + "'");
    return id;
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) throw BadRequest("request body is required");
    json j = json::parse(req.body);
    if (!j.is_object()) throw BadRequest("request body must be a JSON object");
    return j;
}

}  // namespace

AlertFilter parse_filter(const std::multimap<std::string, std::string>& params) {
    AlertFilter f;
    for (const auto& [k, v] : params) {
        if (k == "min_score") f.min_score = parse_number(k, v);
        else if (k == "max_score") f.max_score = parse_number(k, v);
        else if (k == "min_flux") f.min_flux = parse_number(k, v);
        else if (k == "max_flux") f.max_flux = parse_number(k, v);
        else if (k == "satellite") f.satellite = v;
        else if (k == "country") f.country = v;
        else if (k == "status") f.status = parse_status(v);
        else if (k == "site_id") f.site_id = v;
        else if (k == "limit") f.limit = parse_int(k, v);
        else if (k == "offset") f.offset = parse_int(k, v);
        else throw BadRequest("unknown parameter '" + k + "'");
    }
    f.validate();
    return f;
}

Config Config::from_json(const json& j, const fs::path& base) {
    Config c;
    c.data_root = resolve(base, j.value("data_root", c.data_root.string()));
    c.scene_root = resolve(base, j.value("scene_root", c.scene_root.string()));
    c.model = resolve(base, j.value("model", std::string()));
    c.lut = resolve(base, j.value("lut", std::string()));
    c.registry = resolve(base, j.value("registry", std::string()));
    c.host = j.value("host", c.host);
    c.port = j.value("port", c.port);
    c.schedule = Schedule::parse(j.value("schedule_utc", std::string("06:30")));
    c.scan_window_days = j.value("scan_window_days", c.scan_window_days);
    c.lookback_days = j.value("lookback_days", c.lookback_days);
    if (c.scan_window_days <= 0) throw BadRequest("scan_window_days must be positive");
    if (const char* env = std::getenv("ALERTD_DATA_ROOT"); env && *env) c.data_root = env;
    return c;
}

Config Config::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot read config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError("config " + path.string() + ": " + e.what());
    }
    return from_json(j, fs::absolute(path).parent_path());
}

Service::Service(Config cfg, Clock clock) : cfg_(std::move(cfg)), clock_(std::move(clock)) {
    if (!clock_) clock_ = now_seconds;
    store_ = std::make_unique<Store>(cfg_.db_path(), clock_);
    source_ = std::make_unique<DirectorySceneSource>(cfg_.scene_root);
    if (!cfg_.registry.empty()) {
        auto sites = raster::load_site_registry(cfg_.registry);
        // keep banks assigned by earlier runs
        for (auto& s : sites)
            if (!s.film_bank_id)
                if (const auto prev = store_->site(s.site_id)) s.film_bank_id = prev->film_bank_id;
        store_->upsert_sites(sites);
    }
}

void Service::ensure_models() {
    if (!model_) {
        if (cfg_.model.empty()) throw Error("no model checkpoint configured");
        model_ = std::make_unique<detector::DetectorModel>(detector::load_checkpoint(cfg_.model));
        spdlog::info("alertd: loaded model {} from {}", model_->version, cfg_.model.string());
    }
    if (!lut_) {
        if (!cfg_.lut.empty())
            lut_ = std::make_unique<rtlut::RtLut>(rtlut::RtLut::load(cfg_.lut));
        else
            lut_ = std::make_unique<rtlut::RtLut>(
                rtlut::build_lut(rtlut::AbsorptionModel::load(rtlut::default_model_path()),
                                 rtlut::default_dch4_grid(), rtlut::default_amf_grid()));
    }
}

IngestReport Service::ingest(Timestamp from, Timestamp to) {
    std::lock_guard lk(ingest_mu_);
    ensure_models();
    IngestOptions opt;
    opt.lookback_days = cfg_.lookback_days;
    opt.product_root = cfg_.product_root();
    IngestContext ctx{*store_, *source_, *model_, *lut_, opt};
    return run_ingest(ctx, from, to);
}

IngestReport Service::ingest_once() {
    const Timestamp now = clock_();
    const auto window = std::chrono::seconds(static_cast<long>(cfg_.scan_window_days * 86400.0));
    return ingest(now - window, now + std::chrono::seconds(1));
}

void Service::run_scheduler(const std::atomic<bool>& stop) {
    auto sleep_until = [&](Timestamp t) {
        while (!stop && now_seconds() < t) std::this_thread::sleep_for(std::chrono::milliseconds(200));
    };
    while (!stop) {
        const Timestamp next = cfg_.schedule.next_run_after(now_seconds());
        spdlog::info("alertd: next ingest at {}", raster::format_timestamp(next));
        sleep_until(next);
        for (int attempt = 0; !stop; ++attempt) {
            try {
                const auto rep = ingest_once();
                spdlog::info("alertd: ingest done, {} alerts, {} rejected, {} failed", rep.alerts.size(),
                             rep.rejected.size(), rep.failed.size());
                break;
            } catch (const IngestDeferred& e) {
                const auto delay = retry_delay(attempt);
                spdlog::warn("alertd: ingest deferred ({}), retrying in {} s", e.what(), delay.count());
                const Timestamp retry_at = now_seconds() + delay;
                if (retry_at >= cfg_.schedule.next_run_after(next)) break;
                sleep_until(retry_at);
            } catch (const std::exception& e) {
                spdlog::error("alertd: ingest failed: {}", e.what());
                break;
            }
        }
    }
}

void Service::register_routes(httplib::Server& server) {
    server.Get("/alerts", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto page = store_->list_alerts(parse_filter(req.params));
                   res.set_content(page.to_json().dump(), "application/json");
               }));
    server.Get(R"(/alerts/(\d+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto a = store_->get_alert(parse_id(req.matches[1]));
                   json j = a.to_json();
                   if (const auto p = store_->prediction(a.scene_id)) {
                       j["retrieval"] = p->retrieval;
                       j["reference_id"] = p->reference_id;
                       j["film_bank"] = p->film_bank;
                       j["pixel_threshold"] = p->pixel_threshold;
                       j["min_blob_px"] = p->min_blob_px;
                       j["flux"] = p->flux;
                   }
                   res.set_content(j.dump(), "application/json");
               }));
    server.Get(R"(/alerts/(\d+)/audit)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto id = parse_id(req.matches[1]);
                   store_->get_alert(id);
                   json arr = json::array();
                   for (const auto& e : store_->audit(id))
                       arr.push_back({{"audit_id", e.audit_id}, {"kind", e.kind}, {"reviewer", e.reviewer},
                                      {"from", status_name(e.from)}, {"to", status_name(e.to)},
                                      {"note", e.note}, {"at", e.at}});
                   res.set_content(arr.dump(), "application/json");
               }));
    server.Post(R"(/alerts/(\d+)/transition)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                    const json body = parse_body(req);
                    if (!body.contains("status")) throw BadRequest("'status' is required");
                    std::optional<std::int64_t> version;
                    if (body.contains("version")) version = body.at("version").get<std::int64_t>();
                    const auto a = store_->transition(parse_id(req.matches[1]),
                                                      parse_status(body.at("status").get<std::string>()),
                                                      body.value("reviewer", std::string("anonymous")),
                                                      body.value("note", std::string()), version);
                    res.set_content(a.to_json().dump(), "application/json");
                }));
    server.Post(R"(/alerts/(\d+)/mask)", guarded([this](const httplib::Request& req, httplib::Response& res) {
                    const json body = parse_body(req);
                    const int rows = body.at("rows").get<int>();
                    const int cols = body.at("cols").get<int>();
                    const auto& flat = body.at("mask");
                    if (rows <= 0 || cols <= 0 || !flat.is_array() ||
                        flat.size() != static_cast<std::size_t>(rows) * cols)
                        throw BadRequest("'mask' must hold rows * cols values");
                    raster::Mask m(rows, cols, 0);
                    for (std::size_t i = 0; i < flat.size(); ++i) m[i] = flat[i].get<int>() != 0;
                    const auto a = override_mask(*store_, parse_id(req.matches[1]), m,
                                                 body.value("reviewer", std::string("anonymous")));
                    res.set_content(a.to_json().dump(), "application/json");
                }));
    server.Get(R"(/scenes/(.+)/layers/([A-Za-z0-9_]+))",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto img = render_layer(*store_, req.matches[1], std::string(req.matches[2]));
                   res.set_content(encode_png(img), "image/png");
               }));
    server.Get("/sites", guarded([this](const httplib::Request&, httplib::Response& res) {
                   json arr = json::array();
                   for (const auto& s : store_->sites()) {
                       const auto wm = store_->watermark(s.site_id);
                       arr.push_back({{"site_id", s.site_id},
                                      {"lon", s.lon},
                                      {"lat", s.lat},
                                      {"country", s.country},
                                      {"sector", raster::sector_name(s.sector)},
                                      {"offshore", s.offshore},
                                      {"active", s.active},
                                      {"watermark", wm ? json(*wm) : json(nullptr)}});
                   }
                   res.set_content(arr.dump(), "application/json");
               }));
    server.Get("/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
                   const auto from = parse_window_bound("from", req.get_param_value("from"));
                   const auto to = parse_window_bound("to", req.get_param_value("to"));
                   if (to < from) throw BadRequest("'to' precedes 'from'");
                   res.set_content(store_->export_public(from, to), "text/csv");
               }));
}

}  // namespace plume::alertd
