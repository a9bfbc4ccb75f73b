#include <doctest.h>
#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <thread>

#include "alertd_fixture.hpp"
#include "helpers.hpp"
#include "plume/alertd/service.hpp"
#include "plume/detector/model.hpp"
#include "plume/errors.hpp"
#include "plume/quantify/quantify.hpp"
#include "plume/raster/geotiff.hpp"

using namespace plume;
using namespace plume::alertd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const rtlut::RtLut& shared_lut() {
    static const auto lut = rtlut::build_lut(rtlut::AbsorptionModel::load(rtlut::default_model_path()),
                                             rtlut::default_dch4_grid(), rtlut::default_amf_grid());
    return lut;
}

Clock ticking_clock() {
    auto t = std::make_shared<raster::Timestamp>(raster::parse_timestamp("2024-01-01T00:00:00Z"));
    return [t] { return *t += std::chrono::seconds(1); };
}

Alert make_alert(const std::string& scene, double score, std::string country, std::string satellite = "S2A",
                 std::optional<double> flux = std::nullopt, std::string ts = "2023-06-14T10:00:00Z") {
    Alert a;
    a.site_id = scene.substr(0, scene.find('/'));
    a.scene_id = scene;
    a.timestamp = std::move(ts);
    a.satellite = std::move(satellite);
    a.country = std::move(country);
    a.scene_score = score;
    a.flux_kg_h = flux;
    a.model_version = "test";
    return a;
}

// Walks an alert from New to `target` along legal edges.
void drive_to(Store& s, std::int64_t id, Status target) {
    const std::map<Status, std::vector<Status>> path = {
        {Status::New, {}},
        {Status::Inspecting, {Status::Inspecting}},
        {Status::Validated, {Status::Inspecting, Status::Validated}},
        {Status::Rejected, {Status::Inspecting, Status::Rejected}},
        {Status::Notified, {Status::Inspecting, Status::Validated, Status::Notified}},
    };
    for (Status st : path.at(target)) s.transition(id, st, "drive", "");
}

struct Deployment {
    testutil::TempDir dir{"alertd"};
    fixture::IngestDay day;
    Config cfg;

    Deployment() {
        day = fixture::write_ingest_day(dir.path() / "scenes", dir.path() / "sites.csv", shared_lut());
        cfg.data_root = dir.path() / "data";
        cfg.scene_root = dir.path() / "scenes";
        cfg.registry = dir.path() / "sites.csv";
        cfg.model = fs::path(PLUME_TEST_DATA_DIR) / "golden" / "model.json";
        shared_lut().save(dir.path() / "lut.json");
        cfg.lut = dir.path() / "lut.json";
    }
};

std::vector<json> alert_rows(Store& s) {
    std::vector<json> rows;
    for (const auto& a : s.all_alerts()) {
        json j = a.to_json();
        j.erase("created_at");
        j.erase("updated_at");
        rows.push_back(j);
    }
    return rows;
}

}  // namespace

TEST_CASE("status machine") {
    CHECK(transition_allowed(Status::New, Status::Inspecting));
    CHECK(transition_allowed(Status::Inspecting, Status::Validated));
    CHECK(transition_allowed(Status::Inspecting, Status::Rejected));
    CHECK(transition_allowed(Status::Validated, Status::Notified));
    CHECK_FALSE(transition_allowed(Status::New, Status::Notified));
    CHECK_FALSE(transition_allowed(Status::Rejected, Status::Notified));
    for (Status s : kAllStatuses) CHECK(parse_status(status_name(s)) == s);
    CHECK_THROWS_AS(parse_status("closed"), BadRequest);

    // reachability closure from rejected
    std::set<Status> seen = {Status::Rejected};
    std::vector<Status> frontier = {Status::Rejected};
    while (!frontier.empty()) {
        const Status s = frontier.back();
        frontier.pop_back();
        for (Status t : kAllStatuses)
            if (transition_allowed(s, t) && seen.insert(t).second) frontier.push_back(t);
    }
    CHECK(seen == std::set<Status>{Status::Rejected});
}

TEST_CASE("store enforces every transition pair") {
    testutil::TempDir dir("store_fsm");
    Store store(dir.path() / "a.db", ticking_clock());
    std::size_t successes = 0, k = 0;
    for (Status from : kAllStatuses)
        for (Status to : kAllStatuses) {
            const auto a = store.create_alert(make_alert("s/" + std::to_string(k++), 0.5, "X"));
            drive_to(store, a.alert_id, from);
            successes += store.audit(a.alert_id).size();
            const auto before = store.get_alert(a.alert_id);
            CHECK(before.status == from);
            if (transition_allowed(from, to)) {
                const auto after = store.transition(a.alert_id, to, "alice", "ok");
                ++successes;
                CHECK(after.status == to);
                CHECK(after.version == before.version + 1);
                CHECK(after.updated_at >= before.updated_at);
                CHECK(after.updated_at >= after.created_at);
                CHECK(after.notified_at.has_value() == (to == Status::Notified));
            } else {
                CHECK_THROWS_AS(store.transition(a.alert_id, to, "alice", "bad"), TransitionError);
                const auto same = store.get_alert(a.alert_id);
                CHECK(same.status == from);
                CHECK(same.version == before.version);
            }
        }
    CHECK(store.audit().size() == successes);
    std::size_t by_alice = 0;
    for (const auto& e : store.audit()) {
        by_alice += e.reviewer == "alice";
        CHECK(e.kind == "transition");
        CHECK(transition_allowed(e.from, e.to));
    }
    CHECK(by_alice == 4);
    CHECK_THROWS_AS(store.transition(99999, Status::Inspecting, "a", ""), NotFound);
    CHECK_THROWS_AS(store.get_alert(99999), NotFound);
}

TEST_CASE("happy path and illegal shortcut") {
    testutil::TempDir dir("store_happy");
    Store store(dir.path() / "a.db", ticking_clock());
    const auto a = store.create_alert(make_alert("s/1", 0.9, "X"));
    CHECK_THROWS_AS(store.transition(a.alert_id, Status::Notified, "bob", ""), TransitionError);
    store.transition(a.alert_id, Status::Inspecting, "bob", "looking");
    store.transition(a.alert_id, Status::Validated, "bob", "confirmed");
    const auto n = store.transition(a.alert_id, Status::Notified, "carol", "sent");
    CHECK(n.status == Status::Notified);
    CHECK(n.note == "sent");
    CHECK(store.audit(a.alert_id).size() == 3);
}

TEST_CASE("two writers on one alert") {
    testutil::TempDir dir("store_race");
    Store first(dir.path() / "a.db");
    Store second(dir.path() / "a.db");
    const auto a = first.create_alert(make_alert("s/1", 0.7, "X"));
    const auto seen_by_first = first.get_alert(a.alert_id);
    const auto seen_by_second = second.get_alert(a.alert_id);
    CHECK(seen_by_first.version == seen_by_second.version);

    first.transition(a.alert_id, Status::Inspecting, "first", "", seen_by_first.version);
    CHECK_THROWS_AS(second.transition(a.alert_id, Status::Inspecting, "second", "", seen_by_second.version),
                    ConflictError);
    CHECK(second.audit(a.alert_id).size() == 1);

    // racing threads with the same stale version
    const auto cur = first.get_alert(a.alert_id);
    std::atomic<int> wins{0}, conflicts{0};
    auto race = [&](Store& s, Status to) {
        try {
            s.transition(a.alert_id, to, "t", "", cur.version);
            ++wins;
        } catch (const ConflictError&) {
            ++conflicts;
        }
    };
    std::thread t1(race, std::ref(first), Status::Validated);
    std::thread t2(race, std::ref(second), Status::Rejected);
    t1.join();
    t2.join();
    CHECK(wins == 1);
    CHECK(conflicts == 1);
    CHECK(first.audit(a.alert_id).size() == 2);
}

TEST_CASE("alert listing") {
    testutil::TempDir dir("store_list");
    Store store(dir.path() / "a.db", ticking_clock());
    struct Row {
        std::string country;
        double score;
        std::string sat;
        std::optional<double> flux;
        std::string ts;
    };
    const std::vector<Row> rows = {
        {"Turkmenistan", 0.95, "S2A", 3000.0, "2023-06-10T10:00:00Z"},
        {"Turkmenistan", 0.80, "L8", 1200.0, "2023-06-11T10:00:00Z"},
        {"Turkmenistan", 0.79, "S2B", std::nullopt, "2023-06-12T10:00:00Z"},
        {"Algeria", 0.99, "S2A", 5000.0, "2023-06-10T10:00:00Z"},
        {"Turkmenistan", 0.80, "S2A", 800.0, "2023-06-13T10:00:00Z"},
        {"Algeria", 0.10, "L9", std::nullopt, "2023-06-14T10:00:00Z"},
        {"Turkmenistan", 0.20, "S2B", 400.0, "2023-06-09T10:00:00Z"},
    };
    for (std::size_t i = 0; i < rows.size(); ++i)
        store.create_alert(make_alert("site" + std::to_string(i) + "/x", rows[i].score, rows[i].country, rows[i].sat,
                                      rows[i].flux, rows[i].ts));

    SUBCASE("no filters: score descending then newest first") {
        const auto page = store.list_alerts({});
        CHECK(page.total == rows.size());
        REQUIRE(page.alerts.size() == rows.size());
        for (std::size_t i = 1; i < page.alerts.size(); ++i) {
            const auto& p = page.alerts[i - 1];
            const auto& q = page.alerts[i];
            CHECK((p.scene_score > q.scene_score || (p.scene_score == q.scene_score && p.timestamp >= q.timestamp)));
        }
        CHECK(page.alerts[1].scene_score == 0.95);
        CHECK(page.alerts[2].timestamp == "2023-06-13T10:00:00Z");
    }
    SUBCASE("country and score") {
        AlertFilter f;
        f.country = "Turkmenistan";
        f.min_score = 0.8;
        std::set<std::string> want, got;
        for (std::size_t i = 0; i < rows.size(); ++i)
            if (rows[i].country == "Turkmenistan" && rows[i].score >= 0.8)
                want.insert("site" + std::to_string(i) + "/x");
        const auto page = store.list_alerts(f);
        for (const auto& a : page.alerts) got.insert(a.scene_id);
        CHECK(got == want);
        CHECK(page.total == want.size());
    }
    SUBCASE("flux and satellite") {
        AlertFilter f;
        f.min_flux = 1000.0;
        f.satellite = "S2A";
        const auto page = store.list_alerts(f);
        CHECK(page.total == 2);
    }
    SUBCASE("status") {
        const auto first = store.list_alerts({}).alerts[0];
        store.transition(first.alert_id, Status::Inspecting, "r", "");
        AlertFilter f;
        f.status = Status::Inspecting;
        const auto page = store.list_alerts(f);
        REQUIRE(page.total == 1);
        CHECK(page.alerts[0].alert_id == first.alert_id);
    }
    SUBCASE("paging") {
        AlertFilter f;
        f.limit = 3;
        f.offset = 3;
        const auto page = store.list_alerts(f);
        CHECK(page.total == rows.size());
        CHECK(page.alerts.size() == 3);
        CHECK(page.alerts[0].scene_id == store.list_alerts({}).alerts[3].scene_id);
        f.offset = 50;
        const auto past = store.list_alerts(f);
        CHECK(past.alerts.empty());
        CHECK(past.total == rows.size());
    }
    SUBCASE("malformed filters") {
        AlertFilter f;
        f.min_score = 0.9;
        f.max_score = 0.1;
        CHECK_THROWS_AS(store.list_alerts(f), BadRequest);
        CHECK_THROWS_AS(parse_filter({{"min_score", "high"}}), BadRequest);
        CHECK_THROWS_AS(parse_filter({{"limit", "0"}}), BadRequest);
        CHECK_THROWS_AS(parse_filter({{"status", "done"}}), BadRequest);
        CHECK_THROWS_AS(parse_filter({{"colour", "red"}}), BadRequest);
        const auto ok = parse_filter({{"country", "Algeria"}, {"min_flux", "100"}, {"limit", "5"}});
        CHECK(ok.country == "Algeria");
        CHECK(ok.min_flux == 100.0);
        CHECK(ok.limit == 5);
    }
}

TEST_CASE("public export") {
    testutil::TempDir dir("store_export");
    Store store(dir.path() / "a.db", ticking_clock());
    const std::string header =
        "alert_id,site_id,scene_id,timestamp,satellite,country,scene_score,flux_kg_h,uncertainty_kg_h,status,"
        "notified_at\n";
    CHECK(store.export_public("2023-01-01T00:00:00Z", "2024-01-01T00:00:00Z") == header);

    std::map<std::int64_t, Status> final_status;
    const std::vector<Status> targets = {Status::New,      Status::Validated, Status::Rejected, Status::Notified,
                                         Status::Validated, Status::Inspecting, Status::Notified};
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const auto a = store.create_alert(
            make_alert("p" + std::to_string(i) + "/x", 0.5, "X", "S2A", 100.0 * i,
                       "2023-0" + std::to_string(1 + i) + "-15T10:00:00Z"));
        drive_to(store, a.alert_id, targets[i]);
        final_status[a.alert_id] = targets[i];
    }
    const auto csv = store.export_public("2023-01-01T00:00:00Z", "2023-07-01T00:00:00Z");
    std::set<std::int64_t> got, want;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    CHECK(line + "\n" == header);
    while (std::getline(in, line)) {
        const auto id = std::stoll(line.substr(0, line.find(',')));
        got.insert(id);
        const auto status = final_status.at(id);
        CHECK(line.find(status_name(status)) != std::string::npos);
        // notified rows carry the notification date in the last column
        CHECK((line.back() != ',') == (status == Status::Notified));
    }
    for (const auto& [id, st] : final_status) {
        const auto a = store.get_alert(id);
        if ((st == Status::Validated || st == Status::Notified) && a.timestamp < "2023-07-01T00:00:00Z") want.insert(id);
    }
    CHECK(got == want);
    CHECK(want.size() == 3);
}

TEST_CASE("plume mask keeps blobs of at least min_blob_px") {
    raster::Raster prob(6, 6, 0.1);
    prob(0, 0) = 0.9;  // single pixel
    prob(2, 2) = prob(2, 3) = prob(3, 2) = 0.7;
    prob(5, 4) = prob(5, 5) = 0.5;
    const auto m = plume_mask(prob, 0.5, 3);
    CHECK(raster::count_true(m) == 3);
    CHECK(m(2, 2));
    CHECK_FALSE(m(0, 0));
    CHECK(raster::count_true(plume_mask(prob, 0.5, 1)) == 6);
    CHECK(detector::scene_score(prob, 0.5, 3) == 0.7);
}

TEST_CASE("schedule and backoff") {
    const Schedule s = Schedule::parse("06:30");
    CHECK(raster::format_timestamp(s.next_run_after(raster::parse_timestamp("2024-03-01T05:00:00Z"))) ==
          "2024-03-01T06:30:00Z");
    CHECK(raster::format_timestamp(s.next_run_after(raster::parse_timestamp("2024-03-01T06:30:00Z"))) ==
          "2024-03-02T06:30:00Z");
    CHECK(raster::format_timestamp(s.next_run_after(raster::parse_timestamp("2024-12-31T23:59:59Z"))) ==
          "2025-01-01T06:30:00Z");
    CHECK_THROWS_AS(Schedule::parse("6:30"), BadRequest);
    CHECK_THROWS_AS(Schedule::parse("24:00"), BadRequest);
    CHECK(retry_delay(0).count() == 60);
    CHECK(retry_delay(1).count() == 120);
    CHECK(retry_delay(5).count() == 1920);
    CHECK(retry_delay(6).count() == 3600);
    CHECK(retry_delay(40).count() == 3600);
}

TEST_CASE("config file and data root override") {
    testutil::TempDir dir("alertd_cfg");
    {
        std::ofstream(dir.path() / "alertd.json")
            << R"({"data_root": "state", "scene_root": "/srv/scenes", "model": "m/model.json", "port": 9123,
                   "schedule_utc": "07:15"})";
    }
    ::unsetenv("ALERTD_DATA_ROOT");
    auto c = Config::load(dir.path() / "alertd.json");
    CHECK(c.data_root == fs::absolute(dir.path()) / "state");
    CHECK(c.scene_root == "/srv/scenes");
    CHECK(c.model == fs::absolute(dir.path()) / "m/model.json");
    CHECK(c.port == 9123);
    CHECK(c.schedule.hour == 7);
    CHECK(c.schedule.minute == 15);
    ::setenv("ALERTD_DATA_ROOT", "/tmp/elsewhere", 1);
    c = Config::load(dir.path() / "alertd.json");
    CHECK(c.data_root == "/tmp/elsewhere");
    ::unsetenv("ALERTD_DATA_ROOT");
    CHECK_THROWS_AS(Config::load(dir.path() / "missing.json"), FormatError);
}

TEST_CASE("fixture ingest day") {
    Deployment d;
    Service svc(d.cfg);
    auto& store = svc.store();
    REQUIRE(store.sites().size() == 3);

    SUBCASE("two alerts and one validity rejection, idempotently") {
        const auto rep = svc.ingest(d.day.day_start, d.day.day_end);
        CHECK(rep.alerts.size() == 2);
        REQUIRE(rep.rejected.size() == 1);
        CHECK(rep.rejected[0] == d.day.cloudy_scene);
        CHECK(rep.failed.empty());
        CHECK(store.all_alerts().size() == 2);
        CHECK(store.alert_for_scene(d.day.plume_scene).has_value());
        CHECK(store.alert_for_scene(d.day.offshore_scene).has_value());
        CHECK_FALSE(store.alert_for_scene(d.day.cloudy_scene).has_value());

        const auto cloudy = store.scene(d.day.cloudy_scene);
        REQUIRE(cloudy.has_value());
        CHECK(cloudy->state == SceneState::Rejected);
        CHECK_FALSE(cloudy->usable);
        CHECK(cloudy->fraction_cloud > 0.5);

        CHECK(store.prediction(d.day.plume_scene)->retrieval == "MBMP");
        CHECK_FALSE(store.prediction(d.day.plume_scene)->reference_id.empty());
        CHECK(store.prediction(d.day.offshore_scene)->retrieval == "MBSP");
        CHECK(store.watermark("tm_01") == raster::format_timestamp(d.day.day_start + std::chrono::minutes(620)));

        for (const auto& a : store.all_alerts()) {
            CHECK(a.status == Status::New);
            CHECK(a.model_version == "golden");
            CHECK(recompute_score(store, a.scene_id) == a.scene_score);
            const auto pred = store.prediction(a.scene_id);
            CHECK(fs::exists(fs::path(pred->product_dir) / "prediction.json"));
            CHECK(fs::exists(fs::path(pred->product_dir) / "dch4.tif"));
        }

        const auto before = alert_rows(store);
        const auto again = svc.ingest(d.day.day_start, d.day.day_end);
        CHECK(again.alerts.empty());
        CHECK(again.skipped == 3);
        CHECK(alert_rows(store) == before);
    }
    SUBCASE("empty window") {
        const auto rep = svc.ingest(d.day.day_end, d.day.day_end + std::chrono::hours(12));
        CHECK(rep.alerts.empty());
        CHECK(store.all_alerts().empty());
        for (const auto& s : store.sites()) CHECK_FALSE(store.watermark(s.site_id).has_value());
    }
    SUBCASE("a broken bundle is isolated") {
        const fs::path bad = d.cfg.scene_root / "tm_01" / "20230614T120000";
        fs::create_directories(bad);
        std::ofstream(bad / "meta.json") << "{ not json";
        const auto rep = svc.ingest(d.day.day_start, d.day.day_end);
        CHECK(rep.alerts.size() == 2);
        REQUIRE(rep.failed.size() == 1);
        CHECK(rep.failed[0] == "tm_01/20230614T120000");
        const auto rec = store.scene("tm_01/20230614T120000");
        REQUIRE(rec.has_value());
        CHECK(rec->state == SceneState::Failed);
        CHECK_FALSE(rec->error.empty());
    }
}

TEST_CASE("unreachable scene source defers ingest") {
    Deployment d;
    d.cfg.scene_root = d.dir.path() / "not-mounted";
    Service svc(d.cfg);
    CHECK_THROWS_AS(svc.ingest(d.day.day_start, d.day.day_end), IngestDeferred);
    CHECK(svc.store().all_alerts().empty());
}

TEST_CASE("png codec round trip") {
    Image img{3, 5, {}};
    for (int i = 0; i < 3 * 5 * 4; ++i) img.rgba.push_back(static_cast<std::uint8_t>(i * 7));
    const auto png = encode_png(img);
    CHECK(png.substr(1, 3) == "PNG");
    const auto back = decode_png(png);
    CHECK(back.rows == 3);
    CHECK(back.cols == 5);
    CHECK(back.rgba == img.rgba);
    CHECK_THROWS_AS(decode_png("garbage"), FormatError);
    CHECK_THROWS_AS(decode_png(png.substr(0, 40)), FormatError);
}

TEST_CASE("HTTP API") {
    Deployment d;
    Service svc(d.cfg);
    svc.ingest(d.day.day_start, d.day.day_end);

    httplib::Server server;
    svc.register_routes(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client cli("127.0.0.1", port);

    auto get_json = [&](const std::string& path, int want_status = 200) {
        const auto res = cli.Get(path);
        REQUIRE(res);
        CHECK(res->status == want_status);
        return json::parse(res->body);
    };

    const auto list = get_json("/alerts");
    CHECK(list["total"] == 2);
    REQUIRE(list["alerts"].size() == 2);
    CHECK(list["alerts"][0]["scene_score"].get<double>() >= list["alerts"][1]["scene_score"].get<double>());
    const auto id = list["alerts"][0]["alert_id"].get<std::int64_t>();

    CHECK(get_json("/alerts?country=Turkmenistan")["total"] == 1);
    CHECK(get_json("/alerts?country=Norway&satellite=S2A")["total"] == 1);
    CHECK(get_json("/alerts?offset=10")["alerts"].empty());
    CHECK(get_json("/alerts?min_score=abc", 400)["error"] == "BadRequest");
    CHECK(get_json("/alerts?min_score=0.9&max_score=0.1", 400)["error"] == "BadRequest");
    CHECK(get_json("/alerts/424242", 404)["error"] == "NotFound");

    const auto one = get_json("/alerts/" + std::to_string(id));
    CHECK(one["alert_id"] == id);
    CHECK(one.contains("prediction_ref"));
    CHECK(one.contains("pixel_threshold"));

    auto post = [&](const std::string& path, const json& body, int want_status) {
        const auto res = cli.Post(path, body.dump(), "application/json");
        REQUIRE(res);
        CHECK(res->status == want_status);
        return json::parse(res->body);
    };
    const std::string tr = "/alerts/" + std::to_string(id) + "/transition";
    CHECK(post(tr, {{"status", "notified"}, {"reviewer", "ana"}}, 422)["error"] == "TransitionError");
    const auto inspecting = post(tr, {{"status", "inspecting"}, {"reviewer", "ana"}, {"version", 1}}, 200);
    CHECK(inspecting["status"] == "inspecting");
    CHECK(post(tr, {{"status", "validated"}, {"reviewer", "ben"}, {"version", 1}}, 409)["error"] == "ConflictError");
    CHECK(post(tr, {{"status", "sideways"}}, 400)["error"] == "BadRequest");
    CHECK(post(tr, {{"reviewer", "ana"}}, 400)["error"] == "BadRequest");
    post(tr, {{"status", "validated"}, {"reviewer", "ana"}, {"note", "visible plume"}}, 200);
    CHECK(get_json("/alerts/" + std::to_string(id) + "/audit").size() == 2);

    const auto scene_id = one["scene_id"].get<std::string>();
    for (std::string layer : {"rgb", "mbmp", "dch4", "prob", "mask"}) {
        const auto res = cli.Get("/scenes/" + scene_id + "/layers/" + layer);
        REQUIRE(res);
        CHECK(res->status == 200);
        CHECK(res->get_header_value("Content-Type") == "image/png");
        const auto img = decode_png(res->body);
        CHECK(img.rows == fixture::kSize);
        CHECK(img.cols == fixture::kSize);
    }
    CHECK(cli.Get("/scenes/" + scene_id + "/layers/ndvi")->status == 400);
    CHECK(cli.Get("/scenes/nowhere/1/layers/rgb")->status == 404);

    SUBCASE("mask override re-quantifies") {
        const int n = fixture::kSize;
        json mask = json::array();
        for (int r = 0; r < n; ++r)
            for (int c = 0; c < n; ++c) mask.push_back(r >= 28 && r < 36 && c >= 30 && c < 50 ? 1 : 0);
        const std::string mp = "/alerts/" + std::to_string(id) + "/mask";
        const auto updated = post(mp, {{"rows", n}, {"cols", n}, {"mask", mask}, {"reviewer", "ana"}}, 200);
        const auto pred = svc.store().prediction(scene_id);
        const auto dch4 = raster::read_geotiff(fs::path(pred->product_dir) / "dch4.tif").grid;
        raster::Mask m(n, n, 0);
        for (int i = 0; i < n * n; ++i) m[i] = mask[i].get<int>();
        const auto want = quantify::flux(dch4, m, pred->wind);
        REQUIRE(updated["flux_kg_h"].is_number());
        CHECK(updated["flux_kg_h"].get<double>() == doctest::Approx(want.flux_kg_h).epsilon(1e-12));
        CHECK(updated["version"].get<int>() == 4);
        const auto img = decode_png(cli.Get("/scenes/" + scene_id + "/layers/mask")->body);
        CHECK(img.rgba[4 * (30 * n + 40) + 3] == 255);
        CHECK(img.rgba[4 * (5 * n + 5) + 3] == 0);
        CHECK(post(mp, {{"rows", 2}, {"cols", 2}, {"mask", {1, 0, 0, 1}}}, 400)["error"] == "BadRequest");
    }
    SUBCASE("sites and export") {
        const auto sites = get_json("/sites");
        CHECK(sites.size() == 3);
        const auto csv = cli.Get("/export?from=2023-06-01&to=2023-07-01");
        REQUIRE(csv);
        CHECK(csv->status == 200);
        CHECK(csv->body.find(scene_id) != std::string::npos);
        CHECK(std::count(csv->body.begin(), csv->body.end(), '\n') == 2);
        CHECK(cli.Get("/export?from=yesterday&to=2023-07-01")->status == 400);
        CHECK(cli.Get("/export?to=2023-07-01")->status == 400);
    }

    server.stop();
    th.join();
}
