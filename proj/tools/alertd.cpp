// Alerting daemon: scheduled ingest plus the review HTTP API.

#include <CLI11.hpp>
#include <httplib.h>

#include <csignal>
#include <iostream>
#include <thread>

#include "common.hpp"
#include "plume/alertd/service.hpp"

namespace {

httplib::Server* g_server = nullptr;
std::atomic<bool> g_stop{false};

void on_signal(int) {
    g_stop = true;
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Methane alert daemon"};
    app.require_subcommand(1);
    std::string config_path = "alertd.json";
    app.add_option("--config", config_path, "configuration JSON")->capture_default_str();

    auto* serve = app.add_subcommand("serve", "run the HTTP API and the daily ingest schedule");
    bool no_schedule = false;
    serve->add_flag("--no-schedule", no_schedule, "serve the API only");

    auto* ingest = app.add_subcommand("ingest", "scan the scene source");
    bool once = false;
    std::string from, to;
    ingest->add_flag("--once", once, "run a single scan and exit")->required();
    ingest->add_option("--from", from, "window start (default: now minus the scan window)");
    ingest->add_option("--to", to, "window end, exclusive (default: now)");

    auto* exp = app.add_subcommand("export", "write the public CSV of validated alerts");
    std::string exp_from, exp_to;
    exp->add_option("--from", exp_from)->required();
    exp->add_option("--to", exp_to)->required();

    for (auto* sub : {serve, ingest, exp}) sub->add_option("--config", config_path, "configuration JSON");
    CLI11_PARSE(app, argc, argv);

    return tools::run_main([&] {
        using namespace plume;
        auto cfg = alertd::Config::load(config_path);
        alertd::Service svc(cfg);

        if (*ingest) {
            alertd::IngestReport rep;
            if (from.empty() && to.empty()) {
                rep = svc.ingest_once();
            } else {
                const auto now = std::chrono::time_point_cast<std::chrono::seconds>(std::chrono::system_clock::now());
                const auto t0 = from.empty() ? now - std::chrono::seconds(static_cast<long>(cfg.scan_window_days * 86400))
                                             : raster::parse_timestamp(from);
                const auto t1 = to.empty() ? now : raster::parse_timestamp(to);
                rep = svc.ingest(t0, t1);
            }
            std::cout << rep.to_json().dump(2) << '\n';
            return 0;
        }
        if (*exp) {
            std::cout << svc.store().export_public(raster::format_timestamp(raster::parse_timestamp(exp_from)),
                                                   raster::format_timestamp(raster::parse_timestamp(exp_to)));
            return 0;
        }

        httplib::Server server;
        svc.register_routes(server);
        g_server = &server;
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::thread scheduler;
        if (!no_schedule) scheduler = std::thread([&] { svc.run_scheduler(g_stop); });
        spdlog::info("alertd listening on {}:{}", cfg.host, cfg.port);
        const bool ok = server.listen(cfg.host, cfg.port);
        const bool signalled = g_stop.exchange(true);
        if (scheduler.joinable()) scheduler.join();
        if (!ok && !signalled) throw std::runtime_error("cannot listen on " + cfg.host + ":" + std::to_string(cfg.port));
        return 0;
    });
}
