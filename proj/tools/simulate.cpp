// Injects a library plume into a scene bundle, rotated to the scene's wind.

#include <CLI11.hpp>

#include "common.hpp"
#include "plume/simulator/simulator.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Inject a plume into a scene bundle"};
    std::string scene_path, plume_id, library, lut_path, out;
    bool keep_direction = false;
    app.add_option("--scene", scene_path, "input scene bundle")->required();
    app.add_option("--plume", plume_id, "plume id, or a plume directory")->required();
    app.add_option("--library", library, "plume library directory (for ids)");
    app.add_option("--lut", lut_path, "look-up table JSON");
    app.add_option("--out", out, "output scene bundle")->required();
    app.add_flag("--keep-direction", keep_direction, "do not rotate the plume to the scene wind");
    CLI11_PARSE(app, argc, argv);

    return tools::run_main([&] {
        namespace fs = std::filesystem;
        using namespace plume;
        fs::path dir = plume_id;
        if (!fs::is_directory(dir)) {
            if (library.empty()) throw std::invalid_argument("--library is required when --plume is an id");
            dir = fs::path(library) / ("plume_" + plume_id);
        }
        auto plume = simulator::load_plume(dir);
        const auto scene = raster::load_scene(scene_path);
        const simulator::SimulationPolicy policy;
        if (std::abs(plume.wind.speed() - scene.wind.speed()) > policy.wind_tolerance)
            spdlog::warn("plume wind {:.2f} m/s differs from scene wind {:.2f} m/s by more than {} m/s",
                         plume.wind.speed(), scene.wind.speed(), policy.wind_tolerance);
        if (!keep_direction) plume = simulator::rotate_to_wind(plume, scene.wind);
        const auto lut = tools::load_or_build_lut(lut_path);
        const auto injected = simulator::inject_plume(scene, plume, lut);
        raster::save_scene(injected, out);
        spdlog::info("injected plume {} ({:.0f} kg/h) into {} -> {}", plume.plume_id, plume.flux_kg_h,
                     scene.scene_id(), out);
        return 0;
    });
}
