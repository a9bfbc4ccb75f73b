// Scores one scene bundle: retrieval, detector forward pass, plume mask and flux.

#include <CLI11.hpp>

#include <fstream>

#include "common.hpp"
#include "plume/alertd/ingest.hpp"
#include "plume/quantify/quantify.hpp"
#include "plume/raster/geotiff.hpp"
#include "plume/retrieval/retrieval.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Run the detector on a scene"};
    std::string model_path, scene_path, reference_path, site, out, lut_path;
    app.add_option("--model", model_path, "checkpoint manifest")->required();
    app.add_option("--scene", scene_path, "scene bundle")->required();
    app.add_option("--reference", reference_path, "reference pass bundle (MBMP); omit for single-pass MBSP");
    app.add_option("--site", site, "site id selecting the FiLM bank (defaults to the scene's site)");
    app.add_option("--out", out, "output stem; writes <stem>.tif (probability) and <stem>.json")->required();
    app.add_option("--lut", lut_path, "look-up table JSON");
    CLI11_PARSE(app, argc, argv);

    return tools::run_main([&] {
        using namespace plume;
        auto model = detector::load_checkpoint(model_path);
        const auto lut = tools::load_or_build_lut(lut_path);
        const auto scene = raster::load_scene(scene_path);
        std::optional<raster::Scene> reference;
        if (!reference_path.empty()) reference = raster::load_scene(reference_path);

        const auto prod = reference ? retrieval::mbmp(scene, *reference, lut) : retrieval::mbsp(scene, lut);
        const auto input =
            detector::make_input(scene, reference ? *reference : scene, prod.delta_r, prod.valid, model.norm);
        const auto pred = detector::forward_padded(model, input, site.empty() ? scene.site_id : site);
        const auto mask = alertd::plume_mask(pred.prob, pred.pixel_threshold, pred.min_blob_px);

        std::filesystem::path stem = out;
        if (stem.extension() == ".tif" || stem.extension() == ".json") stem.replace_extension();
        if (stem.has_parent_path()) std::filesystem::create_directories(stem.parent_path());
        raster::write_geotiff(stem.string() + ".tif", {pred.prob, scene.geo});

        nlohmann::json j = pred.to_json();
        j["scene_id"] = scene.scene_id();
        j["retrieval"] = retrieval::kind_name(prod.kind);
        j["reference_id"] = prod.reference_id;
        j["mask_pixels"] = raster::count_true(mask);
        j["flux"] = nullptr;
        if (raster::count_true(mask) > 0 && scene.wind.speed() > 0)
            j["flux"] = quantify::flux(prod.dch4, mask, scene.wind).to_json();
        std::ofstream(stem.string() + ".json") << j.dump(2) << '\n';
        spdlog::info("{}: score {:.4f} (bank {})", scene.scene_id(), pred.scene_score, pred.film_bank);
        return 0;
    });
}
