// Generates the synthetic desk-scale corpus: sites, scene bundles and a plume library.

#include <CLI11.hpp>

#include "common.hpp"
#include "plume/synthetic/synthetic.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Generate a synthetic monitoring corpus"};
    plume::synthetic::CorpusConfig cfg;
    std::string out, lut_path;
    bool no_shifted = false;
    app.add_option("--out", out, "corpus root")->required();
    app.add_option("--lut", lut_path, "look-up table JSON");
    app.add_option("--sites", cfg.train_sites, "number of regular sites");
    app.add_flag("--no-shifted-site", no_shifted, "omit the distribution-shifted extra site");
    app.add_option("--crop", cfg.crop, "crop edge in pixels");
    app.add_option("--scenes-per-site", cfg.scenes_per_site);
    app.add_option("--prevalence", cfg.prevalence, "fraction of scenes carrying a real plume");
    app.add_option("--library-plumes", cfg.library_plumes);
    app.add_option("--seed", cfg.seed);
    CLI11_PARSE(app, argc, argv);
    cfg.shifted_site = !no_shifted;

    return tools::run_main([&] {
        const auto lut = tools::load_or_build_lut(lut_path);
        const auto corpus = plume::synthetic::generate_corpus(cfg, lut);
        plume::synthetic::save_corpus(corpus, out);
        std::size_t positives = 0;
        for (const auto& s : corpus.scenes) positives += s.scene.truth_mask.has_value();
        spdlog::info("wrote {} scenes ({} with plumes) over {} sites and {} library plumes to {}",
                     corpus.scenes.size(), positives, corpus.sites.size(), corpus.library.size(), out);
        return 0;
    });
}
