// Trains the detector on a corpus, evaluates the test split and finetunes the
// shifted site's FiLM bank.

#include <CLI11.hpp>

#include <fstream>

#include "common.hpp"
#include "plume/workflow/workflow.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Train the plume detector"};
    std::string data, config_path, out, lut_path, records_out;
    app.add_option("--data", data, "corpus root written by mkcorpus")->required();
    app.add_option("--config", config_path, "training configuration JSON");
    app.add_option("--out", out, "checkpoint manifest (payload goes next to it as .bin)")->required();
    app.add_option("--lut", lut_path, "look-up table JSON");
    app.add_option("--records", records_out, "write test-split evaluation records (CSV)");
    CLI11_PARSE(app, argc, argv);

    return tools::run_main([&] {
        using namespace plume;
        nlohmann::json cfg_json = nlohmann::json::object();
        if (!config_path.empty()) {
            std::ifstream in(config_path);
            if (!in) throw std::runtime_error("cannot read " + config_path);
            cfg_json = nlohmann::json::parse(in);
        }
        const auto cfg = workflow::RunConfig::from_json(cfg_json);
        const auto lut = tools::load_or_build_lut(lut_path);
        const auto corpus = synthetic::load_corpus(data);
        spdlog::info("loaded {} scenes over {} sites", corpus.scenes.size(), corpus.sites.size());

        const auto run = workflow::train_and_evaluate(corpus, lut, cfg);
        detector::save_checkpoint(run.trained.model, out);

        std::filesystem::path log_path = out;
        log_path.replace_extension(".log.json");
        nlohmann::json log = run.trained.log.to_json();
        log["run"] = run.summary();
        log["run_config"] = cfg.to_json();
        std::ofstream(log_path) << log.dump(2) << '\n';
        if (!records_out.empty()) std::ofstream(records_out) << evalkit::format_records_csv(run.test_records);
        spdlog::info("wrote {} and {}", out, log_path.string());
        return 0;
    });
}
