#include "plume/workflow/workflow.hpp"

#include <chrono>

#include <spdlog/spdlog.h>

#include "plume/raster/validity.hpp"

namespace plume::workflow {

using synthetic::Split;

bool is_positive(const raster::Scene& scene) {
    return scene.truth_mask && raster::count_true(*scene.truth_mask) > 0;
}

detector::TrainingData build_training_data(const synthetic::Corpus& corpus,
                                           const std::vector<synthetic::PairedScene>& paired,
                                           const rtlut::RtLut& lut, const SitePredicate& sites,
                                           const detector::InputNormalization& norm) {
    detector::TrainingData data;
    data.index.lut = &lut;
    data.index.library = corpus.library;
    std::map<std::size_t, std::size_t> slot;
    for (std::size_t s = 0; s < corpus.styles.size(); ++s) {
        if (!sites(s)) continue;
        slot[s] = data.index.sites.size();
        data.index.sites.push_back({corpus.styles[s].site_id, {}, {}});
    }
    for (const auto& p : paired) {
        const auto& cs = *p.item;
        if (cs.split != Split::Train || !slot.count(cs.site) || !p.reference) continue;
        if (!raster::is_usable(cs.scene)) continue;
        auto& site = data.index.sites[slot[cs.site]];
        (is_positive(cs.scene) ? site.positives : site.negatives).push_back({&cs.scene, p.reference});
    }
    for (const auto& site : data.index.sites)
        data.site_banks.push_back(site.positives.size() >= detector::kMinPositivesForBank ? site.site_id
                                                                                          : detector::kGenericBank);
    std::map<std::size_t, std::string> bank_of;
    for (const auto& [s, k] : slot) bank_of[s] = data.site_banks[k];
    data.validation = split_examples(
        corpus, paired, Split::Validation, sites, [&](std::size_t s) { return bank_of.at(s); }, norm);
    return data;
}

std::vector<detector::ValidationExample> split_examples(const synthetic::Corpus& corpus,
                                                        const std::vector<synthetic::PairedScene>& paired,
                                                        Split split, const SitePredicate& sites,
                                                        const std::function<std::string(std::size_t)>& bank_for,
                                                        const detector::InputNormalization& norm) {
    std::vector<detector::ValidationExample> out;
    for (const auto& p : paired) {
        const auto& cs = *p.item;
        if (cs.split != split || !sites(cs.site) || !p.reference || !raster::is_usable(cs.scene)) continue;
        detector::ValidationExample e;
        try {
            e.input = detector::make_input(cs.scene, p.reference, norm);
        } catch (const RegressionError&) {
            continue;
        }
        e.scene_id = cs.scene.scene_id();
        e.label = is_positive(cs.scene);
        e.site_id = corpus.styles[cs.site].site_id;
        e.film_bank = bank_for(cs.site);
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<simulator::Example> site_examples(const synthetic::Corpus& corpus,
                                              const std::vector<synthetic::PairedScene>& paired, std::size_t site,
                                              Split split) {
    std::vector<simulator::Example> out;
    for (const auto& p : paired) {
        const auto& cs = *p.item;
        if (cs.site != site || cs.split != split || !p.reference || !raster::is_usable(cs.scene)) continue;
        out.push_back({&cs.scene, p.reference});
    }
    (void)corpus;
    return out;
}

std::vector<evalkit::EvalRecord> score_examples(detector::DetectorModel& model,
                                                std::span<const detector::ValidationExample> examples) {
    std::vector<const detector::ModelInput*> inputs;
    std::vector<std::string> banks;
    for (const auto& e : examples) {
        inputs.push_back(&e.input);
        banks.push_back(e.film_bank);
    }
    const auto scores = detector::score_batch(model, inputs, banks);
    std::vector<evalkit::EvalRecord> out;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        evalkit::EvalRecord r;
        r.scene_id = examples[i].scene_id;
        r.site_id = examples[i].site_id;
        r.score = scores[i];
        r.label = examples[i].label;
        out.push_back(std::move(r));
    }
    return out;
}

void annotate_records(const synthetic::Corpus& corpus, std::vector<evalkit::EvalRecord>& records) {
    std::map<std::string, const synthetic::CorpusScene*> by_id;
    for (const auto& cs : corpus.scenes) by_id[cs.scene.scene_id()] = &cs;
    for (auto& r : records) {
        const auto it = by_id.find(r.scene_id);
        if (it == by_id.end()) continue;
        const auto& cs = *it->second;
        r.country = corpus.sites.at(cs.site).country;
        r.satellite = std::string(raster::satellite_name(cs.scene.satellite));
        if (r.label && cs.flux_kg_h) r.flux_t_h = *cs.flux_kg_h / 1000.0;
    }
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    c.train = detector::TrainConfig::from_json(j);
    if (j.contains("widths")) {
        const auto w = j.at("widths").get<std::vector<int>>();
        if (w.size() != c.unet.widths.size()) throw BadRequest("'widths' needs one entry per UNet level");
        std::copy(w.begin(), w.end(), c.unet.widths.begin());
    }
    c.model_seed = j.value("model_seed", c.model_seed);
    c.version = j.value("version", c.version);
    c.finetune_shifted_site = j.value("finetune_shifted_site", c.finetune_shifted_site);
    if (j.contains("finetune")) {
        const auto& f = j.at("finetune");
        c.finetune.steps = f.value("steps", c.finetune.steps);
        c.finetune.batch_size = f.value("batch_size", c.finetune.batch_size);
        c.finetune.lr = f.value("lr", c.finetune.lr);
        c.finetune.seed = f.value("seed", c.finetune.seed);
    }
    return c;
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json j = train.to_json();
    j["widths"] = unet.widths;
    j["model_seed"] = model_seed;
    j["version"] = version;
    j["finetune_shifted_site"] = finetune_shifted_site;
    j["finetune"] = {{"steps", finetune.steps}, {"batch_size", finetune.batch_size}, {"lr", finetune.lr},
                     {"seed", finetune.seed}};
    return j;
}

nlohmann::json RunResult::summary() const {
    nlohmann::json j = {{"test_map", test_map},
                        {"test_scenes", test_records.size()},
                        {"best_epoch", trained.log.best_epoch},
                        {"best_val_map", trained.log.best_val_map},
                        {"early_stopped", trained.log.early_stopped},
                        {"seconds", seconds}};
    if (shifted_site) {
        j["shifted_site"] = *shifted_site;
        j["shifted_map_before"] = *shifted_map_before;
        j["shifted_map_after"] = *shifted_map_after;
    }
    return j;
}

RunResult train_and_evaluate(const synthetic::Corpus& corpus, const rtlut::RtLut& lut, const RunConfig& config,
                             const std::function<void(const detector::EpochLog&)>& on_epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto paired = synthetic::pair_references(corpus);
    const auto regular = [&](std::size_t s) { return !corpus.is_shifted(s); };
    const auto data = build_training_data(corpus, paired, lut, regular);

    std::map<std::string, std::string> bank_of_site;
    for (std::size_t i = 0; i < data.index.sites.size(); ++i)
        bank_of_site[data.index.sites[i].site_id] = data.site_banks[i];

    detector::DetectorModel model(config.unet, config.model_seed);
    model.version = config.version;
    RunResult out;
    out.trained = detector::train(std::move(model), data, simulator::SimulationPolicy{}, config.train, on_epoch);
    auto& trained = out.trained.model;
    trained.version = config.version;

    const auto test = split_examples(corpus, paired, Split::Test, regular,
                                     [&](std::size_t s) { return bank_of_site.at(corpus.styles[s].site_id); });
    out.test_records = score_examples(trained, test);
    annotate_records(corpus, out.test_records);
    out.test_map = evalkit::average_precision(out.test_records);
    spdlog::info("test mAP {:.4f} over {} scenes", out.test_map, out.test_records.size());

    if (config.finetune_shifted_site && corpus.config.shifted_site) {
        const std::size_t s = corpus.styles.size() - 1;
        const std::string site = corpus.styles[s].site_id;
        const auto only = [s](std::size_t k) { return k == s; };
        const auto shifted_test = split_examples(corpus, paired, Split::Test, only, [&](std::size_t) { return site; });
        out.shifted_site = site;
        out.shifted_map_before = evalkit::average_precision(score_examples(trained, shifted_test));
        detector::finetune_film(trained, site_examples(corpus, paired, s, Split::Train), site, config.finetune);
        out.shifted_map_after = evalkit::average_precision(score_examples(trained, shifted_test));
        spdlog::info("site {} test mAP {:.4f} -> {:.4f} after FiLM finetuning", site, *out.shifted_map_before,
                     *out.shifted_map_after);
    }
    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return out;
}

}  // namespace plume::workflow
