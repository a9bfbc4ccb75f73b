#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "plume/detector/train.hpp"
#include "plume/evalkit/evalkit.hpp"
#include "plume/synthetic/synthetic.hpp"

namespace plume::workflow {

using SitePredicate = std::function<bool(std::size_t site)>;

/// True when the scene carries a non-empty ground-truth mask.
bool is_positive(const raster::Scene& scene);

/// Sampler index over the train split of the selected sites. Scenes need a
/// reference pass and must be usable. Sites with at least five real
/// positives get a bank named after the site; the rest share GENERIC.
detector::TrainingData build_training_data(const synthetic::Corpus& corpus,
                                           const std::vector<synthetic::PairedScene>& paired,
                                           const rtlut::RtLut& lut, const SitePredicate& sites,
                                           const detector::InputNormalization& norm = {});

/// Raw (never simulated) examples of one split for the selected sites, using
/// `bank_for(site)` as each example's FiLM bank.
std::vector<detector::ValidationExample> split_examples(const synthetic::Corpus& corpus,
                                                        const std::vector<synthetic::PairedScene>& paired,
                                                        synthetic::Split split, const SitePredicate& sites,
                                                        const std::function<std::string(std::size_t)>& bank_for,
                                                        const detector::InputNormalization& norm = {});

/// Labelled training scenes of one site for FiLM finetuning.
std::vector<simulator::Example> site_examples(const synthetic::Corpus& corpus,
                                              const std::vector<synthetic::PairedScene>& paired, std::size_t site,
                                              synthetic::Split split);

/// Scores examples and returns evalkit records (flux in t/h when known).
std::vector<evalkit::EvalRecord> score_examples(detector::DetectorModel& model,
                                                std::span<const detector::ValidationExample> examples);

struct RunConfig {
    detector::UnetConfig unet;
    detector::TrainConfig train;
    detector::FinetuneConfig finetune;
    std::uint64_t model_seed = 1;
    std::string version = "trained";
    bool finetune_shifted_site = true;

    /// Accepts TrainConfig keys plus "widths", "model_seed", "version" and a
    /// "finetune" object (steps, batch_size, lr, seed).
    static RunConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct RunResult {
    detector::TrainResult trained;  // model after finetuning, when it ran
    std::vector<evalkit::EvalRecord> test_records;
    double test_map = 0.0;
    std::optional<std::string> shifted_site;
    std::optional<double> shifted_map_before, shifted_map_after;
    double seconds = 0.0;

    nlohmann::json summary() const;
};

/// Fills country, satellite and (for positives) catalogued flux in t/h.
void annotate_records(const synthetic::Corpus& corpus, std::vector<evalkit::EvalRecord>& records);

/// Trains on the regular sites, reports pooled test-split mAP, then
/// finetunes a FiLM bank for the shifted site (if the corpus has one) and
/// reports its test-split mAP before and after.
RunResult train_and_evaluate(const synthetic::Corpus& corpus, const rtlut::RtLut& lut, const RunConfig& config,
                             const std::function<void(const detector::EpochLog&)>& on_epoch = {});

}  // namespace plume::workflow
