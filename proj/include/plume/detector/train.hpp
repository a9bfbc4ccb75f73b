#pragma once

#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "plume/detector/model.hpp"
#include "plume/errors.hpp"
#include "plume/simulator/simulator.hpp"

namespace plume::detector {

struct TrainConfig {
    int epochs = 170;
    int samples_per_epoch = 65536;
    double lr = 5e-4;
    double weight_decay = 1e-6;
    double positive_weight = 10.0;
    int patience = 15;
    int batch_size = 32;
    std::uint64_t seed = 0;
    /// Fraction of samples from bank-holding sites routed through GENERIC so
    /// that bank keeps learning from every site.
    double generic_rate = 0.25;

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    void validate() const;
};

struct ValidationExample {
    std::string scene_id;
    ModelInput input;
    bool label = false;
    std::string site_id;
    std::string film_bank;
};

struct TrainingData {
    simulator::DatasetIndex index;
    std::vector<std::string> site_banks;  // per index.sites entry
    std::vector<ValidationExample> validation;
};

/// Sites with at least five real positives get their own bank.
inline constexpr std::size_t kMinPositivesForBank = 5;

struct EpochLog {
    int epoch = 0;
    double mean_loss = 0.0;
    double first_batch_loss = 0.0;
    double val_map = 0.0;
    double seconds = 0.0;
};

struct TrainLog {
    nlohmann::json config;
    std::vector<EpochLog> epochs;
    int best_epoch = -1;
    double best_val_map = 0.0;
    bool early_stopped = false;

    nlohmann::json to_json() const;
};

struct TrainResult {
    DetectorModel model;
    TrainLog log;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(const std::string& what, DetectorModel last_good)
        : Error(what), last_good(std::move(last_good)) {}
    DetectorModel last_good;
};

/// Adam with L2 regularisation; one state per named parameter.
class Adam {
public:
    Adam(double lr, double weight_decay) : lr_(lr), wd_(weight_decay) {}
    void step(Param<float>& p);

private:
    struct State {
        std::vector<float> m, v;
        long t = 0;
    };
    double lr_, wd_;
    std::unordered_map<std::string, State> state_;
};

/// Validation mAP of the model on raw examples.
double validation_map(DetectorModel& model, std::span<const ValidationExample> examples);

/// Per-sample loss gradient w.r.t. the logits for the batch mean loss, and
/// the loss itself. Pixels with valid == 0 contribute nothing.
double loss_and_grad(const Tensor<float>& logits, const std::vector<raster::Mask>& targets,
                     const std::vector<raster::Mask>& valid, double positive_weight, Tensor<float>& dlogits);

TrainResult train(DetectorModel model, const TrainingData& data, const simulator::SimulationPolicy& policy,
                  const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch = {});

struct FinetuneConfig {
    int steps = 150;
    int batch_size = 16;
    double lr = 5e-3;
    double positive_weight = 10.0;
    std::uint64_t seed = 0;
};

/// Trains only `film_bank_id` (created from GENERIC when absent) on the
/// site's labelled scenes with the backbone and BN statistics frozen. A scene
/// is positive when its truth_mask has any pixel set.
void finetune_film(DetectorModel& model, std::span<const simulator::Example> site_scenes,
                   const std::string& film_bank_id, const FinetuneConfig& config = {});

}  // namespace plume::detector
