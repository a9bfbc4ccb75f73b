#include "plume/detector/train.hpp"

#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "plume/evalkit/evalkit.hpp"

namespace plume::detector {

using nlohmann::json;
using raster::Mask;

json TrainConfig::to_json() const {
    return {{"epochs", epochs},
            {"samples_per_epoch", samples_per_epoch},
            {"optimizer", "adam"},
            {"lr", lr},
            {"weight_decay", weight_decay},
            {"positive_weight", positive_weight},
            {"patience", patience},
            {"batch_size", batch_size},
            {"seed", seed},
            {"generic_rate", generic_rate},
            {"selection_metric", "mAP"}};
}

TrainConfig TrainConfig::from_json(const json& j) {
    TrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.samples_per_epoch = j.value("samples_per_epoch", c.samples_per_epoch);
    c.lr = j.value("lr", c.lr);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.positive_weight = j.value("positive_weight", c.positive_weight);
    c.patience = j.value("patience", c.patience);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.generic_rate = j.value("generic_rate", c.generic_rate);
    if (j.contains("selection_metric") && j["selection_metric"] != "mAP")
        throw BadRequest("selection metric is fixed to mAP");
    c.validate();
    return c;
}

void TrainConfig::validate() const {
    if (epochs <= 0 || samples_per_epoch <= 0 || !(lr > 0) || !(weight_decay >= 0) || !(positive_weight > 0) ||
        patience <= 0 || batch_size <= 0 || generic_rate < 0 || generic_rate > 1)
        throw BadRequest("train config values must be positive");
}

json TrainLog::to_json() const {
    json e = json::array();
    for (const auto& x : epochs)
        e.push_back({{"epoch", x.epoch}, {"mean_loss", x.mean_loss}, {"first_batch_loss", x.first_batch_loss},
                     {"val_map", x.val_map}, {"seconds", x.seconds}});
    return {{"config", config}, {"epochs", e}, {"best_epoch", best_epoch}, {"best_val_map", best_val_map},
            {"early_stopped", early_stopped}};
}

void Adam::step(Param<float>& p) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    auto& s = state_[p.name];
    if (s.m.empty()) {
        s.m.assign(p.value.size(), 0.0f);
        s.v.assign(p.value.size(), 0.0f);
    }
    ++s.t;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(s.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(s.t));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad[i] + wd_ * p.value[i];
        s.m[i] = static_cast<float>(b1 * s.m[i] + (1.0 - b1) * g);
        s.v[i] = static_cast<float>(b2 * s.v[i] + (1.0 - b2) * g * g);
        const double mh = s.m[i] / c1;
        const double vh = s.v[i] / c2;
        p.value[i] = static_cast<float>(p.value[i] - lr_ * mh / (std::sqrt(vh) + eps));
    }
}

double validation_map(DetectorModel& model, std::span<const ValidationExample> examples) {
    std::vector<const ModelInput*> inputs;
    std::vector<std::string> banks;
    for (const auto& e : examples) {
        inputs.push_back(&e.input);
        banks.push_back(e.film_bank);
    }
    const auto scores = score_batch(model, inputs, banks);
    std::vector<evalkit::EvalRecord> recs;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        evalkit::EvalRecord r;
        r.site_id = examples[i].site_id;
        r.score = scores[i];
        r.label = examples[i].label;
        recs.push_back(std::move(r));
    }
    return evalkit::average_precision(recs);
}

double loss_and_grad(const Tensor<float>& logits, const std::vector<Mask>& targets, const std::vector<Mask>& valid,
                     double positive_weight, Tensor<float>& dlogits) {
    dlogits = Tensor<float>(logits.n, 1, logits.h, logits.w);
    std::size_t n_valid = 0;
    for (int n = 0; n < logits.n; ++n)
        for (std::size_t p = 0; p < logits.plane(); ++p) n_valid += valid[n][p] != 0;
    if (n_valid == 0) throw EmptyLossError("no valid pixels in batch");
    const double inv = 1.0 / static_cast<double>(n_valid);
    double sum = 0.0;
    for (int n = 0; n < logits.n; ++n) {
        const float* z = logits.ptr(n, 0);
        float* d = dlogits.ptr(n, 0);
        const bool has_target = !targets[n].empty();
        for (std::size_t p = 0; p < logits.plane(); ++p) {
            if (!valid[n][p]) continue;
            const double prob = 1.0 / (1.0 + std::exp(-static_cast<double>(z[p])));
            const double pc = std::clamp(prob, kProbClamp, 1.0 - kProbClamp);
            const bool m = has_target && targets[n][p];
            if (m) {
                sum += positive_weight * std::log(pc);
                d[p] = static_cast<float>(-positive_weight * (1.0 - prob) * inv);
            } else {
                sum += std::log(1.0 - pc);
                d[p] = static_cast<float>(prob * inv);
            }
        }
    }
    return -sum * inv;
}

namespace {

struct Batch {
    Tensor<float> x;
    std::vector<Mask> targets, valid;
    std::vector<std::string> banks;
};

void append(Batch& b, int slot, const ModelInput& in, Mask target, const std::string& bank) {
    std::copy(in.x.data.begin(), in.x.data.end(), b.x.ptr(slot, 0));
    Mask v(in.rows(), in.cols(), 0);
    for (int r = 0; r < in.rows(); ++r)
        for (int c = 0; c < in.cols(); ++c) v(r, c) = in.density(r, c) > 0.5f ? 1 : 0;
    b.valid.push_back(std::move(v));
    b.targets.push_back(std::move(target));
    b.banks.push_back(bank);
}

std::vector<FilmBank<float>*> bank_ptrs(DetectorModel& model, const std::vector<std::string>& ids) {
    std::vector<FilmBank<float>*> out;
    for (const auto& id : ids) out.push_back(&model.net.banks().at(id));
    return out;
}

}  // namespace

TrainResult train(DetectorModel model, const TrainingData& data, const simulator::SimulationPolicy& policy,
                  const TrainConfig& config, const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    if (data.site_banks.size() != data.index.sites.size()) throw BadRequest("one bank id per training site");
    for (const auto& id : data.site_banks)
        if (!model.net.has_bank(id)) model.net.add_bank(id);

    TrainLog log;
    log.config = config.to_json();
    spdlog::info("train: lr {} weight_decay {} positive_weight {} epochs {} x {} samples, batch {}", config.lr,
                 config.weight_decay, config.positive_weight, config.epochs, config.samples_per_epoch,
                 config.batch_size);

    Rng rng(config.seed);
    Adam adam(config.lr, config.weight_decay);
    DetectorModel best = model;
    double best_map = -1.0;
    int stale = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        EpochLog el;
        el.epoch = epoch;
        double loss_sum = 0.0;
        int batches = 0;
        for (int drawn = 0; drawn < config.samples_per_epoch;) {
            const int bs = std::min(config.batch_size, config.samples_per_epoch - drawn);
            Batch batch;
            for (int slot = 0; slot < bs;) {
                auto s = simulator::draw_training_sample(data.index, policy, rng);
                ModelInput in;
                try {
                    in = make_input(s.scene, s.reference, model.norm);
                } catch (const RegressionError&) {
                    continue;
                }
                if (slot == 0 && batch.x.size() == 0) batch.x = Tensor<float>(bs, kInputChannels, in.rows(), in.cols());
                if (in.rows() != batch.x.h || in.cols() != batch.x.w)
                    throw ShapeError("training crops must share one shape");
                std::string bank = data.site_banks[s.site_index];
                if (bank != kGenericBank && bernoulli(rng, config.generic_rate)) bank = kGenericBank;
                append(batch, slot, in, s.positive ? std::move(s.truth) : Mask{}, bank);
                ++slot;
            }
            drawn += bs;

            std::vector<const FilmBank<float>*> cb;
            for (const auto& id : batch.banks) cb.push_back(&model.net.banks().at(id));
            const auto logits = model.net.forward(batch.x, cb, Mode::Train);
            Tensor<float> dlogits;
            const double l = loss_and_grad(logits, batch.targets, batch.valid, config.positive_weight, dlogits);
            if (!std::isfinite(l)) {
                best.net.clear_trace();
                throw TrainingDiverged("loss became " + std::to_string(l) + " at epoch " + std::to_string(epoch),
                                       std::move(best));
            }
            if (batches == 0) el.first_batch_loss = l;
            loss_sum += l;
            ++batches;

            model.net.zero_grad();
            model.net.backward(dlogits, bank_ptrs(model, batch.banks));
            for (auto& p : model.net.params()) adam.step(p);
            std::vector<std::string> touched = batch.banks;
            std::sort(touched.begin(), touched.end());
            touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
            for (const auto& id : touched) {
                auto& bank = model.net.banks().at(id);
                for (auto& p : bank.gamma) adam.step(p);
                for (auto& p : bank.beta) adam.step(p);
            }
        }
        model.net.clear_trace();
        el.mean_loss = loss_sum / std::max(1, batches);
        el.val_map = data.validation.empty() ? 0.0 : validation_map(model, data.validation);
        el.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        log.epochs.push_back(el);
        spdlog::info("epoch {}: loss {:.4f} val mAP {:.4f} ({:.1f} s)", epoch, el.mean_loss, el.val_map, el.seconds);
        if (on_epoch) on_epoch(el);

        if (el.val_map > best_map) {
            best_map = el.val_map;
            best = model;
            log.best_epoch = epoch;
            stale = 0;
        } else if (++stale >= config.patience) {
            log.early_stopped = true;
            break;
        }
    }
    log.best_val_map = best_map;
    return {std::move(best), std::move(log)};
}

void finetune_film(DetectorModel& model, std::span<const simulator::Example> site_scenes,
                   const std::string& film_bank_id, const FinetuneConfig& config) {
    struct Item {
        ModelInput input;
        Mask target;
        bool positive;
    };
    std::vector<Item> items;
    std::size_t positives = 0;
    for (const auto& ex : site_scenes) {
        const bool pos = ex.scene->truth_mask && raster::count_true(*ex.scene->truth_mask) > 0;
        positives += pos;
        try {
            items.push_back({make_input(*ex.scene, ex.reference, model.norm), pos ? *ex.scene->truth_mask : Mask{}, pos});
        } catch (const RegressionError&) {
        }
    }
    if (positives < kMinPositivesForBank)
        throw InsufficientPositives("site has " + std::to_string(positives) + " positive scenes, need " +
                                    std::to_string(kMinPositivesForBank));
    if (film_bank_id == kGenericBank) throw BadRequest("the GENERIC bank is not finetuned per site");
    if (!model.net.has_bank(film_bank_id)) model.net.add_bank(film_bank_id, kGenericBank);

    std::vector<std::size_t> pos_idx, neg_idx;
    for (std::size_t i = 0; i < items.size(); ++i) (items[i].positive ? pos_idx : neg_idx).push_back(i);
    if (pos_idx.empty()) throw InsufficientPositives("no usable positive scenes");

    Rng rng(config.seed);
    Adam adam(config.lr, 0.0);
    auto& bank = model.net.banks().at(film_bank_id);
    for (int step = 0; step < config.steps; ++step) {
        Batch batch;
        const auto& first = items.front().input;
        batch.x = Tensor<float>(config.batch_size, kInputChannels, first.rows(), first.cols());
        for (int slot = 0; slot < config.batch_size; ++slot) {
            const bool pos = neg_idx.empty() || bernoulli(rng, 0.5);
            const auto& pool = pos ? pos_idx : neg_idx;
            const auto& it = items[pool[uniform_index(rng, pool.size())]];
            append(batch, slot, it.input, it.target, film_bank_id);
        }
        std::vector<const FilmBank<float>*> cb(config.batch_size, &bank);
        const auto logits = model.net.forward(batch.x, cb, Mode::Eval);
        Tensor<float> dlogits;
        loss_and_grad(logits, batch.targets, batch.valid, config.positive_weight, dlogits);
        for (auto* group : {&bank.gamma, &bank.beta})
            for (auto& p : *group) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
        model.net.backward(dlogits, std::vector<FilmBank<float>*>(config.batch_size, &bank));
        for (auto& p : bank.gamma) adam.step(p);
        for (auto& p : bank.beta) adam.step(p);
    }
    model.net.clear_trace();
}

}  // namespace plume::detector
