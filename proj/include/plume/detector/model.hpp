#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "plume/detector/unet.hpp"
#include "plume/raster/scene.hpp"

namespace plume::detector {

/// Affine scaling applied to each data channel before density masking.
struct InputNormalization {
    double band_center = 0.2;
    double band_scale = 0.1;
    double delta_r_scale = 0.05;
    double wind_scale = 5.0;
};

/// 1 x 16 x H x W: current bands, reference bands, MBMP delta R, u10, v10,
/// then the density (validity) channel.
struct ModelInput {
    Tensor<float> x;
    int rows() const { return x.h; }
    int cols() const { return x.w; }
    float density(int r, int c) const { return x.at(0, kDataChannels, r, c); }
};

/// Builds the input from already-computed retrieval output. Pixels invalid
/// in `valid`, in either pass's validity mask, or non-finite anywhere get
/// density 0 and zeroed data channels.
ModelInput make_input(const raster::Scene& current, const raster::Scene& reference, const raster::Raster& delta_r,
                      const raster::Mask& valid, const InputNormalization& norm = {});
/// Runs the MBMP signal retrieval against `reference`, or MBSP when it is null
/// (the current pass then fills the reference channels).
ModelInput make_input(const raster::Scene& current, const raster::Scene* reference,
                      const InputNormalization& norm = {});

struct DetectorModel {
    Unet<float> net;
    InputNormalization norm;
    double pixel_threshold = 0.5;
    int min_blob_px = 3;
    std::string version = "untrained";

    DetectorModel() = default;
    explicit DetectorModel(const UnetConfig& cfg, std::uint64_t seed = 0) : net(cfg, seed) {}

    /// `id` when it has a bank, GENERIC otherwise.
    std::string resolve_bank(const std::string& id) const;
};

struct Prediction {
    raster::Raster prob;
    double scene_score = 0.0;
    double pixel_threshold = 0.5;
    int min_blob_px = 3;
    std::string model_version;
    std::string film_bank;

    nlohmann::json to_json() const;
};

/// ShapeError unless H and W are multiples of 16.
Prediction forward(DetectorModel& model, const ModelInput& input, const std::string& film_bank_id);
/// Reflect-pads to the next multiple of 16 and crops the result back.
Prediction forward_padded(DetectorModel& model, const ModelInput& input, const std::string& film_bank_id);
/// Scene scores for many same-shaped inputs, evaluated in batches.
std::vector<double> score_batch(DetectorModel& model, std::span<const ModelInput* const> inputs,
                                std::span<const std::string> banks, int batch_size = 32);

raster::Raster sigmoid(const Tensor<float>& logits, int sample = 0);

/// Max prob over 4-connected components of {prob >= threshold} with at least
/// min_blob_px pixels; 0 when none survive.
double scene_score(const raster::Raster& prob, double pixel_threshold = 0.5, int min_blob_px = 3);

/// Weighted Bernoulli negative log likelihood averaged over valid pixels,
/// with prob clamped to [1e-7, 1 - 1e-7]. EmptyLossError if nothing is valid.
double loss(const raster::Raster& prob, const raster::Mask& target, const raster::Mask& valid,
            double positive_weight = 10.0);

/// JSON manifest plus a sibling .bin of shape-prefixed little-endian float32
/// tensors.
void save_checkpoint(const DetectorModel& model, const std::filesystem::path& manifest);
DetectorModel load_checkpoint(const std::filesystem::path& manifest);

}  // namespace plume::detector
