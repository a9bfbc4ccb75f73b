#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "plume/detector/kernels.hpp"
#include "plume/detector/tensor.hpp"
#include "plume/rng.hpp"

namespace plume::detector {

inline constexpr int kDataChannels = 15;
inline constexpr int kInputChannels = kDataChannels + 1;  // + density
inline constexpr int kLevels = 4;
inline constexpr int kFilmLayers = 2 * kLevels;
inline constexpr const char* kGenericBank = "GENERIC";

struct UnetConfig {
    std::array<int, kLevels> widths{32, 64, 128, 256};
    Backend backend = Backend::Parallel;
};

template <typename T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;

    std::span<const T> v() const { return value; }
    std::span<T> g() { return grad; }
};

/// One (gamma, beta) pair per FiLM layer: encoder blocks 0..3 then decoder
/// blocks 0..3.
template <typename T>
struct FilmBank {
    std::vector<Param<T>> gamma;
    std::vector<Param<T>> beta;
};

enum class Mode { Train, Eval };

/// UNet backbone with per-sample FiLM. Input tensors carry kInputChannels
/// channels with density last; data channels are multiplied by density
/// before the first convolution.
template <typename T>
class Unet {
public:
    Unet() = default;
    Unet(const UnetConfig& cfg, std::uint64_t seed);

    const UnetConfig& config() const { return cfg_; }
    void set_backend(Backend b) { cfg_.backend = b; }

    std::vector<Param<T>>& params() { return params_; }
    const std::vector<Param<T>>& params() const { return params_; }
    /// BN running statistics, not trained by gradient.
    std::vector<Param<T>>& buffers() { return buffers_; }
    const std::vector<Param<T>>& buffers() const { return buffers_; }

    std::map<std::string, FilmBank<T>>& banks() { return banks_; }
    const std::map<std::string, FilmBank<T>>& banks() const { return banks_; }
    bool has_bank(const std::string& id) const { return banks_.count(id) > 0; }
    /// New bank at identity (gamma = 1, beta = 0), or a copy of `from`.
    FilmBank<T>& add_bank(const std::string& id, const std::string& from = {});
    std::vector<int> film_channels() const;

    /// Logits, N x 1 x H x W. `banks` has one entry per sample; an empty
    /// vector runs without FiLM. In Train mode BN uses batch statistics and
    /// updates running averages, and the trace needed by backward is kept.
    Tensor<T> forward(const Tensor<T>& input, const std::vector<const FilmBank<T>*>& banks, Mode mode);

    /// Backpropagates dlogits through the last forward. Backbone gradients
    /// accumulate into params()[i].grad; FiLM gradients go to the bank each
    /// sample used (the pointers must be mutable banks of this network).
    void backward(const Tensor<T>& dlogits, const std::vector<FilmBank<T>*>& banks);

    void zero_grad();
    /// Drops the activations kept for backward.
    void clear_trace();

private:
    struct BnCache {
        std::vector<T> mean, invstd;
        Tensor<T> xhat;
    };
    struct EncTrace {
        Tensor<T> x, conv, film_in, act, pooled;
        BnCache bn;
        std::vector<int> argmax;
    };
    struct DecTrace {
        Tensor<T> x, up, cat, conv_a, film_in, act_a, conv_b, act_b;
        BnCache bn_a, bn_b;
    };

    void init(std::uint64_t seed);
    std::size_t add_param(const std::string& name, std::vector<int> shape, T fill);
    std::size_t add_buffer(const std::string& name, std::vector<int> shape, T fill);

    void bn_forward(const Tensor<T>& x, std::size_t g_idx, std::size_t mean_idx, Mode mode, Tensor<T>& y, BnCache& cache);
    void bn_backward(const Tensor<T>& dy, std::size_t g_idx, const BnCache& cache, Mode mode, Tensor<T>& dx);

    UnetConfig cfg_;
    std::vector<Param<T>> params_;
    std::vector<Param<T>> buffers_;
    std::map<std::string, FilmBank<T>> banks_;

    // Parameter indices.
    std::array<std::size_t, kLevels> enc_w_{}, enc_bn_{}, enc_rm_{};
    std::array<std::size_t, kLevels> up_w_{}, up_b_{}, dec_wa_{}, dec_bna_{}, dec_rma_{}, dec_wb_{}, dec_bnb_{}, dec_rmb_{};
    std::size_t head_w_ = 0, head_b_ = 0;

    // Trace of the last forward.
    Mode last_mode_ = Mode::Eval;
    bool film_on_ = false;
    Tensor<T> masked_;
    std::array<EncTrace, kLevels> enc_;
    std::array<DecTrace, kLevels> dec_;
    std::vector<const FilmBank<T>*> last_banks_;
};

/// Scalar helpers shared by training and tests.
inline constexpr double kProbClamp = 1e-7;
inline constexpr double kBnEps = 1e-5;
inline constexpr double kBnMomentum = 0.1;

}  // namespace plume::detector
