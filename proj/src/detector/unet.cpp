#include "plume/detector/unet.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "plume/errors.hpp"

namespace plume::detector {
namespace {

std::size_t numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int s : shape) n *= static_cast<std::size_t>(s);
    return n;
}

template <typename T>
void relu_forward(const Tensor<T>& x, Tensor<T>& y) {
    y = Tensor<T>(x.n, x.c, x.h, x.w);
    const std::size_t n = x.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) y.data[i] = x.data[i] > T{} ? x.data[i] : T{};
}

// Gradient mask from the activation output.
template <typename T>
void relu_backward(const Tensor<T>& out, Tensor<T>& d) {
    const std::size_t n = out.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i)
        if (!(out.data[i] > T{})) d.data[i] = T{};
}

template <typename T>
void maxpool_forward(const Tensor<T>& x, Tensor<T>& y, std::vector<int>& argmax) {
    y = Tensor<T>(x.n, x.c, x.h / 2, x.w / 2);
    argmax.assign(y.size(), 0);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            const T* in = x.ptr(n, c);
            T* out = y.ptr(n, c);
            int* am = argmax.data() + (static_cast<std::size_t>(n) * y.c + c) * y.plane();
            for (int r = 0; r < y.h; ++r)
                for (int col = 0; col < y.w; ++col) {
                    int best = (2 * r) * x.w + 2 * col;
                    for (int a = 0; a < 2; ++a)
                        for (int b = 0; b < 2; ++b) {
                            const int idx = (2 * r + a) * x.w + 2 * col + b;
                            if (in[idx] > in[best]) best = idx;
                        }
                    out[r * y.w + col] = in[best];
                    am[r * y.w + col] = best;
                }
        }
}

template <typename T>
void maxpool_backward(const Tensor<T>& dy, const std::vector<int>& argmax, Tensor<T>& dx) {
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < dy.n; ++n)
        for (int c = 0; c < dy.c; ++c) {
            const T* g = dy.ptr(n, c);
            T* out = dx.ptr(n, c);
            const int* am = argmax.data() + (static_cast<std::size_t>(n) * dy.c + c) * dy.plane();
            for (std::size_t p = 0; p < dy.plane(); ++p) out[am[p]] += g[p];
        }
}

template <typename T>
void film_forward(const Tensor<T>& x, const std::vector<const FilmBank<T>*>& banks, int layer, Tensor<T>& y) {
    y = Tensor<T>(x.n, x.c, x.h, x.w);
#pragma omp parallel for collapse(2) schedule(static)
    for (int n = 0; n < x.n; ++n)
        for (int c = 0; c < x.c; ++c) {
            const T g = banks[n]->gamma[layer].value[c];
            const T b = banks[n]->beta[layer].value[c];
            const T* in = x.ptr(n, c);
            T* out = y.ptr(n, c);
            for (std::size_t p = 0; p < x.plane(); ++p) out[p] = g * in[p] + b;
        }
}

// dy -> dx in place; gamma/beta gradients accumulate into the sample's bank.
template <typename T>
void film_backward(const Tensor<T>& x, const std::vector<FilmBank<T>*>& banks, int layer, Tensor<T>& d) {
    for (int n = 0; n < x.n; ++n) {
        FilmBank<T>* bank = banks[n];
        for (int c = 0; c < x.c; ++c) {
            const T* in = x.ptr(n, c);
            T* g = d.ptr(n, c);
            T sg{}, sb{};
            for (std::size_t p = 0; p < x.plane(); ++p) {
                sg += g[p] * in[p];
                sb += g[p];
            }
            if (bank) {
                bank->gamma[layer].grad[c] += sg;
                bank->beta[layer].grad[c] += sb;
            }
            const T gamma = bank ? bank->gamma[layer].value[c] : T{1};
            for (std::size_t p = 0; p < x.plane(); ++p) g[p] *= gamma;
        }
    }
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b) {
    Tensor<T> y(a.n, a.c + b.c, a.h, a.w);
    for (int n = 0; n < a.n; ++n) {
        std::copy(a.ptr(n, 0), a.ptr(n, 0) + a.c * a.plane(), y.ptr(n, 0));
        std::copy(b.ptr(n, 0), b.ptr(n, 0) + b.c * b.plane(), y.ptr(n, a.c));
    }
    return y;
}

template <typename T>
void split(const Tensor<T>& d, int ca, Tensor<T>& da, Tensor<T>& db) {
    da = Tensor<T>(d.n, ca, d.h, d.w);
    db = Tensor<T>(d.n, d.c - ca, d.h, d.w);
    for (int n = 0; n < d.n; ++n) {
        std::copy(d.ptr(n, 0), d.ptr(n, ca), da.ptr(n, 0));
        std::copy(d.ptr(n, ca), d.ptr(n, 0) + d.c * d.plane(), db.ptr(n, 0));
    }
}

template <typename T>
void add_into(Tensor<T>& a, const Tensor<T>& b) {
    const std::size_t n = a.size();
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < n; ++i) a.data[i] += b.data[i];
}

}  // namespace

template <typename T>
Unet<T>::Unet(const UnetConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    for (int w : cfg_.widths)
        if (w <= 0) throw ShapeError("UNet widths must be positive");
    init(seed);
    add_bank(kGenericBank);
}

template <typename T>
std::size_t Unet<T>::add_param(const std::string& name, std::vector<int> shape, T fill) {
    Param<T> p;
    p.name = name;
    p.value.assign(numel(shape), fill);
    p.grad.assign(p.value.size(), T{});
    p.shape = std::move(shape);
    params_.push_back(std::move(p));
    return params_.size() - 1;
}

template <typename T>
std::size_t Unet<T>::add_buffer(const std::string& name, std::vector<int> shape, T fill) {
    Param<T> p;
    p.name = name;
    p.value.assign(numel(shape), fill);
    p.shape = std::move(shape);
    buffers_.push_back(std::move(p));
    return buffers_.size() - 1;
}

template <typename T>
void Unet<T>::init(std::uint64_t seed) {
    Rng rng(seed);
    auto fill_uniform = [&](std::size_t idx, double bound) {
        for (auto& v : params_[idx].value) v = static_cast<T>(uniform(rng, -bound, bound));
    };
    const auto& w = cfg_.widths;
    for (int k = 0; k < kLevels; ++k) {
        const int cin = k == 0 ? kInputChannels : w[k - 1];
        const std::string p = "enc" + std::to_string(k);
        enc_w_[k] = add_param(p + ".conv.weight", {w[k], cin, 3, 3}, T{});
        fill_uniform(enc_w_[k], std::sqrt(6.0 / (cin * 9)));
        enc_bn_[k] = add_param(p + ".bn.weight", {w[k]}, T{1});
        add_param(p + ".bn.bias", {w[k]}, T{});
        enc_rm_[k] = add_buffer(p + ".bn.running_mean", {w[k]}, T{});
        add_buffer(p + ".bn.running_var", {w[k]}, T{1});
    }
    for (int k = 0; k < kLevels; ++k) {
        const int cin = k == 0 ? w[kLevels - 1] : w[kLevels - k];
        const int wo = w[kLevels - 1 - k];
        const std::string p = "dec" + std::to_string(k);
        up_w_[k] = add_param(p + ".up.weight", {cin, wo, 2, 2}, T{});
        fill_uniform(up_w_[k], std::sqrt(6.0 / cin));
        up_b_[k] = add_param(p + ".up.bias", {wo}, T{});
        dec_wa_[k] = add_param(p + ".conv_a.weight", {wo, 2 * wo, 3, 3}, T{});
        fill_uniform(dec_wa_[k], std::sqrt(6.0 / (2 * wo * 9)));
        dec_bna_[k] = add_param(p + ".bn_a.weight", {wo}, T{1});
        add_param(p + ".bn_a.bias", {wo}, T{});
        dec_rma_[k] = add_buffer(p + ".bn_a.running_mean", {wo}, T{});
        add_buffer(p + ".bn_a.running_var", {wo}, T{1});
        dec_wb_[k] = add_param(p + ".conv_b.weight", {wo, wo, 3, 3}, T{});
        fill_uniform(dec_wb_[k], std::sqrt(6.0 / (wo * 9)));
        dec_bnb_[k] = add_param(p + ".bn_b.weight", {wo}, T{1});
        add_param(p + ".bn_b.bias", {wo}, T{});
        dec_rmb_[k] = add_buffer(p + ".bn_b.running_mean", {wo}, T{});
        add_buffer(p + ".bn_b.running_var", {wo}, T{1});
    }
    head_w_ = add_param("head.weight", {1, w[0]}, T{});
    fill_uniform(head_w_, std::sqrt(3.0 / w[0]));
    head_b_ = add_param("head.bias", {1}, T{});
}

template <typename T>
std::vector<int> Unet<T>::film_channels() const {
    std::vector<int> ch;
    for (int k = 0; k < kLevels; ++k) ch.push_back(cfg_.widths[k]);
    for (int k = 0; k < kLevels; ++k) ch.push_back(cfg_.widths[kLevels - 1 - k]);
    return ch;
}

template <typename T>
FilmBank<T>& Unet<T>::add_bank(const std::string& id, const std::string& from) {
    if (!from.empty()) {
        auto it = banks_.find(from);
        if (it == banks_.end()) throw NotFound("FiLM bank '" + from + "' does not exist");
        FilmBank<T> copy = it->second;
        for (auto* group : {&copy.gamma, &copy.beta})
            for (auto& p : *group) {
                p.name = "film." + id + p.name.substr(p.name.find('.', 5));
                std::fill(p.grad.begin(), p.grad.end(), T{});
            }
        return banks_[id] = std::move(copy);
    }
    FilmBank<T> bank;
    const auto ch = film_channels();
    for (int l = 0; l < kFilmLayers; ++l) {
        const auto n = static_cast<std::size_t>(ch[l]);
        const std::string p = "film." + id + "." + std::to_string(l);
        bank.gamma.push_back({p + ".gamma", {ch[l]}, std::vector<T>(n, T{1}), std::vector<T>(n, T{})});
        bank.beta.push_back({p + ".beta", {ch[l]}, std::vector<T>(n, T{}), std::vector<T>(n, T{})});
    }
    return banks_[id] = std::move(bank);
}

template <typename T>
void Unet<T>::zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), T{});
    for (auto& [id, bank] : banks_)
        for (auto* group : {&bank.gamma, &bank.beta})
            for (auto& p : *group) std::fill(p.grad.begin(), p.grad.end(), T{});
}

template <typename T>
void Unet<T>::clear_trace() {
    masked_ = {};
    enc_ = {};
    dec_ = {};
    last_banks_.clear();
}

template <typename T>
void Unet<T>::bn_forward(const Tensor<T>& x, std::size_t g_idx, std::size_t mean_idx, Mode mode, Tensor<T>& y,
                         BnCache& cache) {
    const auto& gamma = params_[g_idx].value;
    const auto& beta = params_[g_idx + 1].value;
    auto& rmean = buffers_[mean_idx].value;
    auto& rvar = buffers_[mean_idx + 1].value;
    y = Tensor<T>(x.n, x.c, x.h, x.w);
    cache.xhat = Tensor<T>(x.n, x.c, x.h, x.w);
    cache.mean.assign(x.c, T{});
    cache.invstd.assign(x.c, T{});
    const double m = static_cast<double>(x.n) * x.plane();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < x.c; ++c) {
        double mean, var;
        if (mode == Mode::Train) {
            double s = 0.0;
            for (int n = 0; n < x.n; ++n) {
                const T* in = x.ptr(n, c);
                for (std::size_t p = 0; p < x.plane(); ++p) s += in[p];
            }
            mean = s / m;
            double ss = 0.0;
            for (int n = 0; n < x.n; ++n) {
                const T* in = x.ptr(n, c);
                for (std::size_t p = 0; p < x.plane(); ++p) ss += (in[p] - mean) * (in[p] - mean);
            }
            var = ss / m;
            rmean[c] = static_cast<T>((1.0 - kBnMomentum) * rmean[c] + kBnMomentum * mean);
            const double unbiased = m > 1 ? ss / (m - 1) : var;
            rvar[c] = static_cast<T>((1.0 - kBnMomentum) * rvar[c] + kBnMomentum * unbiased);
        } else {
            mean = rmean[c];
            var = rvar[c];
        }
        const T mu = static_cast<T>(mean);
        const T inv = static_cast<T>(1.0 / std::sqrt(var + kBnEps));
        cache.mean[c] = mu;
        cache.invstd[c] = inv;
        for (int n = 0; n < x.n; ++n) {
            const T* in = x.ptr(n, c);
            T* xh = cache.xhat.ptr(n, c);
            T* out = y.ptr(n, c);
            for (std::size_t p = 0; p < x.plane(); ++p) {
                xh[p] = (in[p] - mu) * inv;
                out[p] = gamma[c] * xh[p] + beta[c];
            }
        }
    }
}

template <typename T>
void Unet<T>::bn_backward(const Tensor<T>& dy, std::size_t g_idx, const BnCache& cache, Mode mode, Tensor<T>& dx) {
    const auto& gamma = params_[g_idx].value;
    auto& dgamma = params_[g_idx].grad;
    auto& dbeta = params_[g_idx + 1].grad;
    dx = Tensor<T>(dy.n, dy.c, dy.h, dy.w);
    const double m = static_cast<double>(dy.n) * dy.plane();
#pragma omp parallel for schedule(static)
    for (int c = 0; c < dy.c; ++c) {
        double sg = 0.0, sgx = 0.0;
        for (int n = 0; n < dy.n; ++n) {
            const T* g = dy.ptr(n, c);
            const T* xh = cache.xhat.ptr(n, c);
            for (std::size_t p = 0; p < dy.plane(); ++p) {
                sg += g[p];
                sgx += g[p] * xh[p];
            }
        }
        dgamma[c] += static_cast<T>(sgx);
        dbeta[c] += static_cast<T>(sg);
        const T k = gamma[c] * cache.invstd[c];
        if (mode == Mode::Train) {
            const T mg = static_cast<T>(sg / m);
            const T mgx = static_cast<T>(sgx / m);
            for (int n = 0; n < dy.n; ++n) {
                const T* g = dy.ptr(n, c);
                const T* xh = cache.xhat.ptr(n, c);
                T* out = dx.ptr(n, c);
                for (std::size_t p = 0; p < dy.plane(); ++p) out[p] = k * (g[p] - mg - xh[p] * mgx);
            }
        } else {
            for (int n = 0; n < dy.n; ++n) {
                const T* g = dy.ptr(n, c);
                T* out = dx.ptr(n, c);
                for (std::size_t p = 0; p < dy.plane(); ++p) out[p] = k * g[p];
            }
        }
    }
}

template <typename T>
Tensor<T> Unet<T>::forward(const Tensor<T>& input, const std::vector<const FilmBank<T>*>& banks, Mode mode) {
    if (input.c != kInputChannels)
        throw ShapeError("model input needs " + std::to_string(kInputChannels) + " channels, got " +
                         std::to_string(input.c));
    if (input.h % 16 != 0 || input.w % 16 != 0 || input.h == 0 || input.w == 0)
        throw ShapeError("input " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                         " is not divisible by 16");
    if (!banks.empty() && static_cast<int>(banks.size()) != input.n)
        throw ShapeError("one FiLM bank per sample is required");
    last_mode_ = mode;
    film_on_ = !banks.empty();
    last_banks_ = banks;

    // Density masking.
    masked_ = input;
    for (int n = 0; n < input.n; ++n) {
        const T* d = input.ptr(n, kDataChannels);
        for (int c = 0; c < kDataChannels; ++c) {
            T* x = masked_.ptr(n, c);
            for (std::size_t p = 0; p < input.plane(); ++p) x[p] *= d[p];
        }
    }

    const Backend be = cfg_.backend;
    const Tensor<T>* x = &masked_;
    for (int k = 0; k < kLevels; ++k) {
        auto& e = enc_[k];
        e.x = *x;
        const int wo = cfg_.widths[k];
        kernels::conv3x3_forward<T>(e.x, params_[enc_w_[k]].v(), std::vector<T>(wo, T{}), wo, e.conv, be);
        bn_forward(e.conv, enc_bn_[k], enc_rm_[k], mode, e.film_in, e.bn);
        Tensor<T> f;
        if (film_on_) film_forward(e.film_in, banks, k, f);
        relu_forward(film_on_ ? f : e.film_in, e.act);
        maxpool_forward(e.act, e.pooled, e.argmax);
        x = &e.pooled;
    }
    for (int k = 0; k < kLevels; ++k) {
        auto& d = dec_[k];
        d.x = *x;
        const int wo = cfg_.widths[kLevels - 1 - k];
        kernels::tconv2_forward<T>(d.x, params_[up_w_[k]].v(), params_[up_b_[k]].v(), wo, d.up, be);
        d.cat = concat(d.up, enc_[kLevels - 1 - k].act);
        kernels::conv3x3_forward<T>(d.cat, params_[dec_wa_[k]].v(), std::vector<T>(wo, T{}), wo, d.conv_a, be);
        bn_forward(d.conv_a, dec_bna_[k], dec_rma_[k], mode, d.film_in, d.bn_a);
        Tensor<T> f;
        if (film_on_) film_forward(d.film_in, banks, kLevels + k, f);
        relu_forward(film_on_ ? f : d.film_in, d.act_a);
        kernels::conv3x3_forward<T>(d.act_a, params_[dec_wb_[k]].v(), std::vector<T>(wo, T{}), wo, d.conv_b, be);
        Tensor<T> nb;
        bn_forward(d.conv_b, dec_bnb_[k], dec_rmb_[k], mode, nb, d.bn_b);
        relu_forward(nb, d.act_b);
        x = &d.act_b;
    }

    const auto& hw = params_[head_w_].value;
    const T hb = params_[head_b_].value[0];
    Tensor<T> logits(x->n, 1, x->h, x->w);
    for (int n = 0; n < x->n; ++n) {
        T* out = logits.ptr(n, 0);
        std::fill(out, out + logits.plane(), hb);
        for (int c = 0; c < x->c; ++c) {
            const T* in = x->ptr(n, c);
            for (std::size_t p = 0; p < logits.plane(); ++p) out[p] += hw[c] * in[p];
        }
    }
    return logits;
}

template <typename T>
void Unet<T>::backward(const Tensor<T>& dlogits, const std::vector<FilmBank<T>*>& banks) {
    if (film_on_ && static_cast<int>(banks.size()) != dlogits.n)
        throw ShapeError("backward needs the FiLM banks used in forward");
    const Backend be = cfg_.backend;
    const Mode mode = last_mode_;

    // Head.
    const Tensor<T>& top = dec_[kLevels - 1].act_b;
    auto& hw = params_[head_w_];
    Tensor<T> d(top.n, top.c, top.h, top.w);
    for (int n = 0; n < top.n; ++n) {
        const T* g = dlogits.ptr(n, 0);
        T sb{};
        for (std::size_t p = 0; p < top.plane(); ++p) sb += g[p];
        params_[head_b_].grad[0] += sb;
        for (int c = 0; c < top.c; ++c) {
            const T* in = top.ptr(n, c);
            T* out = d.ptr(n, c);
            T s{};
            for (std::size_t p = 0; p < top.plane(); ++p) {
                s += g[p] * in[p];
                out[p] = g[p] * hw.value[c];
            }
            hw.grad[c] += s;
        }
    }

    std::array<Tensor<T>, kLevels> dskip;
    for (int k = kLevels - 1; k >= 0; --k) {
        auto& dt = dec_[k];
        relu_backward(dt.act_b, d);
        Tensor<T> dconv;
        bn_backward(d, dec_bnb_[k], dt.bn_b, mode, dconv);
        std::vector<T> unused_b(dt.conv_b.c, T{});
        Tensor<T> dact;
        kernels::conv3x3_backward<T>(dt.act_a, params_[dec_wb_[k]].v(), dconv, params_[dec_wb_[k]].g(), unused_b,
                                     &dact, be);
        relu_backward(dt.act_a, dact);
        if (film_on_) film_backward(dt.film_in, banks, kLevels + k, dact);
        bn_backward(dact, dec_bna_[k], dt.bn_a, mode, dconv);
        Tensor<T> dcat;
        std::fill(unused_b.begin(), unused_b.end(), T{});
        kernels::conv3x3_backward<T>(dt.cat, params_[dec_wa_[k]].v(), dconv, params_[dec_wa_[k]].g(), unused_b, &dcat,
                                     be);
        Tensor<T> dup;
        split(dcat, dt.up.c, dup, dskip[kLevels - 1 - k]);
        kernels::tconv2_backward<T>(dt.x, params_[up_w_[k]].v(), dup, params_[up_w_[k]].g(), params_[up_b_[k]].g(), d,
                                    be);
    }
    for (int k = kLevels - 1; k >= 0; --k) {
        auto& et = enc_[k];
        Tensor<T> dact = dskip[k];
        maxpool_backward(d, et.argmax, dact);
        relu_backward(et.act, dact);
        if (film_on_) film_backward(et.film_in, banks, k, dact);
        Tensor<T> dconv;
        bn_backward(dact, enc_bn_[k], et.bn, mode, dconv);
        std::vector<T> unused_b(et.conv.c, T{});
        if (k == 0) {
            kernels::conv3x3_backward<T>(et.x, params_[enc_w_[k]].v(), dconv, params_[enc_w_[k]].g(), unused_b,
                                         nullptr, be);
        } else {
            kernels::conv3x3_backward<T>(et.x, params_[enc_w_[k]].v(), dconv, params_[enc_w_[k]].g(), unused_b, &d,
                                         be);
        }
    }
}

template class Unet<float>;
template class Unet<double>;

}  // namespace plume::detector
