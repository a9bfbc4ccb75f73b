#include "plume/detector/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "plume/errors.hpp"
#include "plume/retrieval/retrieval.hpp"

namespace plume::detector {

using nlohmann::json;
using raster::Band;
using raster::Mask;
using raster::Raster;
using raster::Scene;

ModelInput make_input(const Scene& current, const Scene& reference, const Raster& delta_r, const Mask& valid,
                      const InputNormalization& norm) {
    const int h = current.rows();
    const int w = current.cols();
    if (reference.rows() != h || reference.cols() != w || delta_r.rows() != h || delta_r.cols() != w ||
        valid.rows() != h || valid.cols() != w)
        throw GridMismatch("model input layers do not share a grid");
    ModelInput in;
    in.x = Tensor<float>(1, kInputChannels, h, w);
    const double u = current.wind.u / norm.wind_scale;
    const double v = current.wind.v / norm.wind_scale;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            bool ok = valid(r, c) != 0;
            if (!current.validity.empty() && !current.validity(r, c)) ok = false;
            if (!reference.validity.empty() && !reference.validity(r, c)) ok = false;
            std::array<double, kDataChannels> vals{};
            int k = 0;
            for (Band b : raster::kAllBands) vals[k++] = (current.band(b)(r, c) - norm.band_center) / norm.band_scale;
            for (Band b : raster::kAllBands)
                vals[k++] = (reference.band(b)(r, c) - norm.band_center) / norm.band_scale;
            vals[k++] = delta_r(r, c) / norm.delta_r_scale;
            vals[k++] = u;
            vals[k++] = v;
            for (double x : vals)
                if (!std::isfinite(x)) ok = false;
            for (int ch = 0; ch < kDataChannels; ++ch) in.x.at(0, ch, r, c) = ok ? static_cast<float>(vals[ch]) : 0.0f;
            in.x.at(0, kDataChannels, r, c) = ok ? 1.0f : 0.0f;
        }
    return in;
}

ModelInput make_input(const Scene& current, const Scene* reference, const InputNormalization& norm) {
    if (reference) {
        const auto p = retrieval::mbmp(current, *reference);
        return make_input(current, *reference, p.delta_r, p.valid, norm);
    }
    const auto p = retrieval::mbsp(current);
    return make_input(current, current, p.delta_r, p.valid, norm);
}

std::string DetectorModel::resolve_bank(const std::string& id) const {
    return net.has_bank(id) ? id : std::string(kGenericBank);
}

json Prediction::to_json() const {
    return {{"scene_score", scene_score}, {"pixel_threshold", pixel_threshold}, {"min_blob_px", min_blob_px},
            {"model_version", model_version}, {"film_bank", film_bank}, {"rows", prob.rows()},
            {"cols", prob.cols()}};
}

Raster sigmoid(const Tensor<float>& logits, int sample) {
    Raster out(logits.h, logits.w);
    const float* z = logits.ptr(sample, 0);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
    return out;
}

Prediction forward(DetectorModel& model, const ModelInput& input, const std::string& film_bank_id) {
    const std::string bank = model.resolve_bank(film_bank_id);
    const FilmBank<float>* b = &model.net.banks().at(bank);
    const auto logits = model.net.forward(input.x, {b}, Mode::Eval);
    Prediction p;
    p.prob = sigmoid(logits);
    p.pixel_threshold = model.pixel_threshold;
    p.min_blob_px = model.min_blob_px;
    p.scene_score = scene_score(p.prob, p.pixel_threshold, p.min_blob_px);
    p.model_version = model.version;
    p.film_bank = bank;
    model.net.clear_trace();
    return p;
}

namespace {

int reflect(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) i += period;
    return i < n ? i : period - i;
}

}  // namespace

Prediction forward_padded(DetectorModel& model, const ModelInput& input, const std::string& film_bank_id) {
    const int h = input.rows();
    const int w = input.cols();
    const int ph = (h + 15) / 16 * 16;
    const int pw = (w + 15) / 16 * 16;
    if (ph == h && pw == w) return forward(model, input, film_bank_id);
    ModelInput padded;
    padded.x = Tensor<float>(1, kInputChannels, ph, pw);
    for (int c = 0; c < kInputChannels; ++c)
        for (int r = 0; r < ph; ++r)
            for (int col = 0; col < pw; ++col) padded.x.at(0, c, r, col) = input.x.at(0, c, reflect(r, h), reflect(col, w));
    Prediction p = forward(model, padded, film_bank_id);
    Raster cropped(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) cropped(r, c) = p.prob(r, c);
    p.prob = std::move(cropped);
    p.scene_score = scene_score(p.prob, p.pixel_threshold, p.min_blob_px);
    return p;
}

std::vector<double> score_batch(DetectorModel& model, std::span<const ModelInput* const> inputs,
                                std::span<const std::string> banks, int batch_size) {
    if (inputs.size() != banks.size()) throw ShapeError("one bank per input is required");
    std::vector<double> scores;
    scores.reserve(inputs.size());
    for (std::size_t start = 0; start < inputs.size(); start += batch_size) {
        const std::size_t end = std::min(inputs.size(), start + static_cast<std::size_t>(batch_size));
        const auto& first = inputs[start]->x;
        Tensor<float> x(static_cast<int>(end - start), kInputChannels, first.h, first.w);
        std::vector<const FilmBank<float>*> b;
        for (std::size_t i = start; i < end; ++i) {
            const auto& xi = inputs[i]->x;
            if (xi.h != first.h || xi.w != first.w) throw ShapeError("score_batch inputs must share a shape");
            std::copy(xi.data.begin(), xi.data.end(), x.ptr(static_cast<int>(i - start), 0));
            b.push_back(&model.net.banks().at(model.resolve_bank(banks[i])));
        }
        const auto logits = model.net.forward(x, b, Mode::Eval);
        for (int n = 0; n < logits.n; ++n)
            scores.push_back(scene_score(sigmoid(logits, n), model.pixel_threshold, model.min_blob_px));
    }
    model.net.clear_trace();
    return scores;
}

double scene_score(const Raster& prob, double pixel_threshold, int min_blob_px) {
    const int h = prob.rows();
    const int w = prob.cols();
    std::vector<int> label(prob.size(), -1);
    std::vector<int> stack;
    double best = 0.0;
    for (int start = 0; start < static_cast<int>(prob.size()); ++start) {
        if (label[start] >= 0 || !(prob[start] >= pixel_threshold)) continue;
        int count = 0;
        double peak = 0.0;
        stack.push_back(start);
        label[start] = start;
        while (!stack.empty()) {
            const int i = stack.back();
            stack.pop_back();
            ++count;
            peak = std::max(peak, prob[i]);
            const int r = i / w, c = i % w;
            const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& q : nb) {
                if (q[0] < 0 || q[0] >= h || q[1] < 0 || q[1] >= w) continue;
                const int j = q[0] * w + q[1];
                if (label[j] >= 0 || !(prob[j] >= pixel_threshold)) continue;
                label[j] = start;
                stack.push_back(j);
            }
        }
        if (count >= min_blob_px) best = std::max(best, peak);
    }
    return best;
}

double loss(const Raster& prob, const Mask& target, const Mask& valid, double positive_weight) {
    if (!prob.same_shape(target) || !prob.same_shape(valid)) throw GridMismatch("loss inputs differ in shape");
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        if (!valid[i]) continue;
        const double p = std::clamp(prob[i], kProbClamp, 1.0 - kProbClamp);
        sum += target[i] ? positive_weight * std::log(p) : std::log(1.0 - p);
        ++n;
    }
    if (n == 0) throw EmptyLossError("no valid pixels");
    return -sum / static_cast<double>(n);
}

// ---------------------------------------------------------------- checkpoint

namespace {

constexpr const char* kFormat = "plume-detector/1";

void put_u32(std::ostream& out, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError("checkpoint payload truncated");
    return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

template <typename F>
void for_each_tensor(auto& model, F&& f) {
    for (auto& p : model.net.params()) f(p);
    for (auto& p : model.net.buffers()) f(p);
    for (auto& [id, bank] : model.net.banks()) {
        for (auto& p : bank.gamma) f(p);
        for (auto& p : bank.beta) f(p);
    }
}

}  // namespace

void save_checkpoint(const DetectorModel& model, const std::filesystem::path& manifest) {
    if (manifest.has_parent_path()) std::filesystem::create_directories(manifest.parent_path());
    auto payload = manifest;
    payload.replace_extension(".bin");
    json j;
    j["format"] = kFormat;
    j["version"] = model.version;
    const auto& cfg = model.net.config();
    j["architecture"] = {{"in_channels", kInputChannels}, {"levels", kLevels},
                         {"widths", std::vector<int>(cfg.widths.begin(), cfg.widths.end())}};
    j["input_normalization"] = {{"band_center", model.norm.band_center}, {"band_scale", model.norm.band_scale},
                                {"delta_r_scale", model.norm.delta_r_scale}, {"wind_scale", model.norm.wind_scale}};
    j["pixel_threshold"] = model.pixel_threshold;
    j["min_blob_px"] = model.min_blob_px;
    json banks = json::array();
    for (const auto& [id, bank] : model.net.banks()) banks.push_back(id);
    j["banks"] = banks;
    j["payload"] = payload.filename().string();

    std::ofstream out(payload, std::ios::binary);
    if (!out) throw FormatError("cannot write " + payload.string());
    json tensors = json::array();
    put_u32(out, 0);  // placeholder for the count, rewritten below
    std::uint32_t count = 0;
    for_each_tensor(model, [&](const Param<float>& p) {
        tensors.push_back({{"name", p.name}, {"shape", p.shape}});
        put_u32(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
        for (int s : p.shape) put_u32(out, static_cast<std::uint32_t>(s));
        for (float v : p.value) put_u32(out, std::bit_cast<std::uint32_t>(v));
        ++count;
    });
    out.seekp(0);
    put_u32(out, count);
    j["tensors"] = tensors;
    std::ofstream(manifest) << j.dump(2) << '\n';
}

DetectorModel load_checkpoint(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in) throw FormatError("cannot open " + manifest.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw FormatError(manifest.string() + ": " + e.what());
    }
    if (j.value("format", "") != kFormat) throw FormatError(manifest.string() + ": not a detector checkpoint");
    UnetConfig cfg;
    const auto widths = j.at("architecture").at("widths").get<std::vector<int>>();
    if (widths.size() != kLevels) throw FormatError("checkpoint needs 4 widths");
    std::copy(widths.begin(), widths.end(), cfg.widths.begin());
    DetectorModel model(cfg, 0);
    model.version = j.value("version", "unknown");
    const auto& n = j.at("input_normalization");
    model.norm = {n.at("band_center").get<double>(), n.at("band_scale").get<double>(),
                  n.at("delta_r_scale").get<double>(), n.at("wind_scale").get<double>()};
    model.pixel_threshold = j.value("pixel_threshold", 0.5);
    model.min_blob_px = j.value("min_blob_px", 3);
    for (const auto& id : j.at("banks"))
        if (!model.net.has_bank(id.get<std::string>())) model.net.add_bank(id.get<std::string>());

    std::map<std::string, Param<float>*> by_name;
    for_each_tensor(model, [&](Param<float>& p) { by_name[p.name] = &p; });

    const auto payload = manifest.parent_path() / j.at("payload").get<std::string>();
    std::ifstream bin(payload, std::ios::binary);
    if (!bin) throw FormatError("cannot open " + payload.string());
    const std::uint32_t count = get_u32(bin);
    if (count != by_name.size())
        throw FormatError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                          std::to_string(by_name.size()));
    for (std::uint32_t t = 0; t < count; ++t) {
        std::string name(get_u32(bin), '\0');
        bin.read(name.data(), static_cast<std::streamsize>(name.size()));
        std::vector<int> shape(get_u32(bin));
        for (auto& s : shape) s = static_cast<int>(get_u32(bin));
        auto it = by_name.find(name);
        if (it == by_name.end()) throw FormatError("unexpected tensor '" + name + "' in checkpoint");
        if (it->second->shape != shape) throw FormatError("shape mismatch for tensor '" + name + "'");
        for (auto& v : it->second->value) v = std::bit_cast<float>(get_u32(bin));
    }
    return model;
}

}  // namespace plume::detector
