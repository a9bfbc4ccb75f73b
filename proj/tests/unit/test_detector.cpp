#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "helpers.hpp"
#include "plume/detector/kernels.hpp"
#include "plume/detector/model.hpp"
#include "plume/detector/train.hpp"
#include "plume/errors.hpp"
#include "plume/evalkit/evalkit.hpp"
#include "plume/raster/geotiff.hpp"
#include "plume/synthetic/synthetic.hpp"
#include "plume/workflow/workflow.hpp"

using namespace plume;
using namespace plume::detector;
using raster::Mask;
using raster::Raster;

namespace {

constexpr std::array<int, kLevels> kTinyWidths{4, 6, 8, 8};

UnetConfig tiny(Backend b = Backend::Parallel) { return {kTinyWidths, b}; }

template <typename T>
Tensor<T> random_input(int n, int h, int w, std::uint64_t seed) {
    Tensor<T> x(n, kInputChannels, h, w);
    Rng rng(seed);
    for (int s = 0; s < n; ++s)
        for (int c = 0; c < kInputChannels; ++c)
            for (int i = 0; i < h * w; ++i)
                x.ptr(s, c)[i] = c == kDataChannels ? T(1) : static_cast<T>(normal(rng));
    return x;
}

template <typename T>
void randomize_film(FilmBank<T>& b, Rng& rng) {
    for (auto& p : b.gamma)
        for (auto& v : p.value) v = static_cast<T>(uniform(rng, 0.5, 1.5));
    for (auto& p : b.beta)
        for (auto& v : p.value) v = static_cast<T>(uniform(rng, -0.3, 0.3));
}

template <typename T>
void randomize_bn_stats(Unet<T>& net, Rng& rng) {
    for (auto& b : net.buffers()) {
        const bool var = b.name.find("var") != std::string::npos;
        for (auto& v : b.value) v = static_cast<T>(var ? uniform(rng, 0.5, 2.0) : uniform(rng, -0.2, 0.2));
    }
}

double max_abs_diff(const Tensor<float>& a, const Tensor<float>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
    return d;
}

// Weighted Bernoulli NLL and its logit gradient in double precision.
double bce(const Tensor<double>& logits, const Mask& target, double w, Tensor<double>* dlogits) {
    double sum = 0.0;
    const double n = static_cast<double>(target.size());
    if (dlogits) *dlogits = Tensor<double>(logits.n, 1, logits.h, logits.w);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits.data[i]));
        const double m = target[i % target.size()];
        sum -= w * m * std::log(p) + (1 - m) * std::log(1 - p);
        if (dlogits) dlogits->data[i] = -(w * m * (1 - p) - (1 - m) * p) / (n * logits.n);
    }
    return sum / (n * logits.n);
}

std::filesystem::path golden_dir() { return std::filesystem::path(PLUME_TEST_DATA_DIR) / "golden"; }

const rtlut::RtLut& lut() {
    static const rtlut::RtLut l =
        rtlut::build_lut(rtlut::AbsorptionModel::load(rtlut::default_model_path()), rtlut::default_dch4_grid(),
                         rtlut::default_amf_grid());
    return l;
}

struct SmallCorpus {
    synthetic::Corpus corpus;
    std::vector<synthetic::PairedScene> paired;
};

const SmallCorpus& small_corpus() {
    static const SmallCorpus sc = [] {
        synthetic::CorpusConfig cfg;
        cfg.train_sites = 2;
        cfg.shifted_site = false;
        cfg.crop = 32;
        cfg.scenes_per_site = 80;
        cfg.prevalence = 0.2;
        cfg.library_plumes = 12;
        cfg.seed = 3;
        SmallCorpus out;
        out.corpus = synthetic::generate_corpus(cfg, lut());
        out.paired = synthetic::pair_references(out.corpus);
        return out;
    }();
    return sc;
}

}  // namespace

TEST_CASE("GEMM variants match the reference") {
    Rng rng(1);
    const int M = 13, N = 29, K = 17;
    std::vector<double> A(M * K), B(K * N), At(K * M), Bt(N * K);
    for (auto& v : A) v = normal(rng);
    for (auto& v : B) v = normal(rng);
    for (int i = 0; i < M; ++i)
        for (int k = 0; k < K; ++k) At[k * M + i] = A[i * K + k];
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < N; ++j) Bt[j * K + k] = B[k * N + j];
    std::vector<double> ref(M * N, 0.5), c1(M * N, 0.5), c2(M * N, 0.5), c3(M * N, 0.5);
    kernels::gemm_reference(M, N, K, A.data(), false, B.data(), false, ref.data(), true);
    kernels::gemm_nn(M, N, K, A.data(), B.data(), c1.data(), true);
    kernels::gemm_tn(M, N, K, At.data(), B.data(), c2.data(), true);
    kernels::gemm_nt(M, N, K, A.data(), Bt.data(), c3.data(), true);
    for (int i = 0; i < M * N; ++i) {
        CHECK(c1[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        CHECK(c2[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        CHECK(c3[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
}

TEST_CASE("serial and parallel convolution kernels agree") {
    Rng rng(2);
    Tensor<double> x(2, 5, 12, 10);
    for (auto& v : x.data) v = normal(rng);
    const int cout = 7;
    std::vector<double> w(cout * 5 * 9), b(cout), wt(5 * cout * 4);
    for (auto& v : w) v = normal(rng);
    for (auto& v : b) v = normal(rng);
    for (auto& v : wt) v = normal(rng);

    Tensor<double> ys, yp;
    kernels::conv3x3_forward<double>(x, w, b, cout, ys, Backend::Serial);
    kernels::conv3x3_forward<double>(x, w, b, cout, yp, Backend::Parallel);
    REQUIRE(ys.same_shape(yp));
    for (std::size_t i = 0; i < ys.size(); ++i) CHECK(yp.data[i] == doctest::Approx(ys.data[i]).epsilon(1e-12));

    Tensor<double> dy(2, cout, 12, 10);
    for (auto& v : dy.data) v = normal(rng);
    std::vector<double> dws(w.size(), 0.0), dwp(w.size(), 0.0), dbs(cout, 0.0), dbp(cout, 0.0);
    Tensor<double> dxs, dxp;
    kernels::conv3x3_backward<double>(x, w, dy, dws, dbs, &dxs, Backend::Serial);
    kernels::conv3x3_backward<double>(x, w, dy, dwp, dbp, &dxp, Backend::Parallel);
    for (std::size_t i = 0; i < dws.size(); ++i) CHECK(dwp[i] == doctest::Approx(dws[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < dbs.size(); ++i) CHECK(dbp[i] == doctest::Approx(dbs[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < dxs.size(); ++i) CHECK(dxp.data[i] == doctest::Approx(dxs.data[i]).epsilon(1e-12));

    Tensor<double> ts, tp;
    kernels::tconv2_forward<double>(x, wt, b, cout, ts, Backend::Serial);
    kernels::tconv2_forward<double>(x, wt, b, cout, tp, Backend::Parallel);
    REQUIRE(ts.h == 24);
    for (std::size_t i = 0; i < ts.size(); ++i) CHECK(tp.data[i] == doctest::Approx(ts.data[i]).epsilon(1e-12));
}

TEST_CASE("serial and parallel networks agree") {
    Unet<float> a(tiny(Backend::Serial), 5);
    Unet<float> b(tiny(Backend::Parallel), 5);
    const auto x = random_input<float>(2, 32, 48, 6);
    const auto la = a.forward(x, {}, Mode::Eval);
    const auto lb = b.forward(x, {}, Mode::Eval);
    CHECK(max_abs_diff(la, lb) <= 1e-5);
}

TEST_CASE("identity FiLM reproduces the unconditioned network") {
    Unet<float> net(tiny(), 7);
    Rng rng(8);
    randomize_bn_stats(net, rng);
    const auto x = random_input<float>(1, 32, 32, 9);
    const auto plain = net.forward(x, {}, Mode::Eval);
    const auto& g = net.banks().at(kGenericBank);
    for (const auto& p : g.gamma)
        for (float v : p.value) CHECK(v == 1.0f);
    for (const auto& p : g.beta)
        for (float v : p.value) CHECK(v == 0.0f);
    const auto film = net.forward(x, {&g}, Mode::Eval);
    CHECK(max_abs_diff(plain, film) <= 1e-6);
}

TEST_CASE("density masking") {
    Unet<float> net(tiny(), 11);
    Rng rng(12);
    randomize_bn_stats(net, rng);

    SUBCASE("all-zero density") {
        auto a = random_input<float>(1, 16, 16, 1);
        auto b = random_input<float>(1, 16, 16, 2);
        Tensor<float> zero(1, kInputChannels, 16, 16, 0.0f);
        for (auto* t : {&a, &b})
            for (int i = 0; i < 256; ++i) t->ptr(0, kDataChannels)[i] = 0.0f;
        const auto la = net.forward(a, {}, Mode::Eval);
        const auto lb = net.forward(b, {}, Mode::Eval);
        const auto lz = net.forward(zero, {}, Mode::Eval);
        CHECK(la.data == lb.data);
        CHECK(la.data == lz.data);
    }
    SUBCASE("invalid pixels never influence the output") {
        auto a = random_input<float>(1, 32, 32, 3);
        for (int y = 5; y < 12; ++y)
            for (int x = 20; x < 30; ++x) a.at(0, kDataChannels, y, x) = 0.0f;
        auto b = a;
        Rng r2(4);
        for (int c = 0; c < kDataChannels; ++c)
            for (int y = 5; y < 12; ++y)
                for (int x = 20; x < 30; ++x) b.at(0, c, y, x) = static_cast<float>(normal(r2, 0.0, 10.0));
        CHECK(net.forward(a, {}, Mode::Eval).data == net.forward(b, {}, Mode::Eval).data);
    }
}

TEST_CASE("input shape errors") {
    Unet<float> net(tiny(), 1);
    CHECK_THROWS_AS(net.forward(random_input<float>(1, 24, 32, 1), {}, Mode::Eval), ShapeError);
    CHECK_THROWS_AS(net.forward(Tensor<float>(1, 15, 32, 32), {}, Mode::Eval), ShapeError);
    DetectorModel m(tiny(), 1);
    ModelInput in{random_input<float>(1, 20, 36, 2)};
    CHECK_THROWS_AS(forward(m, in, kGenericBank), ShapeError);
    const Prediction p = forward_padded(m, in, kGenericBank);
    CHECK(p.prob.rows() == 20);
    CHECK(p.prob.cols() == 36);
}

TEST_CASE("analytic gradients match finite differences") {
    Unet<double> net(tiny(Backend::Serial), 21);
    Rng rng(22);
    randomize_bn_stats(net, rng);
    randomize_film(net.banks().at(kGenericBank), rng);
    net.add_bank("site_x", kGenericBank);
    randomize_film(net.banks().at("site_x"), rng);
    const auto x = random_input<double>(2, 16, 16, 23);
    Mask target(16, 16, 0);
    for (int y = 4; y < 9; ++y)
        for (int c = 6; c < 12; ++c) target(y, c) = 1;

    auto* g = &net.banks().at(kGenericBank);
    auto* s = &net.banks().at("site_x");
    const std::vector<const FilmBank<double>*> cbanks = {g, s};
    const std::vector<FilmBank<double>*> banks = {g, s};
    auto eval_loss = [&] { return bce(net.forward(x, cbanks, Mode::Eval), target, 10.0, nullptr); };

    net.zero_grad();
    for (auto* b : banks) {
        for (auto& p : b->gamma) std::fill(p.grad.begin(), p.grad.end(), 0.0);
        for (auto& p : b->beta) std::fill(p.grad.begin(), p.grad.end(), 0.0);
    }
    Tensor<double> dlogits;
    bce(net.forward(x, cbanks, Mode::Eval), target, 10.0, &dlogits);
    net.backward(dlogits, banks);

    // 24 backbone weights plus 8 FiLM weights
    std::vector<Param<double>*> pool;
    for (auto& p : net.params()) pool.push_back(&p);
    std::vector<Param<double>*> film;
    for (auto* b : banks) {
        for (auto& p : b->gamma) film.push_back(&p);
        for (auto& p : b->beta) film.push_back(&p);
    }
    std::vector<std::pair<Param<double>*, std::size_t>> picks;
    for (int k = 0; k < 24; ++k) {
        auto* p = pool[uniform_index(rng, pool.size())];
        picks.emplace_back(p, uniform_index(rng, p->value.size()));
    }
    for (int k = 0; k < 8; ++k) {
        auto* p = film[uniform_index(rng, film.size())];
        picks.emplace_back(p, uniform_index(rng, p->value.size()));
    }

    const double h = 1e-4;
    for (auto [p, i] : picks) {
        const double orig = p->value[i];
        p->value[i] = orig + h;
        const double up = eval_loss();
        p->value[i] = orig - h;
        const double down = eval_loss();
        p->value[i] = orig;
        const double numeric = (up - down) / (2 * h);
        const double analytic = p->grad[i];
        INFO(p->name, "[", i, "] analytic ", analytic, " numeric ", numeric);
        CHECK(std::abs(analytic - numeric) <= 1e-3 * std::max({std::abs(analytic), std::abs(numeric), 1e-7}));
    }
}

TEST_CASE("translation covariance away from borders") {
    Unet<float> net(tiny(), 31);
    Rng rng(32);
    randomize_bn_stats(net, rng);
    const auto big = random_input<float>(1, 32, 224, 33);
    auto window = [&](int x0) {
        Tensor<float> t(1, kInputChannels, 32, 160);
        for (int c = 0; c < kInputChannels; ++c)
            for (int y = 0; y < 32; ++y)
                for (int x = 0; x < 160; ++x) t.at(0, c, y, x) = big.at(0, c, y, x + x0);
        return t;
    };
    const auto a = net.forward(window(0), {}, Mode::Eval);
    const auto b = net.forward(window(16), {}, Mode::Eval);
    double worst = 0.0;
    for (int y = 0; y < 32; ++y)
        for (int x = 64; x < 96; ++x)
            worst = std::max(worst, static_cast<double>(std::abs(b.at(0, 0, y, x) - a.at(0, 0, y, x + 16))));
    CHECK(worst <= 1e-4);
}

TEST_CASE("golden probabilities") {
    const auto dir = golden_dir();
    if (std::getenv("PLUME_WRITE_GOLDEN")) {
        std::filesystem::create_directories(dir);
        DetectorModel m(tiny(Backend::Serial), 41);
        Rng rng(42);
        randomize_bn_stats(m.net, rng);
        randomize_film(m.net.add_bank("site_g", kGenericBank), rng);
        m.version = "golden";
        save_checkpoint(m, dir / "model.json");
        const auto pair = synthetic::fixture_scene_pair(43, 32, 0.002);
        const ModelInput in = make_input(pair.scene, &pair.reference);
        std::ofstream(dir / "input.f32", std::ios::binary)
            .write(reinterpret_cast<const char*>(in.x.data.data()), static_cast<std::streamsize>(in.x.size() * 4));
        const Prediction p = forward(m, in, "site_g");
        raster::write_geotiff(dir / "prob.tif", {p.prob, {}});
    }
    REQUIRE(std::filesystem::exists(dir / "model.json"));
    DetectorModel m = load_checkpoint(dir / "model.json");
    m.net.set_backend(Backend::Parallel);
    ModelInput in{Tensor<float>(1, kInputChannels, 32, 32)};
    std::ifstream(dir / "input.f32", std::ios::binary)
        .read(reinterpret_cast<char*>(in.x.data.data()), static_cast<std::streamsize>(in.x.size() * 4));
    const Prediction p = forward(m, in, "site_g");
    const Raster want = raster::read_geotiff(dir / "prob.tif").grid;
    REQUIRE(want.same_shape(p.prob));
    double worst = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(p.prob[i] - want[i]));
    CHECK(worst <= 1e-5);
    CHECK(p.film_bank == "site_g");
    CHECK(p.model_version == "golden");
}

TEST_CASE("scene score") {
    SUBCASE("all zero") { CHECK(scene_score(Raster(16, 16, 0.0)) == 0.0); }
    SUBCASE("one ten-pixel blob") {
        Raster p(16, 16, 0.1);
        for (int c = 2; c < 12; ++c) p(5, c) = 0.6 + 0.03 * (c - 2);
        p(5, 7) = 0.93;
        p(5, 11) = 0.8;
        CHECK(scene_score(p) == doctest::Approx(0.93));
    }
    SUBCASE("isolated pixels are filtered") {
        Raster p(16, 16, 0.0);
        p(2, 2) = 0.99;
        p(10, 10) = 0.99;
        p(3, 3) = 0.99;  // diagonal neighbours are not connected
        CHECK(scene_score(p) == 0.0);
        CHECK(scene_score(p, 0.5, 1) == 0.99);
    }
    SUBCASE("raising a pixel never lowers the score") {
        Rng rng(5);
        for (int t = 0; t < 200; ++t) {
            Raster p(12, 12);
            for (auto& v : p) v = std::pow(uniform01(rng), 3.0);
            const double before = scene_score(p);
            const auto i = uniform_index(rng, p.size());
            p[i] = std::min(1.0, p[i] + uniform01(rng));
            CHECK(scene_score(p) >= before);
        }
    }
}

TEST_CASE("loss") {
    SUBCASE("perfect fit") {
        Raster p(8, 8, 0.0);
        Mask t(8, 8, 0);
        for (int i = 0; i < 20; ++i) {
            p[i] = 1.0;
            t[i] = 1;
        }
        CHECK(loss(p, t, Mask(8, 8, 1)) <= 10 * -std::log(1 - 1e-7) + 1e-12);
    }
    SUBCASE("closed form") {
        Raster p(8, 8, 0.5);
        Mask t(8, 8, 0);
        for (int i = 0; i < 32; ++i) t[i] = 1;
        CHECK(loss(p, t, Mask(8, 8, 1)) == doctest::Approx(5.5 * std::log(2.0)).epsilon(1e-12));
    }
    SUBCASE("nothing valid") { CHECK_THROWS_AS(loss(Raster(4, 4, 0.5), Mask(4, 4, 1), Mask(4, 4, 0)), EmptyLossError); }
    SUBCASE("logit gradient matches the loss") {
        Tensor<float> logits(1, 1, 4, 4);
        Rng rng(6);
        for (auto& v : logits.data) v = static_cast<float>(normal(rng));
        Mask t(4, 4, 0), valid(4, 4, 1);
        t(1, 1) = t(1, 2) = 1;
        valid(3, 3) = 0;
        Tensor<float> d;
        const double l = loss_and_grad(logits, {t}, {valid}, 10.0, d);
        CHECK(l == doctest::Approx(loss(sigmoid(logits), t, valid)).epsilon(1e-5));
        CHECK(d.data[15] == 0.0f);
        const float eps = 1e-2f;
        for (int i : {0, 5, 6, 9}) {
            Tensor<float> lp = logits, lm = logits;
            lp.data[i] += eps;
            lm.data[i] -= eps;
            const double num = (loss(sigmoid(lp), t, valid) - loss(sigmoid(lm), t, valid)) / (2 * eps);
            CHECK(d.data[i] == doctest::Approx(num).epsilon(1e-3));
        }
    }
}

TEST_CASE("model inputs") {
    auto pair = synthetic::fixture_scene_pair(51, 32, 0.002);
    pair.scene.validity(3, 4) = 0;
    pair.scene.band(raster::Band::Red)(6, 6) = raster::kNoData;
    const ModelInput in = make_input(pair.scene, &pair.reference);
    CHECK(in.x.c == kInputChannels);
    CHECK(in.density(3, 4) == 0.0f);
    CHECK(in.density(6, 6) == 0.0f);
    CHECK(in.density(10, 10) == 1.0f);
    for (int c = 0; c < kDataChannels; ++c) {
        CHECK(in.x.at(0, c, 3, 4) == 0.0f);
        CHECK(in.x.at(0, c, 6, 6) == 0.0f);
    }
    // wind channels are spatially constant on valid pixels
    CHECK(in.x.at(0, 13, 0, 0) == in.x.at(0, 13, 20, 17));
    CHECK(in.x.at(0, 14, 0, 0) == in.x.at(0, 14, 31, 31));
    const ModelInput single = make_input(pair.scene, nullptr);
    CHECK(single.x.c == kInputChannels);
}

TEST_CASE("checkpoint round trip") {
    testutil::TempDir dir("ckpt");
    DetectorModel m(tiny(), 61);
    Rng rng(62);
    randomize_bn_stats(m.net, rng);
    randomize_film(m.net.add_bank("site_q"), rng);
    m.version = "v-test";
    m.pixel_threshold = 0.4;
    save_checkpoint(m, dir.path() / "model.ckpt");
    DetectorModel back = load_checkpoint(dir.path() / "model.ckpt");
    CHECK(back.version == "v-test");
    CHECK(back.pixel_threshold == 0.4);
    CHECK(back.net.has_bank("site_q"));
    CHECK(back.net.config().widths == kTinyWidths);
    ModelInput in{random_input<float>(1, 16, 32, 63)};
    const auto a = forward(m, in, "site_q");
    const auto b = forward(back, in, "site_q");
    CHECK(a.prob == b.prob);
    CHECK(forward(back, in, "unknown").film_bank == kGenericBank);
}

TEST_CASE("train config") {
    const TrainConfig d;
    CHECK(d.epochs == 170);
    CHECK(d.samples_per_epoch == 65536);
    CHECK(d.lr == 5e-4);
    CHECK(d.weight_decay == 1e-6);
    CHECK(d.positive_weight == 10.0);
    const auto j = d.to_json();
    CHECK(j.at("lr").get<double>() == 5e-4);
    CHECK(j.at("weight_decay").get<double>() == 1e-6);
    CHECK(j.at("selection_metric") == "mAP");
    CHECK(TrainConfig::from_json(j).batch_size == d.batch_size);
    TrainConfig bad = d;
    bad.lr = -1.0;
    CHECK_THROWS(bad.validate());
}

TEST_CASE("training is deterministic for a fixed seed") {
    const auto& sc = small_corpus();
    const auto data =
        workflow::build_training_data(sc.corpus, sc.paired, lut(), [](std::size_t) { return true; });
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.samples_per_epoch = 16;
    cfg.batch_size = 8;
    cfg.seed = 5;
    simulator::SimulationPolicy policy;
    const auto r1 = train(DetectorModel(tiny(), 1), data, policy, cfg);
    const auto r2 = train(DetectorModel(tiny(), 1), data, policy, cfg);
    REQUIRE(r1.log.epochs.size() == 1);
    CHECK(r1.log.epochs[0].first_batch_loss == r2.log.epochs[0].first_batch_loss);
    CHECK(r1.log.epochs[0].mean_loss == r2.log.epochs[0].mean_loss);
    CHECK(std::isfinite(r1.log.epochs[0].mean_loss));
    CHECK(r1.log.config.at("lr").get<double>() == 5e-4);
    CHECK(r1.log.config.at("weight_decay").get<double>() == 1e-6);
}

TEST_CASE("FiLM finetuning") {
    const auto& sc = small_corpus();
    auto examples = workflow::site_examples(sc.corpus, sc.paired, 0, synthetic::Split::Train);
    std::vector<simulator::Example> positives, negatives;
    for (const auto& e : examples) (workflow::is_positive(*e.scene) ? positives : negatives).push_back(e);
    REQUIRE(positives.size() >= 5);

    DetectorModel model(tiny(), 71);
    Rng rng(72);
    randomize_bn_stats(model.net, rng);
    FinetuneConfig cfg;
    cfg.steps = 5;
    cfg.batch_size = 4;

    SUBCASE("four positives are not enough") {
        std::vector<simulator::Example> few(positives.begin(), positives.begin() + 4);
        few.insert(few.end(), negatives.begin(), negatives.end());
        CHECK_THROWS_AS(finetune_film(model, few, "site_new", cfg), InsufficientPositives);
    }
    SUBCASE("GENERIC cannot be finetuned") { CHECK_THROWS_AS(finetune_film(model, examples, kGenericBank, cfg), BadRequest); }
    SUBCASE("only the named bank changes") {
        model.net.add_bank("other");
        const auto params_before = model.net.params();
        const auto buffers_before = model.net.buffers();
        const auto generic_before = model.net.banks().at(kGenericBank);
        const auto other_before = model.net.banks().at("other");
        ModelInput in{random_input<float>(1, 32, 32, 73)};
        const auto generic_prob = forward(model, in, kGenericBank).prob;

        finetune_film(model, examples, "site_new", cfg);

        REQUIRE(model.net.has_bank("site_new"));
        for (std::size_t i = 0; i < params_before.size(); ++i) CHECK(model.net.params()[i].value == params_before[i].value);
        for (std::size_t i = 0; i < buffers_before.size(); ++i)
            CHECK(model.net.buffers()[i].value == buffers_before[i].value);
        for (int l = 0; l < kFilmLayers; ++l) {
            CHECK(model.net.banks().at(kGenericBank).gamma[l].value == generic_before.gamma[l].value);
            CHECK(model.net.banks().at(kGenericBank).beta[l].value == generic_before.beta[l].value);
            CHECK(model.net.banks().at("other").gamma[l].value == other_before.gamma[l].value);
        }
        CHECK(forward(model, in, kGenericBank).prob == generic_prob);
        bool moved = false;
        for (int l = 0; l < kFilmLayers; ++l)
            moved |= model.net.banks().at("site_new").gamma[l].value != generic_before.gamma[l].value;
        CHECK(moved);
    }
}

TEST_CASE("validation mAP on raw examples") {
    const auto& sc = small_corpus();
    const auto val = workflow::split_examples(sc.corpus, sc.paired, synthetic::Split::Validation,
                                              [](std::size_t) { return true; },
                                              [](std::size_t) { return std::string(kGenericBank); });
    REQUIRE(!val.empty());
    DetectorModel model(tiny(), 81);
    const double m = validation_map(model, val);
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
    const auto records = workflow::score_examples(model, val);
    CHECK(records.size() == val.size());
    CHECK(evalkit::average_precision(records) == doctest::Approx(m));
}
