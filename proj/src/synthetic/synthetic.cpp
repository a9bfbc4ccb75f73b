#include "plume/synthetic/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "plume/errors.hpp"
#include "plume/quantify/quantify.hpp"
#include "plume/raster/validity.hpp"
#include "plume/retrieval/retrieval.hpp"

namespace plume::synthetic {

using nlohmann::json;
using raster::Band;
using raster::Mask;
using raster::PixelPos;
using raster::Raster;
using raster::Scene;
using raster::Wind;

namespace {

// Bare-soil-like reflectance, BLUE..SWIR2.
constexpr std::array<double, raster::kBandCount> kBaseSpectrum = {0.10, 0.13, 0.16, 0.25, 0.30, 0.23};

// Smooth random field with unit standard deviation.
Raster smooth_field(int rows, int cols, Rng& rng, int blobs) {
    Raster f(rows, cols, 0.0);
    const double scale = std::max(rows, cols);
    for (int k = 0; k < blobs; ++k) {
        const double r0 = uniform(rng, 0, rows), c0 = uniform(rng, 0, cols);
        const double s = uniform(rng, 0.05, 0.3) * scale;
        const double a = uniform(rng, -1, 1);
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const double d2 = (r - r0) * (r - r0) + (c - c0) * (c - c0);
                f(r, c) += a * std::exp(-d2 / (2 * s * s));
            }
    }
    const double fx = uniform(rng, 0.05, 0.2), fy = uniform(rng, 0.05, 0.2), ph = uniform(rng, 0, 6.28);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) f(r, c) += 0.3 * std::sin(fx * c + fy * r + ph);
    double mean = 0, sq = 0;
    for (double v : f) mean += v;
    mean /= static_cast<double>(f.size());
    for (double v : f) sq += (v - mean) * (v - mean);
    const double sd = std::sqrt(sq / static_cast<double>(f.size()));
    for (double& v : f) v = sd > 0 ? (v - mean) / sd : 0.0;
    return f;
}

Wind random_wind(double mean_speed, Rng& rng) {
    const double speed = std::clamp(std::abs(normal(rng, mean_speed, 2.0)), 0.5, 12.0);
    const double dir = uniform(rng, 0, 2 * std::numbers::pi);
    return {speed * std::cos(dir), speed * std::sin(dir)};
}

}  // namespace

Surface make_surface(int rows, int cols, const SiteStyle& style, Rng& rng) {
    Surface s;
    const Raster shared = smooth_field(rows, cols, rng, 10);
    for (int b = 0; b < raster::kBandCount; ++b) {
        const Raster own = smooth_field(rows, cols, rng, 6);
        s.bands[b] = Raster(rows, cols);
        for (std::size_t i = 0; i < own.size(); ++i) {
            const double rel = 1.0 + style.texture * (0.9 * shared[i] + 0.1 * own[i]);
            s.bands[b][i] = kBaseSpectrum[b] * style.brightness * std::max(rel, 0.2);
        }
    }
    return s;
}

Scene make_pass(const Surface& surface, const SiteStyle& style, raster::Timestamp t, Wind wind, Rng& rng,
                const PassOptions& opts) {
    Scene s;
    s.site_id = style.site_id;
    s.satellite = style.satellite;
    s.timestamp = t;
    s.wind = wind;
    s.wind_source = "synthetic";
    s.source_px = {surface.rows() / 2, surface.cols() / 2};
    const double common = 1.0 + normal(rng, 0.0, opts.brightness_jitter);
    for (int b = 0; b < raster::kBandCount; ++b) {
        const double g = common * (1.0 + normal(rng, 0.0, opts.brightness_jitter / 3));
        Raster band(surface.rows(), surface.cols());
        for (std::size_t i = 0; i < band.size(); ++i)
            band[i] = std::max(1e-3, surface.bands[b][i] * g + normal(rng, 0.0, style.noise));
        s.bands[b] = std::move(band);
    }
    if (opts.clouds && bernoulli(rng, style.cloud_probability)) {
        const int n = 1 + static_cast<int>(uniform_index(rng, 3));
        for (int k = 0; k < n; ++k) {
            const double r0 = uniform(rng, 0, s.rows()), c0 = uniform(rng, 0, s.cols());
            const double rad = uniform(rng, 0.06, 0.35) * s.rows();
            const double cloud = uniform(rng, 0.35, 0.6);
            // Shadow falls away from the sun (azimuth 135 deg), i.e. up-left.
            const double off = 0.12 * s.rows();
            for (int r = 0; r < s.rows(); ++r)
                for (int c = 0; c < s.cols(); ++c) {
                    const double dc = std::hypot(r - r0, c - c0);
                    const double ds = std::hypot(r - (r0 - off), c - (c0 - off));
                    if (ds < rad && dc >= rad)
                        for (auto& band : s.bands) band(r, c) *= 0.2;
                    if (dc < rad)
                        for (int b = 0; b < raster::kBandCount; ++b)
                            s.bands[b](r, c) = cloud * (b >= 4 ? 0.7 : 1.0) + normal(rng, 0.0, 0.01);
                }
        }
    }
    s.validity = raster::usable_pixels(raster::ThresholdCloudMasker{}.classify(s));
    return s;
}

PlumeShape random_shape(Rng& rng) {
    PlumeShape s;
    s.decay_px = uniform(rng, 7.0, 16.0);
    s.sigma0_px = uniform(rng, 1.2, 2.2);
    s.spread = uniform(rng, 0.12, 0.3);
    return s;
}

simulator::PlumeRecord make_plume(int rows, int cols, PixelPos source, Wind wind, double peak_ppbm,
                                  const PlumeShape& shape, const std::string& plume_id) {
    if (wind.speed() <= 0) throw DirectionUndefined("plume wind must be non-zero");
    const double th = simulator::image_wind_angle(wind);
    const double ux = std::cos(th), uy = std::sin(th);
    Raster f(rows, cols, 0.0);
    double peak = 0.0;
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            const double dx = c - source.col, dy = r - source.row;
            const double along = dx * ux + dy * uy;
            const double cross = -dx * uy + dy * ux;
            if (along < -1.0) continue;
            const double s = std::max(along, 0.0) + 1.0;
            const double sig = shape.sigma0_px + shape.spread * s;
            const double v = std::exp(-cross * cross / (2 * sig * sig)) * std::exp(-s / shape.decay_px) / sig;
            f(r, c) = v;
            peak = std::max(peak, v);
        }
    simulator::PlumeRecord p;
    p.plume_id = plume_id;
    p.wind = wind;
    p.source_px = source;
    p.mask = Mask(rows, cols, 0);
    p.dch4 = Raster(rows, cols, 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) {
        if (f[i] >= shape.mask_fraction * peak) {
            p.mask[i] = 1;
            p.dch4[i] = f[i] / peak * peak_ppbm;
        }
    }
    p.flux_kg_h = quantify::flux(p.dch4, p.mask, wind).flux_kg_h;
    p.validate();
    return p;
}

std::vector<simulator::PlumeRecord> fixture_plumes() {
    std::vector<simulator::PlumeRecord> out;
    for (int k = 0; k < 12; ++k) {
        const double speed = 2.0 + 0.5 * k;
        const double dir = 2 * std::numbers::pi * k / 12.0 + 0.3;
        const Wind w{speed * std::cos(dir), speed * std::sin(dir)};
        PlumeShape shape;
        shape.decay_px = 9.0 + (k % 4) * 2.0;
        shape.sigma0_px = 1.5 + 0.1 * (k % 3);
        shape.spread = 0.15 + 0.03 * (k % 3);
        const double peak = 4000.0 + 500.0 * (k % 7);
        auto p = make_plume(64, 64, {32, 32}, w, peak, shape, "fx" + std::to_string(k));
        p.site_id = "fixture";
        p.timestamp = raster::parse_timestamp("2020-06-01T10:00:00Z");
        out.push_back(std::move(p));
    }
    return out;
}

FixturePair fixture_scene_pair(std::uint64_t seed, int size, double noise) {
    Rng rng(seed);
    SiteStyle style;
    style.site_id = "fixture";
    style.noise = noise;
    style.texture = 0.12;
    const Surface surface = make_surface(size, size, style, rng);
    PassOptions opts;
    opts.clouds = false;
    opts.brightness_jitter = 0.02;
    const auto t = raster::parse_timestamp("2020-06-01T10:00:00Z");
    FixturePair pair;
    pair.reference = make_pass(surface, style, t - std::chrono::days(10), {3.0, 1.0}, rng, opts);
    pair.scene = make_pass(surface, style, t, {3.0, 1.0}, rng, opts);
    return pair;
}

// ---------------------------------------------------------------- corpus

std::string_view split_name(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Validation: return "validation";
        case Split::Test: return "test";
    }
    return "?";
}

namespace {

Split parse_split(std::string_view s) {
    if (s == "train") return Split::Train;
    if (s == "validation") return Split::Validation;
    if (s == "test") return Split::Test;
    throw FormatError("unknown split '" + std::string(s) + "'");
}

const std::array<const char*, 9> kCountries = {"Turkmenistan", "Algeria", "United States", "Iran", "Kazakhstan",
                                               "Libya",        "Iraq",    "Oman",          "Egypt"};

std::vector<SiteStyle> corpus_styles(const CorpusConfig& cfg, Rng& rng) {
    std::vector<SiteStyle> styles;
    const int n = cfg.train_sites + (cfg.shifted_site ? 1 : 0);
    for (int k = 0; k < n; ++k) {
        SiteStyle s;
        char id[16];
        std::snprintf(id, sizeof id, "site_%02d", k + 1);
        s.site_id = id;
        s.country = kCountries[k % kCountries.size()];
        s.sector = k % 4 == 3 ? raster::Sector::Landfill : raster::Sector::OilGas;
        s.lon = uniform(rng, 20, 60);
        s.lat = uniform(rng, 20, 45);
        s.satellite = k % 3 == 2 ? raster::Satellite::L8 : raster::Satellite::S2A;
        s.brightness = uniform(rng, 0.8, 1.2);
        s.texture = uniform(rng, 0.08, 0.2);
        s.noise = uniform(rng, 0.0015, 0.003);
        s.mean_wind = uniform(rng, 3.0, 5.0);
        const bool shifted = cfg.shifted_site && k == n - 1;
        if (shifted) {
            // Brighter, rougher ground and much weaker emitters.
            s.brightness = 1.5;
            s.texture = 0.3;
            s.noise = 0.003;
            s.plume_strength = 0.35;
        }
        styles.push_back(s);
    }
    return styles;
}

}  // namespace

Corpus generate_corpus(const CorpusConfig& cfg, const rtlut::RtLut& lut) {
    if (cfg.train_sites <= 0 || cfg.scenes_per_site <= 0 || cfg.crop < 16) throw BadRequest("bad corpus config");
    Corpus corpus;
    corpus.config = cfg;
    Rng rng(cfg.seed);
    corpus.styles = corpus_styles(cfg, rng);
    for (const auto& st : corpus.styles)
        corpus.sites.push_back({st.site_id, st.lon, st.lat, st.country, st.sector, false, true, std::nullopt});

    const auto start = std::chrono::sys_days{std::chrono::year{cfg.first_year} / 1 / 1};
    const auto end = std::chrono::sys_days{std::chrono::year{cfg.last_year + 1} / 1 / 1};
    const double span_days = std::chrono::duration<double>(end - start).count() / 86400.0;
    const double cadence = span_days / cfg.scenes_per_site;

    for (std::size_t site = 0; site < corpus.styles.size(); ++site) {
        const auto& style = corpus.styles[site];
        Rng srng = fork_rng(cfg.seed, site + 1);
        const Surface surface = make_surface(cfg.crop, cfg.crop, style, srng);
        for (int i = 0; i < cfg.scenes_per_site; ++i) {
            const auto t = std::chrono::floor<std::chrono::seconds>(
                start + std::chrono::duration<double>((i * cadence + 0.5) * 86400.0 + uniform(srng, 0, 3600)));
            CorpusScene cs;
            cs.site = site;
            cs.scene = make_pass(surface, style, t, random_wind(style.mean_wind, srng), srng);
            const int year = static_cast<int>(std::chrono::year_month_day{std::chrono::floor<std::chrono::days>(t)}.year());
            cs.split = year == cfg.test_year ? Split::Test : year == cfg.validation_year ? Split::Validation : Split::Train;
            if (bernoulli(srng, cfg.prevalence) && raster::is_usable(cs.scene)) {
                const double peak = uniform(srng, 2500.0, 9000.0) * style.plume_strength;
                auto plume = make_plume(cfg.crop, cfg.crop, cs.scene.source_px, cs.scene.wind, peak,
                                        random_shape(srng), style.site_id + "_" + std::to_string(i));
                cs.scene = simulator::inject_plume(cs.scene, plume, lut);
                cs.scene.synthetic = false;  // a "real" plume of the corpus
                cs.flux_kg_h = plume.flux_kg_h;
            }
            corpus.scenes.push_back(std::move(cs));
        }
    }

    Rng lrng = fork_rng(cfg.seed, 1000);
    for (int k = 0; k < cfg.library_plumes; ++k) {
        const Wind w = random_wind(4.0, lrng);
        auto p = make_plume(cfg.crop, cfg.crop, {cfg.crop / 2, cfg.crop / 2}, w, uniform(lrng, 2500.0, 9000.0),
                            random_shape(lrng), "lib" + std::to_string(k));
        p.site_id = "library";
        corpus.library.push_back(std::move(p));
    }
    return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& root) {
    std::filesystem::create_directories(root);
    raster::save_site_registry(corpus.sites, root / "sites.csv");
    json scenes = json::array();
    for (const auto& cs : corpus.scenes) {
        const std::string rel = "scenes/" + cs.scene.site_id + "/" + raster::format_timestamp_compact(cs.scene.timestamp);
        raster::save_scene(cs.scene, root / rel);
        json e = {{"path", rel}, {"split", std::string(split_name(cs.split))}, {"site", cs.site}};
        if (cs.flux_kg_h) e["flux_kg_h"] = *cs.flux_kg_h;
        scenes.push_back(e);
    }
    for (const auto& p : corpus.library) simulator::save_plume(p, root / "plumes");
    const auto& c = corpus.config;
    json j = {{"format", "plume-corpus/1"},
              {"config",
               {{"train_sites", c.train_sites}, {"shifted_site", c.shifted_site}, {"crop", c.crop},
                {"scenes_per_site", c.scenes_per_site}, {"prevalence", c.prevalence}, {"first_year", c.first_year},
                {"last_year", c.last_year}, {"validation_year", c.validation_year}, {"test_year", c.test_year},
                {"library_plumes", c.library_plumes}, {"seed", c.seed}}},
              {"scenes", scenes}};
    std::ofstream(root / "corpus.json") << j.dump(1) << '\n';
}

Corpus load_corpus(const std::filesystem::path& root) {
    std::ifstream in(root / "corpus.json");
    if (!in) throw FormatError("no corpus.json under " + root.string());
    const json j = json::parse(in);
    Corpus corpus;
    const auto& c = j.at("config");
    auto& cfg = corpus.config;
    cfg.train_sites = c.at("train_sites");
    cfg.shifted_site = c.at("shifted_site");
    cfg.crop = c.at("crop");
    cfg.scenes_per_site = c.at("scenes_per_site");
    cfg.prevalence = c.at("prevalence");
    cfg.first_year = c.at("first_year");
    cfg.last_year = c.at("last_year");
    cfg.validation_year = c.at("validation_year");
    cfg.test_year = c.at("test_year");
    cfg.library_plumes = c.at("library_plumes");
    cfg.seed = c.at("seed");
    corpus.sites = raster::load_site_registry(root / "sites.csv");
    for (const auto& site : corpus.sites) {
        SiteStyle s;
        s.site_id = site.site_id;
        s.country = site.country;
        s.sector = site.sector;
        s.lon = site.lon;
        s.lat = site.lat;
        corpus.styles.push_back(s);
    }
    for (const auto& e : j.at("scenes")) {
        CorpusScene cs;
        cs.scene = raster::load_scene(root / e.at("path").get<std::string>());
        cs.split = parse_split(e.at("split").get<std::string>());
        cs.site = e.at("site");
        if (e.contains("flux_kg_h")) cs.flux_kg_h = e["flux_kg_h"].get<double>();
        corpus.scenes.push_back(std::move(cs));
    }
    if (std::filesystem::exists(root / "plumes")) corpus.library = simulator::load_plume_library(root / "plumes");
    return corpus;
}

std::vector<PairedScene> pair_references(const Corpus& corpus) {
    std::map<std::size_t, std::vector<const Scene*>> by_site;
    for (const auto& cs : corpus.scenes) by_site[cs.site].push_back(&cs.scene);
    std::vector<PairedScene> out;
    for (const auto& cs : corpus.scenes) {
        PairedScene p{&cs, nullptr};
        const auto& hist = by_site[cs.site];
        try {
            const auto choice = retrieval::select_reference(std::span<const Scene* const>(hist), cs.scene);
            p.reference = hist[choice.index];
        } catch (const NoReferenceError&) {
        }
        out.push_back(p);
    }
    return out;
}

}  // namespace plume::synthetic
