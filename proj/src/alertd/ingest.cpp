#include "plume/alertd/ingest.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>

#include "plume/errors.hpp"
#include "plume/quantify/quantify.hpp"
#include "plume/raster/geotiff.hpp"
#include "plume/retrieval/retrieval.hpp"

namespace plume::alertd {

namespace fs = std::filesystem;
using raster::Timestamp;

std::string SceneHandle::scene_id() const { return site_id + "/" + raster::format_timestamp_compact(timestamp); }

std::vector<SceneHandle> DirectorySceneSource::list(const std::string& site_id, Timestamp from, Timestamp to) const {
    std::error_code ec;
    if (!fs::is_directory(root_, ec)) throw IngestDeferred("scene root unreachable: " + root_.string());
    std::vector<SceneHandle> out;
    const fs::path dir = root_ / site_id;
    if (!fs::is_directory(dir, ec)) return out;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (!e.is_directory()) continue;
        Timestamp t;
        try {
            t = raster::parse_timestamp(e.path().filename().string());
        } catch (const Error&) {
            continue;
        }
        if (t >= from && t < to) out.push_back({site_id, t, e.path()});
    }
    if (ec) throw IngestDeferred("listing " + dir.string() + ": " + ec.message());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.timestamp < b.timestamp; });
    return out;
}

raster::Scene DirectorySceneSource::load(const SceneHandle& h) const { return raster::load_scene(h.bundle); }

nlohmann::json IngestReport::to_json() const {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& x : alerts) a.push_back(x.to_json());
    return {{"alerts", a}, {"rejected", rejected}, {"failed", failed}, {"skipped", skipped}};
}

fs::path product_dir(const fs::path& product_root, const std::string& scene_id) { return product_root / scene_id; }

raster::Mask plume_mask(const raster::Raster& prob, double threshold, int min_blob_px) {
    const int rows = prob.rows(), cols = prob.cols();
    raster::Mask out(rows, cols, 0);
    std::vector<int> label(prob.size(), 0);
    std::vector<int> stack, members;
    int next = 0;
    for (int start = 0; start < rows * cols; ++start) {
        if (label[start] || !(prob[start] >= threshold)) continue;
        label[start] = ++next;
        stack.assign(1, start);
        members.clear();
        while (!stack.empty()) {
            const int p = stack.back();
            stack.pop_back();
            members.push_back(p);
            const int r = p / cols, c = p % cols;
            const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
            for (const auto& n : nb) {
                if (n[0] < 0 || n[0] >= rows || n[1] < 0 || n[1] >= cols) continue;
                const int q = n[0] * cols + n[1];
                if (!label[q] && prob[q] >= threshold) {
                    label[q] = next;
                    stack.push_back(q);
                }
            }
        }
        if (static_cast<int>(members.size()) >= min_blob_px)
            for (int p : members) out[p] = 1;
    }
    return out;
}

namespace {

raster::Raster mask_to_raster(const raster::Mask& m) {
    raster::Raster r(m.rows(), m.cols(), 0.0);
    for (std::size_t i = 0; i < m.size(); ++i) r[i] = m[i] ? 1.0 : 0.0;
    return r;
}

std::optional<quantify::FluxEstimate> try_flux(const raster::Raster& dch4, const raster::Mask& mask,
                                               raster::Wind wind) {
    try {
        return quantify::flux(dch4, mask, wind);
    } catch (const EmptyMask&) {
        return std::nullopt;
    } catch (const WindUndefined&) {
        return std::nullopt;
    }
}

Alert score_scene(IngestContext& ctx, const raster::SiteRecord& site, const SceneHandle& h, raster::Scene& scene) {
    const auto& opt = ctx.options;
    retrieval::RetrievalProduct prod;
    raster::Scene reference;
    bool have_reference = false;
    if (!site.offshore) {
        const Timestamp from = h.timestamp - std::chrono::seconds(static_cast<long>(opt.lookback_days * 86400.0));
        std::vector<raster::Scene> history;
        for (const auto& past : ctx.source.list(site.site_id, from, h.timestamp)) {
            try {
                auto s = ctx.source.load(past);
                if (raster::is_usable(s)) history.push_back(std::move(s));
            } catch (const Error& e) {
                spdlog::warn("ingest: skipping history pass {}: {}", past.scene_id(), e.what());
            }
        }
        try {
            const auto choice = retrieval::select_reference(std::span<const raster::Scene>(history), scene,
                                                            opt.lookback_days);
            reference = std::move(history[choice.index]);
            have_reference = true;
        } catch (const NoReferenceError& e) {
            spdlog::warn("ingest: {} has no reference pass, falling back to MBSP: {}", h.scene_id(), e.what());
        }
    }
    if (have_reference)
        prod = retrieval::mbmp(scene, reference, ctx.lut);
    else
        prod = retrieval::mbsp(scene, ctx.lut);

    const auto input = detector::make_input(scene, have_reference ? reference : scene, prod.delta_r, prod.valid,
                                            ctx.model.norm);
    const std::string bank = site.film_bank_id.value_or(site.site_id);
    auto pred = detector::forward_padded(ctx.model, input, bank);
    // stored as float32, so score what gets stored
    for (auto& v : pred.prob) v = static_cast<float>(v);
    pred.scene_score = detector::scene_score(pred.prob, pred.pixel_threshold, pred.min_blob_px);
    const raster::Mask mask = plume_mask(pred.prob, pred.pixel_threshold, pred.min_blob_px);
    const auto fe = try_flux(prod.dch4, mask, scene.wind);

    const fs::path dir = product_dir(opt.product_root, h.scene_id());
    fs::create_directories(dir);
    retrieval::save_product(prod, scene.geo, dir);
    raster::write_geotiff(dir / "prob.tif", {pred.prob, scene.geo});
    raster::write_geotiff(dir / "mask.tif", {mask_to_raster(mask), scene.geo});

    PredictionRecord rec;
    rec.scene_id = h.scene_id();
    rec.model_version = ctx.model.version;
    rec.film_bank = pred.film_bank;
    rec.retrieval = std::string(retrieval::kind_name(prod.kind));
    rec.reference_id = prod.reference_id;
    rec.scene_score = pred.scene_score;
    rec.pixel_threshold = pred.pixel_threshold;
    rec.min_blob_px = pred.min_blob_px;
    rec.product_dir = dir.string();
    rec.wind = scene.wind;
    rec.flux = fe ? fe->to_json() : nlohmann::json(nullptr);
    {
        nlohmann::json j = pred.to_json();
        j["scene_id"] = rec.scene_id;
        j["retrieval"] = rec.retrieval;
        j["reference_id"] = rec.reference_id;
        j["flux"] = rec.flux;
        j["wind"] = {{"u", scene.wind.u}, {"v", scene.wind.v}, {"source", scene.wind_source}};
        std::ofstream(dir / "prediction.json") << j.dump(2) << '\n';
    }
    ctx.store.put_prediction(rec);

    Alert a;
    a.site_id = site.site_id;
    a.scene_id = h.scene_id();
    a.timestamp = raster::format_timestamp(scene.timestamp);
    a.satellite = std::string(raster::satellite_name(scene.satellite));
    a.country = site.country;
    a.scene_score = pred.scene_score;
    if (fe) {
        a.flux_kg_h = fe->flux_kg_h;
        a.uncertainty_kg_h = fe->uncertainty_kg_h;
    }
    a.model_version = ctx.model.version;
    return a;
}

}  // namespace

IngestReport run_ingest(IngestContext& ctx, Timestamp from, Timestamp to) {
    IngestReport report;
    const raster::ThresholdCloudMasker masker(ctx.options.masker);
    for (const auto& site : ctx.store.sites()) {
        if (!site.active) continue;
        const auto handles = ctx.source.list(site.site_id, from, to);
        std::optional<Timestamp> newest;
        for (const auto& h : handles) {
            const std::string id = h.scene_id();
            if (const auto prev = ctx.store.scene(id); prev && prev->state != SceneState::Failed) {
                ++report.skipped;
                continue;
            }
            SceneRecord rec;
            rec.scene_id = id;
            rec.site_id = site.site_id;
            rec.timestamp = raster::format_timestamp(h.timestamp);
            rec.bundle = h.bundle.string();
            try {
                auto scene = ctx.source.load(h);
                rec.satellite = std::string(raster::satellite_name(scene.satellite));
                const auto cls = masker.classify(scene);
                const auto vr = raster::validity_report(scene, cls);
                const auto clear = raster::usable_pixels(cls);
                for (std::size_t i = 0; i < clear.size(); ++i) scene.validity[i] = scene.validity[i] && clear[i];
                rec.fraction_cloud = vr.fraction_cloud;
                rec.fraction_shadow = vr.fraction_shadow;
                rec.fraction_missing = vr.fraction_missing;
                rec.usable = vr.usable && raster::is_usable(scene);
                if (!rec.usable) {
                    rec.state = SceneState::Rejected;
                    ctx.store.put_scene(rec);
                    report.rejected.push_back(id);
                    spdlog::info("ingest: {} rejected (cloud {:.2f}, shadow {:.2f}, missing {:.2f})", id,
                                 vr.fraction_cloud, vr.fraction_shadow, vr.fraction_missing);
                } else {
                    Alert a = score_scene(ctx, site, h, scene);
                    rec.state = SceneState::Scored;
                    ctx.store.put_scene(rec);
                    if (auto existing = ctx.store.alert_for_scene(id))
                        a = *existing;
                    else
                        a = ctx.store.create_alert(a);
                    report.alerts.push_back(a);
                    spdlog::info("ingest: {} scored {:.4f}", id, a.scene_score);
                }
                newest = std::max(newest.value_or(h.timestamp), h.timestamp);
            } catch (const IngestDeferred&) {
                throw;
            } catch (const std::exception& e) {
                spdlog::error("ingest: {} failed: {}", id, e.what());
                rec.state = SceneState::Failed;
                rec.usable = false;
                rec.error = e.what();
                ctx.store.put_scene(rec);
                report.failed.push_back(id);
            }
        }
        if (newest) ctx.store.set_watermark(site.site_id, raster::format_timestamp(*newest));
    }
    return report;
}

Alert override_mask(Store& store, std::int64_t alert_id, const raster::Mask& mask, const std::string& reviewer) {
    const Alert a = store.get_alert(alert_id);
    const auto pred = store.prediction(a.scene_id);
    if (!pred) throw NotFound("no prediction for scene " + a.scene_id);
    const fs::path dir = pred->product_dir;
    const auto dch4 = raster::read_geotiff(dir / "dch4.tif");
    if (mask.rows() != dch4.grid.rows() || mask.cols() != dch4.grid.cols())
        throw BadRequest("mask must be " + std::to_string(dch4.grid.rows()) + " x " + std::to_string(dch4.grid.cols()));
    raster::write_geotiff(dir / "override_mask.tif", {mask_to_raster(mask), dch4.geo});
    const auto fe = try_flux(dch4.grid, mask, pred->wind);
    return store.update_flux(alert_id, fe ? std::optional(fe->flux_kg_h) : std::nullopt,
                             fe ? std::optional(fe->uncertainty_kg_h) : std::nullopt, reviewer);
}

double recompute_score(const Store& store, const std::string& scene_id) {
    const auto pred = store.prediction(scene_id);
    if (!pred) throw NotFound("no prediction for scene " + scene_id);
    const auto prob = raster::read_geotiff(fs::path(pred->product_dir) / "prob.tif");
    return detector::scene_score(prob.grid, pred->pixel_threshold, pred->min_blob_px);
}

Schedule Schedule::parse(std::string_view hhmm) {
    Schedule s;
    if (hhmm.size() != 5 || hhmm[2] != ':') throw BadRequest("schedule must be HH:MM");
    try {
        s.hour = std::stoi(std::string(hhmm.substr(0, 2)));
        s.minute = std::stoi(std::string(hhmm.substr(3, 2)));
    } catch (const std::exception&) {
        throw BadRequest("schedule must be HH:MM");
    }
    if (s.hour < 0 || s.hour > 23 || s.minute < 0 || s.minute > 59) throw BadRequest("schedule out of range");
    return s;
}

Timestamp Schedule::next_run_after(Timestamp now) const {
    const auto day = std::chrono::floor<std::chrono::days>(now);
    Timestamp t = day + std::chrono::hours(hour) + std::chrono::minutes(minute);
    if (t <= now) t += std::chrono::days(1);
    return t;
}

std::chrono::seconds retry_delay(int attempt) {
    long d = 60;
    for (int i = 0; i < attempt && d < 3600; ++i) d *= 2;
    return std::chrono::seconds(std::min(d, 3600L));
}

}  // namespace plume::alertd
