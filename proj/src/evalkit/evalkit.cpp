#include "plume/evalkit/evalkit.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "plume/errors.hpp"

namespace plume::evalkit {

double average_precision(std::span<const EvalRecord> records) {
    std::size_t positives = 0;
    for (const auto& r : records) positives += r.label;
    if (positives == 0 || positives == records.size())
        throw DegenerateEval("average precision needs both plume and no-plume records");

    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return records[a].score > records[b].score; });

    // Cumulative (tp, fp) at the end of each tie group.
    std::vector<std::size_t> tp_at, fp_at;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double s = records[order[i]].score;
        while (i < order.size() && records[order[i]].score == s) {
            if (records[order[i]].label) ++tp;
            else ++fp;
            ++i;
        }
        tp_at.push_back(tp);
        fp_at.push_back(fp);
    }
    std::vector<double> envelope(tp_at.size());
    double running = 0.0;
    for (std::size_t k = tp_at.size(); k-- > 0;) {
        const double p = static_cast<double>(tp_at[k]) / static_cast<double>(tp_at[k] + fp_at[k]);
        running = std::max(running, p);
        envelope[k] = running;
    }
    double sum = 0.0;
    std::size_t prev_tp = 0;
    for (std::size_t k = 0; k < tp_at.size(); ++k) {
        const std::size_t dtp = tp_at[k] - prev_tp;
        if (dtp > 0) sum += static_cast<double>(dtp) * envelope[k];
        prev_tp = tp_at[k];
    }
    return sum / static_cast<double>(positives);
}

double site_averaged_ap(std::span<const EvalRecord> records) {
    std::map<std::string, std::vector<EvalRecord>> by_site;
    for (const auto& r : records) by_site[r.site_id].push_back(r);
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& [site, recs] : by_site) {
        const auto pos = std::count_if(recs.begin(), recs.end(), [](const EvalRecord& r) { return r.label; });
        if (pos == 0 || static_cast<std::size_t>(pos) == recs.size()) continue;
        sum += average_precision(recs);
        ++n;
    }
    if (n == 0) throw DegenerateEval("no site has both plume and no-plume records");
    return sum / static_cast<double>(n);
}

FluxRecall flux_stratified_recall(std::span<const EvalRecord> records, std::span<const double> edges, double threshold) {
    if (edges.size() < 2) throw RangeError("flux binning needs at least two edges");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw RangeError("flux bin edges must be strictly ascending");
    FluxRecall out;
    std::vector<BinRecall> bins(edges.size() - 1);
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) bins[i] = {edges[i], edges[i + 1], 0, 0};
    for (const auto& r : records) {
        if (!r.label) continue;
        if (!r.flux_t_h) {
            ++out.excluded_no_flux;
            continue;
        }
        const double f = *r.flux_t_h;
        auto it = std::upper_bound(edges.begin(), edges.end(), f);
        if (it == edges.begin() || it == edges.end()) {
            ++out.excluded_out_of_range;
            continue;
        }
        auto& bin = bins[static_cast<std::size_t>(it - edges.begin()) - 1];
        ++bin.positives;
        if (r.score >= threshold) ++bin.detected;
    }
    for (const auto& b : bins) out.bins.push_back(b.positives ? std::optional<BinRecall>(b) : std::nullopt);
    return out;
}

MetricsReport binary_metrics(std::span<const EvalRecord> records, double threshold, ApPooling pooling,
                             std::span<const double> flux_edges) {
    if (records.empty()) throw DegenerateEval("no records to evaluate");
    MetricsReport m;
    m.threshold = threshold;
    m.pooling = pooling;
    m.map = pooling == ApPooling::Pooled ? average_precision(records) : site_averaged_ap(records);
    for (const auto& r : records) {
        const bool pred = r.score >= threshold;
        if (pred && r.label) ++m.tp;
        else if (pred && !r.label) ++m.fp;
        else if (!pred && r.label) ++m.fn;
        else ++m.tn;
    }
    m.n = records.size();
    const auto ratio = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    m.accuracy = ratio(m.tp + m.tn, m.n);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.false_positive_rate = ratio(m.fp, m.fp + m.tn);
    m.flux = flux_stratified_recall(records, flux_edges, threshold);
    return m;
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json bins = nlohmann::json::array();
    for (const auto& b : flux.bins) {
        if (!b) continue;  // empty bins are absent, not zero
        bins.push_back({{"lo_t_h", b->lo},
                        {"hi_t_h", std::isinf(b->hi) ? nlohmann::json("inf") : nlohmann::json(b->hi)},
                        {"positives", b->positives},
                        {"detected", b->detected},
                        {"recall", b->recall()}});
    }
    return {
        {"mAP", map},
        {"ap_rule", "step-interpolated precision envelope"},
        {"ap_pooling", pooling == ApPooling::Pooled ? "pooled" : "site-averaged"},
        {"threshold", threshold},
        {"accuracy", accuracy},
        {"recall", recall},
        {"precision", precision},
        {"false_positive_rate", false_positive_rate},
        {"counts", {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}, {"n", n}}},
        {"flux_bins", bins},
        {"flux_excluded_no_flux", flux.excluded_no_flux},
        {"flux_excluded_out_of_range", flux.excluded_out_of_range},
    };
}

bool RegionFilter::matches(const EvalRecord& r) const {
    if (country && r.country != *country) return false;
    if (satellite && r.satellite != *satellite) return false;
    if (!sites.empty() && std::find(sites.begin(), sites.end(), r.site_id) == sites.end()) return false;
    return true;
}

std::string ScoreHistogram::to_csv() const {
    std::ostringstream out;
    out << "bin_lo,bin_hi,plume,no_plume\n";
    for (std::size_t i = 0; i < plume.size(); ++i)
        out << edges[i] << ',' << edges[i + 1] << ',' << plume[i] << ',' << no_plume[i] << '\n';
    return out.str();
}

CaseStudyReport case_study_report(std::span<const EvalRecord> records, const RegionFilter& filter, double threshold,
                                  int histogram_bins, ApPooling pooling, std::span<const double> flux_edges) {
    std::vector<EvalRecord> subset;
    for (const auto& r : records)
        if (filter.matches(r)) subset.push_back(r);
    if (subset.empty()) throw DegenerateEval("region filter matches no records");
    if (histogram_bins < 1) throw RangeError("histogram needs at least one bin");
    CaseStudyReport rep;
    rep.matched = subset.size();
    rep.metrics = binary_metrics(subset, threshold, pooling, flux_edges);
    auto& h = rep.histogram;
    h.edges.resize(static_cast<std::size_t>(histogram_bins) + 1);
    for (int i = 0; i <= histogram_bins; ++i) h.edges[static_cast<std::size_t>(i)] = static_cast<double>(i) / histogram_bins;
    h.plume.assign(static_cast<std::size_t>(histogram_bins), 0);
    h.no_plume.assign(static_cast<std::size_t>(histogram_bins), 0);
    for (const auto& r : subset) {
        auto bin = static_cast<int>(std::floor(std::clamp(r.score, 0.0, 1.0) * histogram_bins));
        bin = std::min(bin, histogram_bins - 1);
        (r.label ? h.plume : h.no_plume)[static_cast<std::size_t>(bin)]++;
    }
    return rep;
}

// ---------------------------------------------------------------- I/O

namespace {

constexpr std::string_view kHeader = "scene_id,site_id,country,satellite,score,label,flux_t_h";

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') quoted = !quoted;
        else if (ch == ',' && !quoted) {
            out.push_back(cur);
            cur.clear();
        } else cur.push_back(ch);
    }
    out.push_back(cur);
    return out;
}

double to_double(const std::string& s, std::size_t line) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw FormatError("records line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

bool to_label(const std::string& s, std::size_t line) {
    if (s == "plume" || s == "1" || s == "true") return true;
    if (s == "no_plume" || s == "0" || s == "false") return false;
    throw FormatError("records line " + std::to_string(line) + ": bad label '" + s + "'");
}

std::string quoted(const std::string& s) {
    return s.find(',') == std::string::npos ? s : "\"" + s + "\"";
}

}  // namespace

std::vector<EvalRecord> parse_records_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::vector<EvalRecord> out;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != kHeader) throw FormatError("records header must be '" + std::string(kHeader) + "'");
            header = true;
            continue;
        }
        const auto f = split(line);
        if (f.size() != 7) throw FormatError("records line " + std::to_string(lineno) + ": expected 7 fields");
        EvalRecord r{f[0], f[1], f[2], f[3], to_double(f[4], lineno), to_label(f[5], lineno), std::nullopt};
        if (!f[6].empty()) r.flux_t_h = to_double(f[6], lineno);
        if (!(r.score >= 0.0 && r.score <= 1.0)) throw FormatError("records line " + std::to_string(lineno) + ": score outside [0,1]");
        out.push_back(std::move(r));
    }
    return out;
}

std::string format_records_csv(std::span<const EvalRecord> records) {
    std::ostringstream out;
    out.precision(17);
    out << kHeader << '\n';
    for (const auto& r : records) {
        out << quoted(r.scene_id) << ',' << quoted(r.site_id) << ',' << quoted(r.country) << ',' << quoted(r.satellite) << ','
            << r.score << ',' << (r.label ? "plume" : "no_plume") << ',';
        if (r.flux_t_h) out << *r.flux_t_h;
        out << '\n';
    }
    return out.str();
}

nlohmann::json records_to_json(std::span<const EvalRecord> records) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : records) {
        arr.push_back({{"scene_id", r.scene_id},
                       {"site_id", r.site_id},
                       {"country", r.country},
                       {"satellite", r.satellite},
                       {"score", r.score},
                       {"label", r.label ? "plume" : "no_plume"},
                       {"flux_t_h", r.flux_t_h ? nlohmann::json(*r.flux_t_h) : nlohmann::json(nullptr)}});
    }
    return arr;
}

std::vector<EvalRecord> records_from_json(const nlohmann::json& j) {
    std::vector<EvalRecord> out;
    try {
        for (const auto& o : j) {
            EvalRecord r;
            r.scene_id = o.at("scene_id").get<std::string>();
            r.site_id = o.at("site_id").get<std::string>();
            r.country = o.value("country", std::string{});
            r.satellite = o.value("satellite", std::string{});
            r.score = o.at("score").get<double>();
            const auto& lab = o.at("label");
            r.label = lab.is_boolean() ? lab.get<bool>() : to_label(lab.is_string() ? lab.get<std::string>() : lab.dump(), 0);
            if (o.contains("flux_t_h") && !o["flux_t_h"].is_null()) r.flux_t_h = o["flux_t_h"].get<double>();
            out.push_back(std::move(r));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("records json: ") + e.what());
    }
    return out;
}

std::vector<EvalRecord> load_records(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    if (path.extension() == ".json") {
        try {
            return records_from_json(nlohmann::json::parse(ss.str()));
        } catch (const nlohmann::json::parse_error& e) {
            throw FormatError(path.string() + ": " + e.what());
        }
    }
    return parse_records_csv(ss.str());
}

}  // namespace plume::evalkit
