#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace plume::evalkit {

/// One scored scene. `label` comes from hand annotation, never from the model.
struct EvalRecord {
    std::string scene_id;
    std::string site_id;
    std::string country;
    std::string satellite;
    double score = 0.0;
    bool label = false;
    std::optional<double> flux_t_h;
};

/// Step-interpolated average precision over the pooled ranking: the
/// precision envelope at each achieved recall level, tied scores grouped.
/// DegenerateEval unless both classes are present.
double average_precision(std::span<const EvalRecord> records);

/// Mean of per-site AP over sites that have both classes.
double site_averaged_ap(std::span<const EvalRecord> records);

enum class ApPooling { Pooled, SiteAveraged };

struct BinRecall {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t positives = 0;
    std::size_t detected = 0;
    double recall() const { return static_cast<double>(detected) / static_cast<double>(positives); }
};

struct FluxRecall {
    /// One entry per bin; nullopt for bins without positives.
    std::vector<std::optional<BinRecall>> bins;
    std::size_t excluded_no_flux = 0;
    std::size_t excluded_out_of_range = 0;
};

inline const std::vector<double> kDefaultFluxEdges = {0.5, 1, 2, 3, 5, 10, std::numeric_limits<double>::infinity()};

/// Recall of plume records per flux bin [edge_i, edge_{i+1}) in t/h. A plume
/// counts as detected when its score reaches the threshold.
FluxRecall flux_stratified_recall(std::span<const EvalRecord> records, std::span<const double> edges = kDefaultFluxEdges,
                                  double threshold = 0.5);

struct MetricsReport {
    double map = 0.0;
    double threshold = 0.5;
    double accuracy = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    double false_positive_rate = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0, n = 0;
    ApPooling pooling = ApPooling::Pooled;
    FluxRecall flux;

    nlohmann::json to_json() const;
};

/// Confusion-matrix metrics at `threshold` (score >= threshold is positive)
/// plus AP. DegenerateEval for empty or single-class input.
MetricsReport binary_metrics(std::span<const EvalRecord> records, double threshold = 0.5,
                             ApPooling pooling = ApPooling::Pooled,
                             std::span<const double> flux_edges = kDefaultFluxEdges);

struct RegionFilter {
    std::optional<std::string> country;
    std::optional<std::string> satellite;
    std::vector<std::string> sites;  // empty = any site

    bool matches(const EvalRecord& r) const;
};

struct ScoreHistogram {
    std::vector<double> edges;  // bins + 1 edges over [0, 1]
    std::vector<std::size_t> plume;
    std::vector<std::size_t> no_plume;

    std::string to_csv() const;
};

struct CaseStudyReport {
    MetricsReport metrics;
    ScoreHistogram histogram;
    std::size_t matched = 0;
};

/// Metrics restricted to the filter plus the two-class score histogram.
CaseStudyReport case_study_report(std::span<const EvalRecord> records, const RegionFilter& filter,
                                  double threshold = 0.5, int histogram_bins = 10,
                                  ApPooling pooling = ApPooling::Pooled,
                                  std::span<const double> flux_edges = kDefaultFluxEdges);

/// CSV header `scene_id,site_id,country,satellite,score,label,flux_t_h`;
/// label is `plume`/`no_plume` (or 1/0); flux may be empty.
std::vector<EvalRecord> parse_records_csv(const std::string& text);
std::vector<EvalRecord> load_records(const std::filesystem::path& path);  // .csv or .json
std::string format_records_csv(std::span<const EvalRecord> records);
nlohmann::json records_to_json(std::span<const EvalRecord> records);
std::vector<EvalRecord> records_from_json(const nlohmann::json& j);

}  // namespace plume::evalkit
