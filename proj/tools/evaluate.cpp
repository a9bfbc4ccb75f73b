// Metrics over scored scenes: AP, confusion matrix, flux-binned recall,
// optionally restricted to a region.

#include <CLI11.hpp>

#include <fstream>
#include <sstream>

#include "common.hpp"
#include "plume/evalkit/evalkit.hpp"

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);)
        if (!item.empty()) out.push_back(item);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evaluate detector scores"};
    std::string records_path, out, histogram_out, bins;
    std::vector<std::string> regions;
    double threshold = 0.5;
    int histogram_bins = 10;
    bool site_averaged = false;
    app.add_option("records", records_path, "EvalRecord CSV or JSON")->required();
    app.add_option("--threshold", threshold, "scene score threshold");
    app.add_option("--bins", bins, "flux bin edges in t/h, comma separated (last may be inf)");
    app.add_option("--region", regions, "country=<name>, satellite=<name> or sites=<a,b,...>; repeatable");
    app.add_option("--histogram-bins", histogram_bins);
    app.add_flag("--site-averaged", site_averaged, "average AP over sites instead of pooling");
    app.add_option("--out", out, "JSON report (stdout when omitted)");
    app.add_option("--histogram", histogram_out, "score histogram CSV");
    CLI11_PARSE(app, argc, argv);

    return tools::run_main([&] {
        using namespace plume::evalkit;
        const auto records = load_records(records_path);
        std::vector<double> edges = kDefaultFluxEdges;
        if (!bins.empty()) {
            edges.clear();
            for (const auto& e : split(bins, ','))
                edges.push_back(e == "inf" ? std::numeric_limits<double>::infinity() : std::stod(e));
        }
        RegionFilter filter;
        for (const auto& r : regions) {
            const auto eq = r.find('=');
            if (eq == std::string::npos) throw std::invalid_argument("--region expects key=value, got '" + r + "'");
            const auto key = r.substr(0, eq), value = r.substr(eq + 1);
            if (key == "country") filter.country = value;
            else if (key == "satellite") filter.satellite = value;
            else if (key == "sites") filter.sites = split(value, ',');
            else throw std::invalid_argument("unknown region key '" + key + "'");
        }
        const auto pooling = site_averaged ? ApPooling::SiteAveraged : ApPooling::Pooled;
        const auto rep = case_study_report(records, filter, threshold, histogram_bins, pooling, edges);
        nlohmann::json j = rep.metrics.to_json();
        j["matched"] = rep.matched;
        j["records"] = records.size();
        if (out.empty())
            std::cout << j.dump(2) << '\n';
        else
            std::ofstream(out) << j.dump(2) << '\n';
        if (!histogram_out.empty()) std::ofstream(histogram_out) << rep.histogram.to_csv();
        return 0;
    });
}
