#pragma once

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <filesystem>
#include <string>

#include "plume/rtlut/rtlut.hpp"

namespace tools {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    int n = 0;
};

/// "lo:hi:n"
inline Range parse_range(const std::string& s) {
    Range r;
    char tail = 0;
    if (std::sscanf(s.c_str(), "%lf:%lf:%d%c", &r.lo, &r.hi, &r.n, &tail) != 3 || r.n < 2 || !(r.hi > r.lo))
        throw std::invalid_argument("expected lo:hi:n with lo < hi and n >= 2, got '" + s + "'");
    return r;
}

/// Table from `path`, or the default one built from the bundled absorption model.
inline plume::rtlut::RtLut load_or_build_lut(const std::filesystem::path& path) {
    using namespace plume::rtlut;
    if (!path.empty()) return RtLut::load(path);
    spdlog::info("no --lut given, building the default table");
    return build_lut(AbsorptionModel::load(default_model_path()), default_dch4_grid(), default_amf_grid());
}

template <class F>
int run_main(F&& f) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("plume"));
    try {
        return f();
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}

}  // namespace tools
