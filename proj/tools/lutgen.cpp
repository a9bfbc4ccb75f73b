// Builds the CH4 transmittance look-up table.

#include <CLI11.hpp>

#include "common.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Build the CH4 transmittance look-up table"};
    std::string model = plume::rtlut::default_model_path().string();
    std::string dch4 = "0:20000:64";
    std::string amf = "2:6:16";
    std::string out;
    app.add_option("--model", model, "absorption model JSON");
    app.add_option("--dch4", dch4, "column grid lo:hi:n in ppb*m (lo must be 0, knots log-spaced)");
    app.add_option("--amf", amf, "air-mass-factor grid lo:hi:n (linear)");
    app.add_option("--out", out, "output table (.json, payload written next to it as .bin)")->required();
    CLI11_PARSE(app, argc, argv);

    return tools::run_main([&] {
        using namespace plume::rtlut;
        const auto d = tools::parse_range(dch4);
        const auto a = tools::parse_range(amf);
        if (d.lo != 0.0) throw std::invalid_argument("the column grid must start at 0");
        const auto lut = build_lut(AbsorptionModel::load(model), default_dch4_grid(d.hi, d.n),
                                   default_amf_grid(a.lo, a.hi, a.n));
        lut.save(out);
        spdlog::info("wrote {} ({} x {} knots)", out, lut.dch4_grid().size(), lut.amf_grid().size());
        return 0;
    });
}
