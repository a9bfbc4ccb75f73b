#include "plume/raster/resample.hpp"

#include <array>
#include <cmath>
#include <string>

#include "plume/errors.hpp"

namespace plume::raster {
namespace {

struct Stencil {
    int base = 0;
    std::array<double, 4> w{};
};

// Cubic Lagrange weights on nodes base..base+3 evaluated at x.
Stencil stencil_at(double x, int n) {
    Stencil s;
    s.base = static_cast<int>(std::floor(x)) - 1;
    if (s.base < 0) s.base = 0;
    if (s.base > n - 4) s.base = n - 4;
    for (int k = 0; k < 4; ++k) {
        double w = 1.0;
        const double xk = s.base + k;
        for (int m = 0; m < 4; ++m) {
            if (m == k) continue;
            const double xm = s.base + m;
            w *= (x - xm) / (xk - xm);
        }
        s.w[k] = w;
    }
    return s;
}

std::vector<Stencil> stencils(int n_in, int factor) {
    std::vector<Stencil> out(static_cast<std::size_t>(n_in) * factor);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = (static_cast<double>(i) + 0.5) / factor - 0.5;
        out[i] = stencil_at(x, n_in);
    }
    return out;
}

void check_args(const Raster& grid, int factor) {
    if (factor < 1 || factor > 3) throw StencilError("resample factor must be 1, 2 or 3, got " + std::to_string(factor));
    if (grid.rows() < 4 || grid.cols() < 4)
        throw StencilError("bicubic resampling needs at least 4x4 pixels, got " + std::to_string(grid.rows()) + "x" +
                           std::to_string(grid.cols()));
}

}  // namespace

Raster resample_bicubic(const Raster& grid, int factor) {
    check_args(grid, factor);
    if (factor == 1) return grid;

    const auto rs = stencils(grid.rows(), factor);
    const auto cs = stencils(grid.cols(), factor);
    const int out_rows = grid.rows() * factor;
    const int out_cols = grid.cols() * factor;

    // Horizontal pass then vertical pass. Sums are taken relative to the first
    // stencil node so constant fields come out bit-exact. NaN propagates
    // through the weighted sums, which realises the nodata rule.
    Raster horiz(grid.rows(), out_cols);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < out_cols; ++c) {
            const auto& s = cs[static_cast<std::size_t>(c)];
            const double a = grid(r, s.base);
            double acc = 0.0;
            for (int k = 1; k < 4; ++k) acc += s.w[k] * (grid(r, s.base + k) - a);
            horiz(r, c) = a + acc;
        }
    }
    Raster out(out_rows, out_cols);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < out_rows; ++r) {
        const auto& s = rs[static_cast<std::size_t>(r)];
        for (int c = 0; c < out_cols; ++c) {
            const double a = horiz(s.base, c);
            double acc = 0.0;
            for (int k = 1; k < 4; ++k) acc += s.w[k] * (horiz(s.base + k, c) - a);
            out(r, c) = a + acc;
        }
    }
    return out;
}

Raster resample_bicubic_serial(const Raster& grid, int factor) {
    check_args(grid, factor);
    if (factor == 1) return grid;
    const int out_rows = grid.rows() * factor;
    const int out_cols = grid.cols() * factor;
    Raster out(out_rows, out_cols);
    for (int r = 0; r < out_rows; ++r) {
        const auto sr = stencil_at((r + 0.5) / factor - 0.5, grid.rows());
        for (int c = 0; c < out_cols; ++c) {
            const auto sc = stencil_at((c + 0.5) / factor - 0.5, grid.cols());
            const double a = grid(sr.base, sc.base);
            double acc = 0.0;
            bool missing = false;
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) {
                    const double v = grid(sr.base + i, sc.base + j);
                    if (is_nodata(v)) missing = true;
                    acc += sr.w[i] * sc.w[j] * (v - a);
                }
            out(r, c) = missing ? kNoData : a + acc;
        }
    }
    return out;
}

}  // namespace plume::raster
