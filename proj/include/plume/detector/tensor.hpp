#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace plume::detector {

/// NCHW activation tensor.
template <typename T>
struct Tensor {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int n_, int c_, int h_, int w_, T fill = T{})
        : n(n_), c(c_), h(h_), w(w_), data(static_cast<std::size_t>(n_) * c_ * h_ * w_, fill) {}

    std::size_t size() const { return data.size(); }
    std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
    T* ptr(int in, int ic) { return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane(); }
    const T* ptr(int in, int ic) const { return data.data() + (static_cast<std::size_t>(in) * c + ic) * plane(); }
    T& at(int in, int ic, int y, int x) { return ptr(in, ic)[static_cast<std::size_t>(y) * w + x]; }
    const T& at(int in, int ic, int y, int x) const { return ptr(in, ic)[static_cast<std::size_t>(y) * w + x]; }
    bool same_shape(const Tensor& o) const { return n == o.n && c == o.c && h == o.h && w == o.w; }
    void zero() { std::fill(data.begin(), data.end(), T{}); }
};

}  // namespace plume::detector
