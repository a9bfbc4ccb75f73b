#include "plume/detector/kernels.hpp"

#include <algorithm>
#include <vector>

namespace plume::detector::kernels {

template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::size_t>(i) * N;
        if (!accumulate) std::fill(c, c + N, T{});
        const T* a = A + static_cast<std::size_t>(i) * K;
        for (int k = 0; k < K; ++k) {
            const T av = a[k];
            if (av == T{}) continue;
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        T* c = C + static_cast<std::size_t>(i) * N;
        if (!accumulate) std::fill(c, c + N, T{});
        for (int k = 0; k < K; ++k) {
            const T av = A[static_cast<std::size_t>(k) * M + i];
            if (av == T{}) continue;
            const T* b = B + static_cast<std::size_t>(k) * N;
            for (int j = 0; j < N; ++j) c[j] += av * b[j];
        }
    }
}

template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate) {
    // Transpose B (N x K) into K x N so the inner loop streams contiguously.
    std::vector<T> bt(static_cast<std::size_t>(K) * N);
#pragma omp parallel for schedule(static)
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < N; ++j) bt[static_cast<std::size_t>(k) * N + j] = B[static_cast<std::size_t>(j) * K + k];
    gemm_nn(M, N, K, A, bt.data(), C, accumulate);
}

template <typename T>
void gemm_reference(int M, int N, int K, const T* A, bool trans_a, const T* B, bool trans_b, T* C, bool accumulate) {
    for (int i = 0; i < M; ++i)
        for (int j = 0; j < N; ++j) {
            T acc = accumulate ? C[static_cast<std::size_t>(i) * N + j] : T{};
            for (int k = 0; k < K; ++k) {
                const T a = trans_a ? A[static_cast<std::size_t>(k) * M + i] : A[static_cast<std::size_t>(i) * K + k];
                const T b = trans_b ? B[static_cast<std::size_t>(j) * K + k] : B[static_cast<std::size_t>(k) * N + j];
                acc += a * b;
            }
            C[static_cast<std::size_t>(i) * N + j] = acc;
        }
}

namespace {

// cols is (Cin*9) x (H*W) for one sample.
template <typename T>
void im2col3x3(const T* x, int cin, int h, int w, T* cols) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
        const T* xp = x + ci * hw;
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                T* row = cols + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    T* out = row + static_cast<std::size_t>(y) * w;
                    if (sy < 0 || sy >= h) {
                        std::fill(out, out + w, T{});
                        continue;
                    }
                    const T* in = xp + static_cast<std::size_t>(sy) * w;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - 1;
                        out[xx] = (sx < 0 || sx >= w) ? T{} : in[sx];
                    }
                }
            }
    }
}

template <typename T>
void col2im3x3(const T* cols, int cin, int h, int w, T* x) {
    const std::size_t hw = static_cast<std::size_t>(h) * w;
#pragma omp parallel for schedule(static)
    for (int ci = 0; ci < cin; ++ci) {
        T* xp = x + ci * hw;
        std::fill(xp, xp + hw, T{});
        for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
                const T* row = cols + (static_cast<std::size_t>(ci) * 9 + ky * 3 + kx) * hw;
                for (int y = 0; y < h; ++y) {
                    const int sy = y + ky - 1;
                    if (sy < 0 || sy >= h) continue;
                    const T* in = row + static_cast<std::size_t>(y) * w;
                    T* out = xp + static_cast<std::size_t>(sy) * w;
                    for (int xx = 0; xx < w; ++xx) {
                        const int sx = xx + kx - 1;
                        if (sx >= 0 && sx < w) out[sx] += in[xx];
                    }
                }
            }
    }
}

template <typename T>
void conv3x3_forward_serial(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout,
                            Tensor<T>& y) {
    y = Tensor<T>(x.n, cout, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < cout; ++o)
            for (int r = 0; r < x.h; ++r)
                for (int c = 0; c < x.w; ++c) {
                    T acc = bias[o];
                    for (int i = 0; i < x.c; ++i)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sy = r + ky - 1, sx = c + kx - 1;
                                if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                                acc += weight[((static_cast<std::size_t>(o) * x.c + i) * 3 + ky) * 3 + kx] *
                                       x.at(n, i, sy, sx);
                            }
                    y.at(n, o, r, c) = acc;
                }
}

template <typename T>
void conv3x3_backward_serial(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy,
                             std::span<T> dweight, std::span<T> dbias, Tensor<T>* dx) {
    const int cout = dy.c;
    if (dx) *dx = Tensor<T>(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < cout; ++o)
            for (int r = 0; r < x.h; ++r)
                for (int c = 0; c < x.w; ++c) {
                    const T g = dy.at(n, o, r, c);
                    dbias[o] += g;
                    for (int i = 0; i < x.c; ++i)
                        for (int ky = 0; ky < 3; ++ky)
                            for (int kx = 0; kx < 3; ++kx) {
                                const int sy = r + ky - 1, sx = c + kx - 1;
                                if (sy < 0 || sy >= x.h || sx < 0 || sx >= x.w) continue;
                                const std::size_t wi = ((static_cast<std::size_t>(o) * x.c + i) * 3 + ky) * 3 + kx;
                                dweight[wi] += g * x.at(n, i, sy, sx);
                                if (dx) dx->at(n, i, sy, sx) += g * weight[wi];
                            }
                }
}

template <typename T>
void tconv2_forward_serial(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout,
                           Tensor<T>& y) {
    y = Tensor<T>(x.n, cout, x.h * 2, x.w * 2);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < cout; ++o)
            for (int r = 0; r < y.h; ++r)
                for (int c = 0; c < y.w; ++c) {
                    const int a = r & 1, b = c & 1;
                    T acc = bias[o];
                    for (int i = 0; i < x.c; ++i)
                        acc += x.at(n, i, r >> 1, c >> 1) *
                               weight[((static_cast<std::size_t>(i) * cout + o) * 2 + a) * 2 + b];
                    y.at(n, o, r, c) = acc;
                }
}

template <typename T>
void tconv2_backward_serial(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy,
                            std::span<T> dweight, std::span<T> dbias, Tensor<T>& dx) {
    const int cout = dy.c;
    dx = Tensor<T>(x.n, x.c, x.h, x.w);
    for (int n = 0; n < x.n; ++n)
        for (int o = 0; o < cout; ++o)
            for (int r = 0; r < dy.h; ++r)
                for (int c = 0; c < dy.w; ++c) {
                    const int a = r & 1, b = c & 1;
                    const T g = dy.at(n, o, r, c);
                    dbias[o] += g;
                    for (int i = 0; i < x.c; ++i) {
                        const std::size_t wi = ((static_cast<std::size_t>(i) * cout + o) * 2 + a) * 2 + b;
                        dweight[wi] += g * x.at(n, i, r >> 1, c >> 1);
                        dx.at(n, i, r >> 1, c >> 1) += g * weight[wi];
                    }
                }
}

}  // namespace

template <typename T>
void conv3x3_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, Tensor<T>& y,
                     Backend backend) {
    if (backend == Backend::Serial) return conv3x3_forward_serial(x, weight, bias, cout, y);
    y = Tensor<T>(x.n, cout, x.h, x.w);
    const int hw = x.h * x.w;
    const int k = x.c * 9;
    std::vector<T> cols(static_cast<std::size_t>(k) * hw);
    for (int n = 0; n < x.n; ++n) {
        im2col3x3(x.ptr(n, 0), x.c, x.h, x.w, cols.data());
        T* out = y.ptr(n, 0);
        for (int o = 0; o < cout; ++o) std::fill(out + static_cast<std::size_t>(o) * hw, out + static_cast<std::size_t>(o + 1) * hw, bias[o]);
        gemm_nn(cout, hw, k, weight.data(), cols.data(), out, true);
    }
}

template <typename T>
void conv3x3_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, std::span<T> dweight,
                      std::span<T> dbias, Tensor<T>* dx, Backend backend) {
    if (backend == Backend::Serial) return conv3x3_backward_serial(x, weight, dy, dweight, dbias, dx);
    const int cout = dy.c;
    const int hw = x.h * x.w;
    const int k = x.c * 9;
    if (dx) *dx = Tensor<T>(x.n, x.c, x.h, x.w);
    std::vector<T> cols(static_cast<std::size_t>(k) * hw);
    std::vector<T> dcols(dx ? cols.size() : 0);
    for (int n = 0; n < x.n; ++n) {
        const T* g = dy.ptr(n, 0);
        for (int o = 0; o < cout; ++o) {
            T s{};
            for (int p = 0; p < hw; ++p) s += g[static_cast<std::size_t>(o) * hw + p];
            dbias[o] += s;
        }
        im2col3x3(x.ptr(n, 0), x.c, x.h, x.w, cols.data());
        gemm_nt(cout, k, hw, g, cols.data(), dweight.data(), true);
        if (dx) {
            gemm_tn(k, hw, cout, weight.data(), g, dcols.data(), false);
            col2im3x3(dcols.data(), x.c, x.h, x.w, dx->ptr(n, 0));
        }
    }
}

template <typename T>
void tconv2_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, Tensor<T>& y,
                    Backend backend) {
    if (backend == Backend::Serial) return tconv2_forward_serial(x, weight, bias, cout, y);
    y = Tensor<T>(x.n, cout, x.h * 2, x.w * 2);
    const int hw = x.h * x.w;
    const int m = cout * 4;
    std::vector<T> z(static_cast<std::size_t>(m) * hw);
    for (int n = 0; n < x.n; ++n) {
        gemm_tn(m, hw, x.c, weight.data(), x.ptr(n, 0), z.data(), false);
#pragma omp parallel for schedule(static)
        for (int o = 0; o < cout; ++o) {
            T* out = y.ptr(n, o);
            for (int ab = 0; ab < 4; ++ab) {
                const int a = ab >> 1, b = ab & 1;
                const T* zr = z.data() + static_cast<std::size_t>(o * 4 + ab) * hw;
                for (int r = 0; r < x.h; ++r)
                    for (int c = 0; c < x.w; ++c)
                        out[static_cast<std::size_t>(2 * r + a) * y.w + 2 * c + b] = zr[r * x.w + c] + bias[o];
            }
        }
    }
}

template <typename T>
void tconv2_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, std::span<T> dweight,
                     std::span<T> dbias, Tensor<T>& dx, Backend backend) {
    if (backend == Backend::Serial) return tconv2_backward_serial(x, weight, dy, dweight, dbias, dx);
    const int cout = dy.c;
    const int hw = x.h * x.w;
    const int m = cout * 4;
    dx = Tensor<T>(x.n, x.c, x.h, x.w);
    std::vector<T> dz(static_cast<std::size_t>(m) * hw);
    for (int n = 0; n < x.n; ++n) {
#pragma omp parallel for schedule(static)
        for (int o = 0; o < cout; ++o) {
            const T* g = dy.ptr(n, o);
            for (int ab = 0; ab < 4; ++ab) {
                const int a = ab >> 1, b = ab & 1;
                T* zr = dz.data() + static_cast<std::size_t>(o * 4 + ab) * hw;
                for (int r = 0; r < x.h; ++r)
                    for (int c = 0; c < x.w; ++c) zr[r * x.w + c] = g[static_cast<std::size_t>(2 * r + a) * dy.w + 2 * c + b];
            }
        }
        for (int o = 0; o < cout; ++o) {
            T s{};
            const T* g = dy.ptr(n, o);
            for (std::size_t p = 0; p < dy.plane(); ++p) s += g[p];
            dbias[o] += s;
        }
        gemm_nt(x.c, m, hw, x.ptr(n, 0), dz.data(), dweight.data(), true);
        gemm_nn(x.c, hw, m, weight.data(), dz.data(), dx.ptr(n, 0), false);
    }
}

#define PLUME_INSTANTIATE(T)                                                                                        \
    template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);                                          \
    template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);                                          \
    template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);                                          \
    template void gemm_reference<T>(int, int, int, const T*, bool, const T*, bool, T*, bool);                       \
    template void conv3x3_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int, Tensor<T>&,      \
                                     Backend);                                                                      \
    template void conv3x3_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&, std::span<T>,          \
                                      std::span<T>, Tensor<T>*, Backend);                                           \
    template void tconv2_forward<T>(const Tensor<T>&, std::span<const T>, std::span<const T>, int, Tensor<T>&,       \
                                    Backend);                                                                       \
    template void tconv2_backward<T>(const Tensor<T>&, std::span<const T>, const Tensor<T>&, std::span<T>,           \
                                     std::span<T>, Tensor<T>&, Backend);

PLUME_INSTANTIATE(float)
PLUME_INSTANTIATE(double)

}  // namespace plume::detector::kernels
