#pragma once

#include <span>

#include "plume/detector/tensor.hpp"

namespace plume::detector {

/// Which implementation the heavy kernels dispatch to. Serial is the naive
/// reference used by tests and golden files; Parallel is im2col + blocked
/// GEMM under OpenMP. Both produce the same result up to summation order.
enum class Backend { Serial, Parallel };

namespace kernels {

/// C[M x N] (+)= A[M x K] * B[K x N], all row-major.
template <typename T>
void gemm_nn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
/// C[M x N] (+)= A^T * B with A stored K x M.
template <typename T>
void gemm_tn(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);
/// C[M x N] (+)= A * B^T with B stored N x K.
template <typename T>
void gemm_nt(int M, int N, int K, const T* A, const T* B, T* C, bool accumulate);

/// Naive triple loop, the oracle for the three routines above.
template <typename T>
void gemm_reference(int M, int N, int K, const T* A, bool trans_a, const T* B, bool trans_b, T* C, bool accumulate);

// 3x3 convolution, stride 1, zero padding 1. Weights [Cout][Cin][3][3].
template <typename T>
void conv3x3_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, Tensor<T>& y,
                     Backend backend);
/// Accumulates into dweight/dbias; dx is overwritten when non-null.
template <typename T>
void conv3x3_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, std::span<T> dweight,
                      std::span<T> dbias, Tensor<T>* dx, Backend backend);

// 2x2 stride-2 transposed convolution. Weights [Cin][Cout][2][2].
template <typename T>
void tconv2_forward(const Tensor<T>& x, std::span<const T> weight, std::span<const T> bias, int cout, Tensor<T>& y,
                    Backend backend);
template <typename T>
void tconv2_backward(const Tensor<T>& x, std::span<const T> weight, const Tensor<T>& dy, std::span<T> dweight,
                     std::span<T> dbias, Tensor<T>& dx, Backend backend);

}  // namespace kernels
}  // namespace plume::detector
