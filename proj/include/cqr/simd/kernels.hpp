// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace cqr::simd {

enum class Isa { Scalar, Avx2, Neon };

std::string_view isa_name(Isa isa);

/// Best instruction set supported by both the build and the running CPU.
Isa detected_isa();

/// Kernel table for one instruction set. Every variant computes the same
/// quantities as the scalar reference; results differ only by float
/// summation order.
struct Kernels {
  Isa isa;
  /// sum_i a[i] * b[i]
  float (*dot)(const float* a, const float* b, std::size_t n);
  /// out[r] = dot(matrix row r, query) for a row-major rows x dim matrix.
  void (*dot_rows)(const float* matrix, std::size_t rows, std::size_t dim, const float* query, float* out);
};

/// Kernels for `isa`; falls back to scalar when that variant is not compiled in
/// or not supported by the CPU.
const Kernels& kernels_for(Isa isa);

/// Kernels selected once at first use from detected_isa(). The CQR_SIMD
/// environment variable ("scalar", "avx2", "neon") can force a variant.
const Kernels& active_kernels();

inline float dot(std::span<const float> a, std::span<const float> b) {
  return active_kernels().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

namespace detail {
float dot_scalar(const float* a, const float* b, std::size_t n);
void dot_rows_scalar(const float* matrix, std::size_t rows, std::size_t dim, const float* query, float* out);
#if defined(__x86_64__) || defined(_M_X64)
float dot_avx2(const float* a, const float* b, std::size_t n);
void dot_rows_avx2(const float* matrix, std::size_t rows, std::size_t dim, const float* query, float* out);
#endif
#if defined(__aarch64__)
float dot_neon(const float* a, const float* b, std::size_t n);
void dot_rows_neon(const float* matrix, std::size_t rows, std::size_t dim, const float* query, float* out);
#endif
}  // namespace detail

}  // namespace cqr::simd
