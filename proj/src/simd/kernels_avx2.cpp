// SPDX-License-Identifier: Apache-2.0
// Compiled with -mavx2 -mfma; only called after a runtime CPU check.
#include <immintrin.h>

#include "cqr/simd/kernels.hpp"

namespace cqr::simd::detail {

namespace {

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

}  // namespace

float dot_avx2(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps();
  __m256 acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
  }
  float sum = hsum(_mm256_add_ps(acc0, acc1));
  // tail
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void dot_rows_avx2(const float* matrix, std::size_t rows, std::size_t dim, const float* query, float* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_avx2(matrix + r * dim, query, dim);
}

}  // namespace cqr::simd::detail
