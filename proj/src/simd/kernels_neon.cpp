// SPDX-License-Identifier: Apache-2.0
#include <arm_neon.h>

#include "cqr/simd/kernels.hpp"

namespace cqr::simd::detail {

float dot_neon(const float* a, const float* b, std::size_t n) {
  float32x4_t acc0 = vdupq_n_f32(0.0f);
  float32x4_t acc1 = vdupq_n_f32(0.0f);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = vfmaq_f32(acc0, vld1q_f32(a + i), vld1q_f32(b + i));
    acc1 = vfmaq_f32(acc1, vld1q_f32(a + i + 4), vld1q_f32(b + i + 4));
  }
  float sum = vaddvq_f32(vaddq_f32(acc0, acc1));
  for (; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void dot_rows_neon(const float* matrix, std::size_t rows, std::size_t dim, const float* query, float* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_neon(matrix + r * dim, query, dim);
}

}  // namespace cqr::simd::detail
