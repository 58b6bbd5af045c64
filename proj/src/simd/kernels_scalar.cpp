// SPDX-License-Identifier: Apache-2.0
#include "cqr/simd/kernels.hpp"

namespace cqr::simd::detail {

float dot_scalar(const float* a, const float* b, std::size_t n) {
  float sum = 0.0f;
  for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
  return sum;
}

void dot_rows_scalar(const float* matrix, std::size_t rows, std::size_t dim, const float* query, float* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot_scalar(matrix + r * dim, query, dim);
}

}  // namespace cqr::simd::detail
