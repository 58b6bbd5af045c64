// SPDX-License-Identifier: Apache-2.0
#include <cstdlib>
#include <string>

#include "cqr/simd/kernels.hpp"
#include "cqr/util.hpp"

namespace cqr::simd {

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "scalar";
}

namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const Kernels kScalar{Isa::Scalar, &detail::dot_scalar, &detail::dot_rows_scalar};
#if defined(__x86_64__) || defined(_M_X64)
const Kernels kAvx2{Isa::Avx2, &detail::dot_avx2, &detail::dot_rows_avx2};
#endif
#if defined(__aarch64__)
const Kernels kNeon{Isa::Neon, &detail::dot_neon, &detail::dot_rows_neon};
#endif

}  // namespace

Isa detected_isa() {
  if (cpu_supports(Isa::Avx2)) return Isa::Avx2;
  if (cpu_supports(Isa::Neon)) return Isa::Neon;
  return Isa::Scalar;
}

const Kernels& kernels_for(Isa isa) {
  if (!cpu_supports(isa)) return kScalar;
  switch (isa) {
#if defined(__x86_64__) || defined(_M_X64)
    case Isa::Avx2: return kAvx2;
#endif
#if defined(__aarch64__)
    case Isa::Neon: return kNeon;
#endif
    default: return kScalar;
  }
}

const Kernels& active_kernels() {
  static const Kernels& chosen = [] () -> const Kernels& {
    if (const char* forced = std::getenv("CQR_SIMD")) {
      const std::string name = to_lower_ascii(forced);
      if (name == "scalar") return kernels_for(Isa::Scalar);
      if (name == "avx2") return kernels_for(Isa::Avx2);
      if (name == "neon") return kernels_for(Isa::Neon);
    }
    return kernels_for(detected_isa());
  }();
  return chosen;
}

}  // namespace cqr::simd
