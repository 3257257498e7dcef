#include <cstdlib>
#include <stdexcept>
#include <string>

#include "spectral_gain/kernels.hpp"

namespace spectral_gain::kernels {

bool available(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(SPECTRAL_GAIN_HAVE_AVX2)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

const KernelSet& kernels_for(Isa isa) {
  if (!available(isa)) {
    throw std::invalid_argument("kernel ISA not available on this CPU");
  }
#if defined(SPECTRAL_GAIN_HAVE_AVX2)
  if (isa == Isa::avx2) return detail::avx2_kernels;
#endif
  return detail::scalar_kernels;
}

namespace {

const KernelSet& select() {
  if (const char* forced = std::getenv("SPECTRAL_GAIN_ISA")) {
    const std::string name(forced);
    if (name == "scalar") return kernels_for(Isa::scalar);
    if (name == "avx2") return kernels_for(Isa::avx2);
    throw std::invalid_argument("SPECTRAL_GAIN_ISA must be scalar or avx2, got " +
                                name);
  }
  if (available(Isa::avx2)) return kernels_for(Isa::avx2);
  return kernels_for(Isa::scalar);
}

}  // namespace

const KernelSet& active() {
  static const KernelSet& chosen = select();
  return chosen;
}

}  // namespace spectral_gain::kernels
