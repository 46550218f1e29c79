#pragma once

#include <cmath>
#include <cstdint>

#include "mmu/core.hpp"
#include "mmu/random.hpp"

namespace mmu {

struct NoiseSpec {
  double sigma_w = 0.0;
  double sigma_v = 0.0;
  std::uint64_t seed = 0;
};

// Streams used for the two blocks; fixed so outputs are reproducible.
inline constexpr std::uint64_t kNoiseStreamW = 0x11;
inline constexpr std::uint64_t kNoiseStreamV = 0x12;

inline PrimalDualPoint gaussian_perturb(const PrimalDualPoint& p, const NoiseSpec& spec) {
  if (!(spec.sigma_w >= 0.0) || !(spec.sigma_v >= 0.0)) {
    throw InvalidArgument("noise scales must be nonnegative");
  }
  PrimalDualPoint out = p;
  if (spec.sigma_w > 0.0) {
    CounterRng rng(spec.seed, kNoiseStreamW);
    out.w += spec.sigma_w * rng.normal_vector(p.w.size());
  }
  if (spec.sigma_v > 0.0) {
    CounterRng rng(spec.seed, kNoiseStreamV);
    out.v += spec.sigma_v * rng.normal_vector(p.v.size());
  }
  return out;
}

// sqrt(2 log(2.5/delta)).
inline double gaussian_calibration(double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
  return std::sqrt(2.0 * std::log(2.5 / delta));
}

// The epsilon for which sigma is the calibrated scale at sensitivity shift_norm.
inline double effective_epsilon(double shift_norm, double sigma, double delta) {
  if (!(sigma > 0.0)) throw InvalidArgument("effective_epsilon needs sigma > 0");
  if (!(shift_norm >= 0.0)) throw InvalidArgument("shift norm must be nonnegative");
  return 2.0 * shift_norm * gaussian_calibration(delta) / sigma;
}

// Both blocks together: per-block budgets are eps_eff/2 each and add up.
inline double composed_effective_epsilon(double shift_w, double sigma_w, double shift_v,
                                         double sigma_v, double delta) {
  return 0.5 * (effective_epsilon(shift_w, sigma_w, delta) +
                effective_epsilon(shift_v, sigma_v, delta));
}

}  // namespace mmu
