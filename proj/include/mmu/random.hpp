#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "mmu/core.hpp"

namespace mmu {

// Counter-based generator: the k-th draw of (seed, stream) is a pure function of
// (seed, stream, k), so results do not depend on the standard library in use.
// Normals come from the Box-Muller transform; both outputs of a pair are used.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(seed ^ mix(stream + 0x632BE59BD9B4E019ULL))) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t next_u64() { return mix(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

  // Uniform on (0, 1].
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double r = std::sqrt(-2.0 * std::log(uniform()));
    const double t = 2.0 * std::numbers::pi * uniform();
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return r * std::cos(t);
  }

  Vector normal_vector(Index d) {
    Vector x(d);
    for (Index i = 0; i < d; ++i) x(i) = normal();
    return x;
  }

  Matrix normal_matrix(Index r, Index c) {
    Matrix m(r, c);
    for (Index j = 0; j < c; ++j)
      for (Index i = 0; i < r; ++i) m(i, j) = normal();
    return m;
  }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return static_cast<std::uint64_t>(uniform() * n) % n; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Haar-ish random orthogonal matrix via QR of a Gaussian matrix with sign fix.
inline Matrix random_orthogonal(CounterRng& rng, Index d) {
  const Matrix g = rng.normal_matrix(d, d);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(d, d);
  const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  return q;
}

// Uniformly distributed point in the ball of radius r in R^d.
inline Vector uniform_in_ball(CounterRng& rng, Index d, double r) {
  Vector x = rng.normal_vector(d);
  const double nrm = x.norm();
  if (nrm == 0.0) return Vector::Zero(d);
  return x * (r * std::pow(rng.uniform(), 1.0 / static_cast<double>(d)) / nrm);
}

inline Vector uniform_on_sphere(CounterRng& rng, Index d, double r) {
  Vector x = rng.normal_vector(d);
  const double nrm = x.norm();
  if (nrm == 0.0) {
    x.setZero();
    x(0) = r;
    return x;
  }
  return x * (r / nrm);
}

}  // namespace mmu
