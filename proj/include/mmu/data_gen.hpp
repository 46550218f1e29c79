#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <vector>

#include "mmu/core.hpp"
#include "mmu/loss.hpp"
#include "mmu/random.hpp"

namespace mmu {

inline constexpr std::uint64_t kTrainStream = 1;
inline constexpr std::uint64_t kEvalStream = 2;

// Random quadratic family. Each sample has A, C with spectra in
// [mu, mu + spectrum_width] and a coupling block with spectral norm at most
// `coupling`, half of it shared across samples. Linear terms scatter around a
// shared mean.
struct QuadGenConfig {
  Index d1 = 3;
  Index d2 = 3;
  double mu_w = 1.0;
  double mu_v = 1.0;
  double spectrum_width = 1.0;
  double coupling = 1.0;
  double linear_shift = 1.0;
  double linear_noise = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (d1 <= 0 || d2 <= 0) throw InvalidArgument("quadratic generator needs d1, d2 > 0");
    if (!(mu_w > 0.0) || !(mu_v > 0.0)) throw InvalidArgument("quadratic generator needs mu_w, mu_v > 0");
    if (!(spectrum_width >= 0.0) || !(coupling >= 0.0) || !(linear_shift >= 0.0) || !(linear_noise >= 0.0)) {
      throw InvalidArgument("quadratic generator scales must be nonnegative");
    }
  }
};

namespace detail {

inline Matrix unit_spectral(CounterRng& rng, Index r, Index c) {
  Matrix m = rng.normal_matrix(r, c);
  const double s = spectral_norm(m);
  return s > 0.0 ? Matrix(m / s) : m;
}

inline Matrix spd_with_spectrum(CounterRng& rng, Index d, double lo, double width) {
  const Matrix q = random_orthogonal(rng, d);
  Vector ev(d);
  for (Index i = 0; i < d; ++i) ev(i) = lo + width * rng.uniform();
  return symmetrize(q * ev.asDiagonal() * q.transpose());
}

}  // namespace detail

class QuadGenerator {
 public:
  explicit QuadGenerator(const QuadGenConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    CounterRng rng(cfg.seed, 0);
    b0_ = detail::unit_spectral(rng, cfg.d1, cfg.d2);
    a0_ = cfg.linear_shift * rng.normal_vector(cfg.d1);
    c0_ = cfg.linear_shift * rng.normal_vector(cfg.d2);
  }

  Dataset draw(std::size_t n, std::uint64_t stream = kTrainStream) const {
    if (n == 0) throw InvalidArgument("dataset size must be positive");
    CounterRng rng(cfg_.seed, stream);
    Dataset d{LossFamily::kQuadratic, cfg_.d1, cfg_.d2, {}, cfg_.seed};
    d.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      QuadraticTerms q;
      q.A = detail::spd_with_spectrum(rng, cfg_.d1, cfg_.mu_w, cfg_.spectrum_width);
      q.C = detail::spd_with_spectrum(rng, cfg_.d2, cfg_.mu_v, cfg_.spectrum_width);
      q.B = cfg_.coupling * (0.5 * b0_ + 0.5 * detail::unit_spectral(rng, cfg_.d1, cfg_.d2));
      q.a = a0_ + cfg_.linear_noise * rng.normal_vector(cfg_.d1);
      q.c = c0_ + cfg_.linear_noise * rng.normal_vector(cfg_.d2);
      Sample s;
      s.x = Vector(0);
      s.u = Vector(0);
      s.quad = std::move(q);
      d.samples.push_back(std::move(s));
    }
    return d;
  }

  const QuadGenConfig& config() const { return cfg_; }

 private:
  QuadGenConfig cfg_;
  Matrix b0_;
  Vector a0_, c0_;
};

// Ball radius containing the saddle points of the dataset and of all its subsets:
// the saddle operator is min(mu_w, mu_v)-strongly monotone.
inline DomainSpec quadratic_domain(const Dataset& data, double mu_w, double mu_v) {
  double g = 0.0;
  for (const auto& s : data.samples) {
    g = std::max(g, std::sqrt(s.quad->a.squaredNorm() + s.quad->c.squaredNorm()));
  }
  const double r = std::max(g / std::min(mu_w, mu_v), 1e-3);
  return {r, r, false};
}

// Bilinear-logistic family. Features live in balls of radius x_max / u_max around
// half-length mean directions. mu_w is raised to the dominance floor so that the
// w-Hessian stays above mu_w/2 on the domain.
struct BilogGenConfig {
  Index d1 = 3;
  Index d2 = 3;
  double mu_v = 1.0;
  double mu_w_floor = 0.0;
  double x_max = 1.0;
  double u_max = 1.0;
  std::uint64_t seed = 0;

  // |tanh''| <= 0.7699; twice that keeps the curvature loss below mu_w/2.
  static constexpr double kDominance = 1.6;

  double radius_v() const { return u_max / mu_v; }
  double mu_w() const { return std::max(mu_w_floor, kDominance * radius_v() * u_max * x_max * x_max); }
  double radius_w() const { return x_max * (1.0 + radius_v() * u_max) / mu_w(); }

  void validate() const {
    if (d1 <= 0 || d2 <= 0) throw InvalidArgument("bilinear-logistic generator needs d1, d2 > 0");
    if (!(mu_v > 0.0) || !(x_max > 0.0) || !(u_max > 0.0) || !(mu_w_floor >= 0.0)) {
      throw InvalidArgument("bilinear-logistic generator scales must be positive");
    }
  }
};

class BilogGenerator {
 public:
  explicit BilogGenerator(const BilogGenConfig& cfg) : cfg_(cfg) {
    cfg.validate();
    CounterRng rng(cfg.seed, 0);
    x0_ = uniform_on_sphere(rng, cfg.d1, 0.5 * cfg.x_max);
    u0_ = uniform_on_sphere(rng, cfg.d2, 0.5 * cfg.u_max);
  }

  Dataset draw(std::size_t n, std::uint64_t stream = kTrainStream) const {
    if (n == 0) throw InvalidArgument("dataset size must be positive");
    CounterRng rng(cfg_.seed, stream);
    Dataset d{LossFamily::kBilinearLogistic, cfg_.d1, cfg_.d2, {}, cfg_.seed};
    d.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Sample s;
      s.x = x0_ + uniform_in_ball(rng, cfg_.d1, 0.5 * cfg_.x_max);
      s.u = u0_ + uniform_in_ball(rng, cfg_.d2, 0.5 * cfg_.u_max);
      s.y = rng.uniform() < BilinearLogisticLoss::sigmoid(s.x.dot(x0_)) ? 1.0 : 0.0;
      d.samples.push_back(std::move(s));
    }
    return d;
  }

  BilinearLogisticLoss loss() const { return {cfg_.d1, cfg_.d2, cfg_.mu_w(), cfg_.mu_v}; }
  DomainSpec domain() const { return {cfg_.radius_w(), cfg_.radius_v(), false}; }
  const BilogGenConfig& config() const { return cfg_; }

 private:
  BilogGenConfig cfg_;
  Vector x0_, u0_;
};

// First m entries of a seeded permutation of 0..n-1, so deletion sets are nested
// in m for a fixed seed.
inline std::vector<std::size_t> random_deletion(std::size_t n, std::size_t m, std::uint64_t seed) {
  if (m > n) throw InvalidArgument("cannot choose more deletions than samples");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  CounterRng rng(seed, 0xDE1);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[j]);
  }
  perm.resize(m);
  return perm;
}

// A generated problem: loss, training set, held-out population sample, domain.
template <MinimaxLoss Loss>
struct Instance {
  Loss loss;
  Dataset train;
  Dataset eval;
  DomainSpec domain;
};

inline Instance<QuadraticLoss> make_quad_instance(const QuadGenConfig& cfg, std::size_t n,
                                                  std::size_t eval_size) {
  const QuadGenerator gen(cfg);
  Dataset train = gen.draw(n, kTrainStream);
  Dataset eval = eval_size > 0 ? gen.draw(eval_size, kEvalStream) : Dataset{};
  const DomainSpec dom = quadratic_domain(train, cfg.mu_w, cfg.mu_v);
  return {QuadraticLoss(cfg.d1, cfg.d2), std::move(train), std::move(eval), dom};
}

inline Instance<BilinearLogisticLoss> make_bilog_instance(const BilogGenConfig& cfg, std::size_t n,
                                                          std::size_t eval_size) {
  const BilogGenerator gen(cfg);
  Dataset train = gen.draw(n, kTrainStream);
  Dataset eval = eval_size > 0 ? gen.draw(eval_size, kEvalStream) : Dataset{};
  return {gen.loss(), std::move(train), std::move(eval), gen.domain()};
}

}  // namespace mmu
