#pragma once

#include <algorithm>
#include <cstdint>

#include "mmu/core.hpp"
#include "mmu/loss.hpp"
#include "mmu/random.hpp"

namespace mmu {

struct LossConstants {
  double L = 1.0;      // Lipschitz constant of f
  double ell = 1.0;    // gradient Lipschitz constant
  double rho = 0.0;    // Hessian Lipschitz constant
  double mu_w = 1.0;   // strong convexity in w
  double mu_v = 1.0;   // strong concavity in v
  double mu_ww = 1.0;  // lower bound on the w total Hessian
  double mu_vv = 1.0;  // lower bound on minus the v total Hessian
  bool estimated = false;

  double mu() const { return std::min({mu_w, mu_v, mu_ww, mu_vv}); }

  void validate() const {
    const auto pos = [](double x) { return x > 0.0 && std::isfinite(x); };
    if (!pos(L) || !pos(ell) || !(rho >= 0.0) || !std::isfinite(rho) || !pos(mu_w) ||
        !pos(mu_v) || !pos(mu_ww) || !pos(mu_vv)) {
      throw InvalidArgument(detail::concat("loss constants must be positive and finite (L=", L,
                                           ", ell=", ell, ", rho=", rho, ", mu=", mu(), ")"));
    }
    if (ell < mu()) {
      throw InvalidArgument(detail::concat("ell=", ell, " is below mu=", mu()));
    }
  }
};

// All four strong-convexity constants set to the same value.
inline LossConstants uniform_constants(double L, double ell, double rho, double mu) {
  return {L, ell, rho, mu, mu, mu, mu, false};
}

inline Matrix full_hessian(const HessianBlocks& h) {
  const Index d1 = h.ww.rows(), d2 = h.vv.rows();
  Matrix m(d1 + d2, d1 + d2);
  m.topLeftCorner(d1, d1) = h.ww;
  m.topRightCorner(d1, d2) = h.wv;
  m.bottomLeftCorner(d2, d1) = h.vw;
  m.bottomRightCorner(d2, d2) = h.vv;
  return m;
}

namespace detail {

inline Matrix schur_ww(const HessianBlocks& h) {
  const SpdSolver neg_vv(-h.vv, "vv block (negated)");
  return symmetrize(h.ww + h.wv * neg_vv.solve(h.vw));
}

inline Matrix schur_vv(const HessianBlocks& h) {
  const SpdSolver ww(h.ww, "ww block");
  return symmetrize(h.vv - h.vw * ww.solve(h.wv));
}

}  // namespace detail

// Sample-based estimates of the regularity constants over the domain balls.
// L, ell and rho are maxima over probes (lower bounds on the true suprema); the
// mu values are minima over probes (upper bounds on the true infima).
template <MinimaxLoss Loss>
LossConstants estimate_constants(const Loss& loss, const DomainSpec& domain, const Dataset& data,
                                 int probe_count, std::uint64_t seed) {
  domain.validate();
  if (probe_count < 100) throw InvalidArgument("estimate_constants needs probe_count >= 100");
  if (data.empty()) throw InvalidArgument("estimate_constants needs a nonempty dataset");
  const Index d1 = loss.primal_dim(), d2 = loss.dual_dim();
  CounterRng rng(seed, 0x51);

  LossConstants c;
  c.L = 0.0;
  c.ell = 0.0;
  c.rho = 0.0;
  c.mu_w = c.mu_v = c.mu_ww = c.mu_vv = std::numeric_limits<double>::infinity();
  c.estimated = true;

  // Dataset-level total Hessians are expensive; probe them on a subset.
  const int total_probes = std::min(probe_count, 32);

  for (int k = 0; k < probe_count; ++k) {
    const Sample& z = data.samples[static_cast<std::size_t>(k) % data.size()];
    PrimalDualPoint p;
    if (k % 2 == 0) {
      // Gradient norms peak on the boundary for the built-in families.
      p = {uniform_on_sphere(rng, d1, domain.radius_w), uniform_on_sphere(rng, d2, domain.radius_v)};
    } else {
      p = {uniform_in_ball(rng, d1, domain.radius_w), uniform_in_ball(rng, d2, domain.radius_v)};
    }
    const Gradient g = loss.gradient(p, z);
    c.L = std::max(c.L, std::sqrt(g.w.squaredNorm() + g.v.squaredNorm()));

    const HessianBlocks h = loss.hessian(p, z);
    const Matrix H = symmetrize(full_hessian(h));
    c.ell = std::max(c.ell, max_abs_eigenvalue(H));
    c.mu_w = std::min(c.mu_w, min_eigenvalue(symmetrize(h.ww)));
    c.mu_v = std::min(c.mu_v, min_eigenvalue(symmetrize(-h.vv)));

    // Hessian Lipschitz ratio against a nearby and a far point.
    for (double scale : {0.05, 1.0}) {
      PrimalDualPoint q{p.w + uniform_in_ball(rng, d1, scale * domain.radius_w),
                        p.v + uniform_in_ball(rng, d2, scale * domain.radius_v)};
      const double dist = std::sqrt((q.w - p.w).squaredNorm() + (q.v - p.v).squaredNorm());
      if (dist <= 0.0) continue;
      const Matrix Hq = symmetrize(full_hessian(loss.hessian(q, z)));
      c.rho = std::max(c.rho, max_abs_eigenvalue(Hq - H) / dist);
    }

    if (k < total_probes) {
      const HessianBlocks hs = avg_hessian_blocks(loss, p, data);
      c.mu_ww = std::min(c.mu_ww, min_eigenvalue(detail::schur_ww(hs)));
      c.mu_vv = std::min(c.mu_vv, min_eigenvalue(symmetrize(-detail::schur_vv(hs))));
    }
  }
  if constexpr (has_constant_hessian_v<Loss>) c.rho = 0.0;
  return c;
}

// Constants of f + (lw/2)|w|^2 - (lv/2)|v|^2 over the domain balls.
inline LossConstants regularized_constants(const LossConstants& base, double lambda_w,
                                           double lambda_v, const DomainSpec& domain) {
  if (!(lambda_w >= 0.0) || !(lambda_v >= 0.0)) {
    throw InvalidArgument("regularization weights must be nonnegative");
  }
  LossConstants c = base;
  const double lambda = std::max(lambda_w, lambda_v);
  c.L = 2.0 * base.L + lambda_w * domain.radius_w + lambda_v * domain.radius_v;
  c.ell = std::sqrt(2.0) * (2.0 * base.ell + lambda);
  c.mu_w = base.mu_w + lambda_w;
  c.mu_v = base.mu_v + lambda_v;
  c.mu_ww = base.mu_ww + lambda_w;
  c.mu_vv = base.mu_vv + lambda_v;
  return c;
}

// Convex-concave base regularized on both sides: mu becomes lambda.
inline LossConstants cc_constants(const LossConstants& base, double lambda) {
  LossConstants c = base;
  c.L = 4.0 * base.L;
  c.ell = 3.0 * std::sqrt(2.0) * base.ell;
  c.mu_w = c.mu_v = c.mu_ww = c.mu_vv = lambda;
  return c;
}

// Convex / strongly-concave base regularized on the w side only.
inline LossConstants csc_constants(const LossConstants& base, double lambda) {
  LossConstants c = base;
  c.L = 3.0 * base.L;
  c.ell = 3.0 * std::sqrt(2.0) * base.ell;
  c.mu_w = c.mu_ww = lambda;
  c.mu_v = c.mu_vv = std::min(base.mu_v, base.mu_vv);
  return c;
}

}  // namespace mmu
