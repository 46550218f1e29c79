#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string_view>

#include "mmu/core.hpp"
#include "mmu/loss.hpp"
#include "mmu/total_hessian.hpp"

namespace mmu {

enum class SolverMethod { kClosedForm, kExtragradient };

inline std::string_view solver_method_name(SolverMethod m) {
  return m == SolverMethod::kClosedForm ? "closed_form" : "extragradient";
}

inline SolverMethod parse_solver_method(std::string_view s) {
  if (s == "closed_form") return SolverMethod::kClosedForm;
  if (s == "extragradient") return SolverMethod::kExtragradient;
  throw ConfigError("unknown solver method '" + std::string(s) + "'");
}

struct SolverConfig {
  double grad_tolerance = 1e-10;
  long max_iterations = 200000;
  double step_size = 0.0;  // 0 selects 1/(2 ell) from the Hessians at the start point
  SolverMethod method = SolverMethod::kClosedForm;

  void validate() const {
    if (!(grad_tolerance > 0.0)) throw InvalidArgument("grad_tolerance must be positive");
    if (max_iterations <= 0) throw InvalidArgument("max_iterations must be positive");
    if (!(step_size >= 0.0)) throw InvalidArgument("step_size must be nonnegative");
  }
};

struct SolveResult {
  PrimalDualPoint point;
  double residual = 0.0;
  long iterations = 0;
};

struct TrainedModel {
  PrimalDualPoint point;
  MemoryVariables memory;
  double residual_grad_norm = 0.0;
  std::size_t n = 0;
};

inline double joint_norm(const Gradient& g) { return std::sqrt(g.w.squaredNorm() + g.v.squaredNorm()); }

// One Newton step on the full saddle system from p. Exact for constant Hessians.
template <MinimaxLoss Loss>
PrimalDualPoint saddle_newton_step(const Loss& loss, std::span<const Sample> samples,
                                   const PrimalDualPoint& p) {
  const HessianBlocks h = avg_hessian_blocks(loss, p, samples);
  const Gradient g = avg_gradient(loss, p, samples);
  const SpdSolver neg_vv(-h.vv, "averaged vv block (negated)");
  const SpdSolver dww(total_ww(h), "averaged total Hessian in w");
  // w-step from the reduced system, then the v-step from the second block row.
  const Vector dw = -dww.solve(Vector(g.w + h.wv * neg_vv.solve(g.v)));
  const Vector dv = neg_vv.solve(Vector(h.vw * dw + g.v));
  return {p.w + dw, p.v + dv};
}

template <MinimaxLoss Loss>
  requires has_constant_hessian_v<Loss>
PrimalDualPoint solve_quadratic_saddle(const Loss& loss, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("empty dataset");
  return saddle_newton_step(loss, std::span<const Sample>(data.samples), zero_point(loss));
}

namespace detail {

inline void project(PrimalDualPoint& p, const DomainSpec& domain) {
  if (!domain.projection_enabled) return;
  project_ball(p.w, domain.radius_w);
  project_ball(p.v, domain.radius_v);
}

// Norm of the projected-gradient map; equals |grad F| without projection.
inline double stationarity(const PrimalDualPoint& p, const DomainSpec& domain, const Gradient& g) {
  if (!domain.projection_enabled) return joint_norm(g);
  PrimalDualPoint q{p.w - g.w, p.v + g.v};
  project(q, domain);
  return std::sqrt((q.w - p.w).squaredNorm() + (q.v - p.v).squaredNorm());
}

template <MinimaxLoss Loss>
double max_sample_curvature(const Loss& loss, std::span<const Sample> samples, const PrimalDualPoint& p) {
  double ell = 0.0;
  for (const auto& z : samples) {
    const HessianBlocks h = loss.hessian(p, z);
    ell = std::max(ell, max_abs_eigenvalue(symmetrize(full_hessian(h))));
  }
  return ell;
}

}  // namespace detail

// Projected extragradient for the empirical saddle problem.
template <MinimaxLoss Loss>
SolveResult solve_extragradient(const Loss& loss, const Dataset& data, const DomainSpec& domain,
                                const SolverConfig& cfg,
                                const std::optional<PrimalDualPoint>& start = std::nullopt) {
  cfg.validate();
  domain.validate();
  if (data.empty()) throw InvalidArgument("empty dataset");
  const std::span<const Sample> samples(data.samples);
  PrimalDualPoint z = start ? *start : zero_point(loss);
  check_point(loss, z);
  detail::project(z, domain);

  Gradient g = avg_gradient(loss, z, samples);
  double res = detail::stationarity(z, domain, g);
  if (res <= cfg.grad_tolerance) return {z, res, 0};

  double eta = cfg.step_size;
  if (eta == 0.0) {
    const double ell = detail::max_sample_curvature(loss, samples, z);
    eta = ell > 0.0 ? 0.5 / ell : 1.0;
  }
  const PrimalDualPoint z0 = z;
  const double res0 = res;
  for (long it = 1; it <= cfg.max_iterations; ++it) {
    PrimalDualPoint half{z.w - eta * g.w, z.v + eta * g.v};
    detail::project(half, domain);
    const Gradient gh = avg_gradient(loss, half, samples);
    z.w -= eta * gh.w;
    z.v += eta * gh.v;
    detail::project(z, domain);
    g = avg_gradient(loss, z, samples);
    res = detail::stationarity(z, domain, g);
    if (res <= cfg.grad_tolerance) return {z, res, it};
    if (!std::isfinite(res) || res > 1e6 * (res0 + 1.0)) {
      // Curvature underestimated at the start point; restart with a smaller step.
      eta *= 0.5;
      z = z0;
      g = avg_gradient(loss, z, samples);
      res = res0;
    }
  }
  throw SolverError(detail::concat("extragradient did not reach tolerance ", cfg.grad_tolerance,
                                   " in ", cfg.max_iterations, " iterations (residual ", res, ")"),
                    res);
}

template <MinimaxLoss Loss>
SolveResult solve_saddle(const Loss& loss, const Dataset& data, const DomainSpec& domain,
                         const SolverConfig& cfg) {
  if (cfg.method == SolverMethod::kClosedForm) {
    if constexpr (has_constant_hessian_v<Loss>) {
      if (domain.projection_enabled) {
        throw ConfigError("closed-form solve does not support projection; use extragradient");
      }
      SolveResult r{solve_quadratic_saddle(loss, data), 0.0, 1};
      r.residual = joint_norm(avg_gradient(loss, r.point, data));
      return r;
    } else {
      throw ConfigError("closed-form solve requires a loss with constant Hessian");
    }
  }
  return solve_extragradient(loss, data, domain, cfg);
}

// Result of a Newton solve on one block of the objective averaged over samples
// and over a set of fixed partner points.
struct InnerResult {
  Vector x;
  double value = 0.0;
  double residual = 0.0;
};

namespace detail {

template <MinimaxLoss Loss, bool kDual>
struct BlockObjective {
  const Loss& loss;
  std::span<const Sample> samples;
  std::span<const Vector> partners;

  PrimalDualPoint at(const Vector& x, const Vector& partner) const {
    if constexpr (kDual) return {partner, x};
    else return {x, partner};
  }

  // Gradient and Hessian of the averaged objective with the sign flipped for v so
  // both cases are minimizations.
  void eval(const Vector& x, Vector& grad, Matrix* hess) const {
    const Index d = x.size();
    grad.setZero(d);
    if (hess) hess->setZero(d, d);
    for (const Vector& y : partners) {
      const PrimalDualPoint p = at(x, y);
      for (const auto& z : samples) {
        const Gradient g = loss.gradient(p, z);
        if constexpr (kDual) grad -= g.v;
        else grad += g.w;
        if (hess) {
          const HessianBlocks h = loss.hessian(p, z);
          if constexpr (kDual) *hess -= h.vv;
          else *hess += h.ww;
        }
      }
    }
    const double inv = 1.0 / static_cast<double>(partners.size() * samples.size());
    grad *= inv;
    if (hess) *hess *= inv;
  }

  double value(const Vector& x) const {
    double s = 0.0;
    for (const Vector& y : partners)
      for (const auto& z : samples) s += loss.value(at(x, y), z);
    return s / static_cast<double>(partners.size() * samples.size());
  }
};

template <MinimaxLoss Loss, bool kDual>
InnerResult newton_block(const Loss& loss, std::span<const Sample> samples,
                         std::span<const Vector> partners, Vector x, const SolverConfig& cfg) {
  if (samples.empty() || partners.empty()) throw InvalidArgument("inner solve over an empty set");
  const BlockObjective<Loss, kDual> obj{loss, samples, partners};
  Vector g;
  Matrix H;
  obj.eval(x, g, &H);
  double res = g.norm();
  constexpr int kMaxNewton = 100;
  for (int it = 0; it < kMaxNewton && res > cfg.grad_tolerance; ++it) {
    const Vector step = SpdSolver(H, kDual ? "dual Hessian" : "primal Hessian").solve(g);
    // The Newton direction descends |g|^2, so halving always finds progress.
    double t = 1.0;
    bool moved = false;
    for (int k = 0; k < 60; ++k, t *= 0.5) {
      const Vector trial = x - t * step;
      Vector gt;
      obj.eval(trial, gt, nullptr);
      if (gt.norm() < res) {
        x = trial;
        moved = true;
        break;
      }
    }
    if (!moved) break;
    obj.eval(x, g, &H);
    res = g.norm();
  }
  if (!(res <= cfg.grad_tolerance)) {
    throw SolverError(detail::concat("inner Newton solve stalled at residual ", res), res);
  }
  return {x, obj.value(x), res};
}

}  // namespace detail

// argmax_v of the objective averaged over samples and primal points.
template <MinimaxLoss Loss>
InnerResult maximize_over_dual(const Loss& loss, std::span<const Sample> samples,
                               std::span<const Vector> primal_points, const SolverConfig& cfg,
                               std::optional<Vector> start = std::nullopt) {
  Vector v0 = start ? *start : Vector::Zero(loss.dual_dim());
  return detail::newton_block<Loss, true>(loss, samples, primal_points, std::move(v0), cfg);
}

// argmin_w of the objective averaged over samples and dual points.
template <MinimaxLoss Loss>
InnerResult minimize_over_primal(const Loss& loss, std::span<const Sample> samples,
                                 std::span<const Vector> dual_points, const SolverConfig& cfg,
                                 std::optional<Vector> start = std::nullopt) {
  Vector w0 = start ? *start : Vector::Zero(loss.primal_dim());
  return detail::newton_block<Loss, false>(loss, samples, dual_points, std::move(w0), cfg);
}

template <MinimaxLoss Loss>
Vector best_response_v(const Loss& loss, const Dataset& data, const Vector& w, const SolverConfig& cfg) {
  if (w.size() != loss.primal_dim()) throw DimensionError("best_response_v: w has the wrong size");
  const Vector pts[1] = {w};
  return maximize_over_dual(loss, std::span<const Sample>(data.samples), pts, cfg).x;
}

template <MinimaxLoss Loss>
Vector best_response_w(const Loss& loss, const Dataset& data, const Vector& v, const SolverConfig& cfg) {
  if (v.size() != loss.dual_dim()) throw DimensionError("best_response_w: v has the wrong size");
  const Vector pts[1] = {v};
  return minimize_over_primal(loss, std::span<const Sample>(data.samples), pts, cfg).x;
}

template <MinimaxLoss Loss>
TrainedModel train(const Loss& loss, const Dataset& data, const DomainSpec& domain,
                   const SolverConfig& cfg) {
  const SolveResult r = solve_saddle(loss, data, domain, cfg);
  return {r.point, memory_variables(loss, data, r.point), r.residual, data.size()};
}

}  // namespace mmu
