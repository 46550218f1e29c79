#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "mmu/constants.hpp"
#include "mmu/core.hpp"
#include "mmu/loss.hpp"
#include "mmu/mechanism.hpp"
#include "mmu/saddle_solver.hpp"
#include "mmu/total_hessian.hpp"

namespace mmu {

enum class UnlearnMode { kRecompute, kEfficient, kOnline };

inline std::string_view unlearn_mode_name(UnlearnMode m) {
  switch (m) {
    case UnlearnMode::kRecompute: return "alg2";
    case UnlearnMode::kEfficient: return "alg3";
    case UnlearnMode::kOnline: return "online";
  }
  return "?";
}

inline UnlearnMode parse_unlearn_mode(std::string_view s) {
  if (s == "alg2" || s == "recompute") return UnlearnMode::kRecompute;
  if (s == "alg3" || s == "efficient") return UnlearnMode::kEfficient;
  if (s == "online") return UnlearnMode::kOnline;
  throw ConfigError("unknown unlearning mode '" + std::string(s) + "'");
}

struct UnlearnRequest {
  std::vector<std::size_t> deleted_indices;
  double epsilon = 1.0;
  double delta = 1e-5;
  std::uint64_t seed = 0;
  UnlearnMode mode = UnlearnMode::kEfficient;
  HessianMode hessian_mode = HessianMode::kCombined;
  bool add_noise = true;

  std::size_t m() const { return deleted_indices.size(); }

  void validate(std::size_t n) const {
    if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
    if (!(delta > 0.0 && delta < 1.0)) throw InvalidArgument("delta must lie in (0, 1)");
    if (deleted_indices.size() >= n) {
      throw InvalidArgument(detail::concat("cannot delete m=", deleted_indices.size(), " of n=", n, " samples"));
    }
    std::vector<std::size_t> s = deleted_indices;
    std::sort(s.begin(), s.end());
    if (std::adjacent_find(s.begin(), s.end()) != s.end()) {
      throw InvalidArgument("deleted indices contain duplicates");
    }
    if (!s.empty() && s.back() >= n) {
      throw InvalidArgument(detail::concat("deleted index ", s.back(), " out of range (n=", n, ")"));
    }
  }
};

struct UnlearnResult {
  PrimalDualPoint output;
  PrimalDualPoint pre_noise;
  double sigma_w = 0.0;
  double sigma_v = 0.0;
  double bound_w = 0.0;  // closeness bound for the w block
  double bound_v = 0.0;
  UnlearnMode mode = UnlearnMode::kEfficient;
  std::size_t n = 0;
  std::size_t m = 0;
  bool estimated_certificate = false;

  double closeness_bound() const { return std::max(bound_w, bound_v); }
};

// ---- Closeness bounds and noise scales ---------------------------------------

inline void check_counts(std::size_t n, std::size_t m) {
  if (n == 0) throw InvalidArgument("n must be positive");
  if (m >= n) throw InvalidArgument(detail::concat("m=", m, " must be below n=", n));
}

inline double closeness_bound_alg2(const LossConstants& c, std::size_t n, std::size_t m) {
  check_counts(n, m);
  const double mu = c.mu(), L = c.L, l = c.ell, r = c.rho;
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double denom = mu * nn - (l + l * l / mu) * mm;
  if (!(denom > 0.0)) {
    throw CapacityError(detail::concat("deletion of m=", m, " exceeds the calibration capacity at n=", n,
                                       " (mu*n - (ell + ell^2/mu)*m = ", denom, ")"));
  }
  if (m == 0) return 0.0;
  const double coef = 8.0 * std::sqrt(2.0) * L * L * l * l * l * r / std::pow(mu, 5) +
                      8.0 * L * l * l / (mu * mu);
  return coef * mm * mm / (nn * denom);
}

inline double closeness_bound_efficient(const LossConstants& c, std::size_t n, std::size_t m) {
  check_counts(n, m);
  const double mu = c.mu(), L = c.L, l = c.ell, r = c.rho;
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double coef = 8.0 * std::sqrt(2.0) * L * L * l * l * l * r / std::pow(mu, 6) +
                      2.0 * std::sqrt(2.0) * L * l * l / std::pow(mu, 3);
  return coef * mm * mm / (nn * nn);
}

inline double noise_from_bound(double bound, double epsilon, double delta) {
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  return 2.0 * bound * gaussian_calibration(delta) / epsilon;
}

inline double noise_scale_alg2(const LossConstants& c, std::size_t n, std::size_t m, double epsilon,
                               double delta) {
  return noise_from_bound(closeness_bound_alg2(c, n, m), epsilon, delta);
}

inline double noise_scale_efficient(const LossConstants& c, std::size_t n, std::size_t m,
                                    double epsilon, double delta) {
  return noise_from_bound(closeness_bound_efficient(c, n, m), epsilon, delta);
}

struct BlockBounds {
  double w = 0.0;
  double v = 0.0;
};

// Convex / strongly-concave case after w-side regularization. Expects constants
// from csc_constants: mu_w carries lambda, mu_v the concavity modulus.
inline BlockBounds closeness_bounds_csc(const LossConstants& c, std::size_t n, std::size_t m) {
  check_counts(n, m);
  const double lam = std::min(c.mu_w, c.mu_ww), mu = std::min(c.mu_v, c.mu_vv);
  const double L = c.L, l = c.ell, r = c.rho;
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double den_w = lam * nn - (l + l * l / mu) * mm;
  const double den_v = mu * nn - (l + l * l / lam) * mm;
  if (!(den_w > 0.0) || !(den_v > 0.0)) {
    throw CapacityError(detail::concat("deletion of m=", m, " exceeds the calibration capacity at n=", n));
  }
  if (m == 0) return {};
  const double s2 = 8.0 * std::sqrt(2.0) * L * L * l * l * l * r;
  const double lin = 8.0 * L * l * l / (lam * mu);
  return {(s2 / (lam * lam * mu * mu * mu) + lin) * mm * mm / (nn * den_w),
          (s2 / (lam * lam * lam * mu * mu) + lin) * mm * mm / (nn * den_v)};
}

inline BlockBounds noise_scales_csc(const LossConstants& c, std::size_t n, std::size_t m,
                                    double epsilon, double delta) {
  const BlockBounds b = closeness_bounds_csc(c, n, m);
  return {noise_from_bound(b.w, epsilon, delta), noise_from_bound(b.v, epsilon, delta)};
}

// ---- Convex-concave regularization choice --------------------------------------

enum class RiskTarget { kWeak, kStrong };

struct CCConfig {
  double lambda = 0.1;
  double b_w = 1.0;
  double b_v = 1.0;
  RiskTarget target = RiskTarget::kWeak;
};

struct LambdaSelection {
  double lambda = 0.0;
  bool clamped = false;  // formula exceeded ell; lambda was pulled just below it
};

// d is max(d1, d2).
inline LambdaSelection lambda_select_cc(const LossConstants& c, std::size_t n, std::size_t m,
                                        double epsilon, double delta, double b_w, double b_v,
                                        Index d, RiskTarget target) {
  if (n == 0 || !(epsilon > 0.0) || !(delta > 0.0 && delta < 1.0) || !(b_w > 0.0) || !(b_v > 0.0) || d <= 0) {
    throw InvalidArgument("lambda_select_cc: invalid arguments");
  }
  const double B2 = b_w * b_w + b_v * b_v;
  const double nn = static_cast<double>(n), mm = static_cast<double>(m);
  const double L = c.L, l = c.ell, r = c.rho;
  const double priv = mm * mm * std::sqrt(static_cast<double>(d) * std::log(1.0 / delta)) / (B2 * nn * nn * epsilon);
  double lam = std::max({L / std::sqrt(B2) * std::sqrt(mm / nn), std::pow(L * L * l * l * priv, 0.25),
                         std::pow(L * L * L * l * l * l * r * priv, 1.0 / 7.0)});
  if (target == RiskTarget::kStrong) lam = std::max(lam, std::cbrt(L * L * l / (B2 * nn)));
  LambdaSelection out{lam, false};
  if (lam >= l) {
    out.lambda = std::nextafter(l, 0.0);
    out.clamped = true;
  }
  return out;
}

// ---- Updates -------------------------------------------------------------------

namespace detail {

inline UnlearnResult finish(const PrimalDualPoint& pre, double bound_w, double bound_v,
                            const UnlearnRequest& req, std::size_t n, bool estimated) {
  UnlearnResult r;
  r.pre_noise = pre;
  r.bound_w = bound_w;
  r.bound_v = bound_v;
  r.mode = req.mode;
  r.n = n;
  r.m = req.m();
  r.estimated_certificate = estimated;
  if (req.add_noise) {
    r.sigma_w = noise_from_bound(bound_w, req.epsilon, req.delta);
    r.sigma_v = noise_from_bound(bound_v, req.epsilon, req.delta);
  }
  r.output = gaussian_perturb(pre, {r.sigma_w, r.sigma_v, req.seed});
  return r;
}

// Complete Newton step against the retained-set total Hessians.
template <MinimaxLoss Loss>
PrimalDualPoint recompute_step(const TrainedModel& trained, const UnlearnRequest& req,
                               const Loss& loss, const Dataset& data) {
  const std::size_t n = trained.n, m = req.m();
  if (m == 0) return trained.point;
  const std::vector<Sample> deleted = gather(data, req.deleted_indices);
  const PrimalDualPoint& anchor = trained.memory.anchor;
  const Gradient g = sum_gradient(loss, anchor, std::span<const Sample>(deleted));
  const RemainingTotals rem =
      req.hessian_mode == HessianMode::kCombined
          ? combine_remaining(trained.memory, std::span<const Sample>(deleted), loss)
          : recompute_remaining(trained.memory, data, std::span<const std::size_t>(req.deleted_indices), loss);
  const double inv = 1.0 / static_cast<double>(n - m);
  const SpdSolver dww(rem.d_ww, "retained total Hessian in w");
  const SpdSolver neg_dvv(-rem.d_vv, "retained total Hessian in v (negated)");
  return {trained.point.w + inv * dww.solve(g.w), trained.point.v - inv * neg_dvv.solve(g.v)};
}

template <MinimaxLoss Loss>
PrimalDualPoint efficient_step(const MemoryVariables& memory, const PrimalDualPoint& from,
                               std::span<const Sample> deleted, const Loss& loss) {
  if (deleted.empty()) return from;
  const Gradient g = sum_gradient(loss, memory.anchor, deleted);
  const double inv = 1.0 / static_cast<double>(memory.n);
  const SpdSolver dww(memory.d_ww, "stored total Hessian in w");
  const SpdSolver neg_dvv(-memory.d_vv, "stored total Hessian in v (negated)");
  return {from.w + inv * dww.solve(g.w), from.v - inv * neg_dvv.solve(g.v)};
}

inline void check_trained(const TrainedModel& t, const Dataset& data) {
  if (t.n != data.size() || t.memory.n != data.size()) {
    throw InvalidArgument(detail::concat("model was trained on n=", t.n, " samples but the dataset has ", data.size()));
  }
}

}  // namespace detail

template <MinimaxLoss Loss>
UnlearnResult unlearn_alg2(const TrainedModel& trained, const UnlearnRequest& req, const Loss& loss,
                           const Dataset& data, const LossConstants& c) {
  detail::check_trained(trained, data);
  req.validate(trained.n);
  const double bound = closeness_bound_alg2(c, trained.n, req.m());
  const PrimalDualPoint pre = detail::recompute_step(trained, req, loss, data);
  UnlearnRequest r = req;
  r.mode = UnlearnMode::kRecompute;
  return detail::finish(pre, bound, bound, r, trained.n, c.estimated);
}

template <MinimaxLoss Loss>
UnlearnResult unlearn_alg3(const TrainedModel& trained, const UnlearnRequest& req, const Loss& loss,
                           const Dataset& data, const LossConstants& c) {
  detail::check_trained(trained, data);
  req.validate(trained.n);
  const double bound = closeness_bound_efficient(c, trained.n, req.m());
  const std::vector<Sample> deleted = gather(data, req.deleted_indices);
  const PrimalDualPoint pre =
      detail::efficient_step(trained.memory, trained.point, std::span<const Sample>(deleted), loss);
  UnlearnRequest r = req;
  r.mode = UnlearnMode::kEfficient;
  return detail::finish(pre, bound, bound, r, trained.n, c.estimated);
}

// Sequential deletions against fixed memory variables.
struct OnlineState {
  MemoryVariables memory;
  PrimalDualPoint current;  // running pre-noise iterate
  std::vector<std::size_t> deleted;
  std::size_t capacity = 0;  // 0 = unlimited; otherwise the m the noise was sized for

  static OnlineState start(const TrainedModel& trained, std::size_t capacity = 0) {
    return {trained.memory, trained.point, {}, capacity};
  }
};

// Deletes one sample. Noise is drawn fresh on the updated iterate at the scale for
// the cumulative deletion count, with the seed offset by that count.
template <MinimaxLoss Loss>
UnlearnResult unlearn_online(OnlineState& state, std::size_t index, const Loss& loss,
                             const Dataset& data, const UnlearnRequest& req, const LossConstants& c) {
  if (std::find(state.deleted.begin(), state.deleted.end(), index) != state.deleted.end()) {
    throw InvalidArgument(detail::concat("sample ", index, " was already deleted"));
  }
  if (index >= data.size()) throw InvalidArgument(detail::concat("sample index ", index, " out of range"));
  const std::size_t m = state.deleted.size() + 1;
  if (state.capacity > 0 && m > state.capacity) {
    throw CapacityError(detail::concat("online deletion ", m, " exceeds the capacity ", state.capacity));
  }
  const double bound = closeness_bound_efficient(c, state.memory.n, m);
  const Sample* z = &data.samples[index];
  state.current = detail::efficient_step(state.memory, state.current, std::span<const Sample>(z, 1), loss);
  state.deleted.push_back(index);

  UnlearnRequest r = req;
  r.mode = UnlearnMode::kOnline;
  r.deleted_indices = state.deleted;
  r.seed = req.seed + m;
  return detail::finish(state.current, bound, bound, r, state.memory.n, c.estimated);
}

// Convex-concave base: the model must have been trained on regularize(base, lambda, lambda).
template <MinimaxLoss Loss>
UnlearnResult unlearn_cc(const TrainedModel& trained_on_regularized, const UnlearnRequest& req,
                         const Loss& base_loss, const Dataset& data, const CCConfig& cc,
                         const LossConstants& base_constants) {
  if (!(cc.lambda > 0.0) || cc.lambda >= base_constants.ell) {
    throw InvalidArgument(detail::concat("regularization lambda=", cc.lambda, " must lie in (0, ell=",
                                         base_constants.ell, ")"));
  }
  const auto reg = regularize(base_loss, cc.lambda, cc.lambda);
  const LossConstants c = cc_constants(base_constants, cc.lambda);
  return unlearn_alg2(trained_on_regularized, req, reg, data, c);
}

// Convex / strongly-concave base: trained on regularize(base, lambda, 0).
template <MinimaxLoss Loss>
UnlearnResult unlearn_csc(const TrainedModel& trained_on_regularized, const UnlearnRequest& req,
                          const Loss& base_loss, const Dataset& data, const CCConfig& cc,
                          const LossConstants& base_constants) {
  if (!(cc.lambda > 0.0) || cc.lambda >= base_constants.ell) {
    throw InvalidArgument(detail::concat("regularization lambda=", cc.lambda, " must lie in (0, ell=",
                                         base_constants.ell, ")"));
  }
  detail::check_trained(trained_on_regularized, data);
  req.validate(trained_on_regularized.n);
  const auto reg = regularize(base_loss, cc.lambda, 0.0);
  const LossConstants c = csc_constants(base_constants, cc.lambda);
  const BlockBounds b = closeness_bounds_csc(c, trained_on_regularized.n, req.m());
  const PrimalDualPoint pre = detail::recompute_step(trained_on_regularized, req, reg, data);
  UnlearnRequest r = req;
  r.mode = UnlearnMode::kRecompute;
  return detail::finish(pre, b.w, b.v, r, trained_on_regularized.n, c.estimated);
}

// Dispatch on req.mode. The online mode applies the deletions in the given order
// and reports the last step.
template <MinimaxLoss Loss>
UnlearnResult unlearn(const TrainedModel& trained, const UnlearnRequest& req, const Loss& loss,
                      const Dataset& data, const LossConstants& c) {
  switch (req.mode) {
    case UnlearnMode::kRecompute: return unlearn_alg2(trained, req, loss, data, c);
    case UnlearnMode::kEfficient: return unlearn_alg3(trained, req, loss, data, c);
    case UnlearnMode::kOnline: {
      detail::check_trained(trained, data);
      req.validate(trained.n);
      if (req.deleted_indices.empty()) {
        UnlearnRequest r = req;
        return detail::finish(trained.point, 0.0, 0.0, r, trained.n, c.estimated);
      }
      OnlineState state = OnlineState::start(trained);
      UnlearnResult last;
      for (std::size_t i : req.deleted_indices) last = unlearn_online(state, i, loss, data, req, c);
      return last;
    }
  }
  throw InvalidArgument("unknown unlearning mode");
}

}  // namespace mmu
