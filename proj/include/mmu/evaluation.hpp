#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include "mmu/constants.hpp"
#include "mmu/core.hpp"
#include "mmu/data_gen.hpp"
#include "mmu/loss.hpp"
#include "mmu/saddle_solver.hpp"
#include "mmu/unlearner.hpp"

namespace mmu {

// Worker count from MMU_THREADS (default 1). Work items write to their own slot,
// so results do not depend on the count.
inline unsigned worker_count() {
  if (const char* s = std::getenv("MMU_THREADS")) {
    const long v = std::strtol(s, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return 1;
}

inline void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = std::min<std::size_t>(worker_count(), std::max<std::size_t>(count, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < workers; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < count; i += workers) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <MinimaxLoss Loss>
PrimalDualPoint retrain_oracle(const Loss& loss, const Dataset& data,
                               std::span<const std::size_t> deleted, const DomainSpec& domain,
                               const SolverConfig& cfg) {
  if (deleted.size() >= data.size()) {
    throw InvalidArgument(detail::concat("cannot delete m=", deleted.size(), " of n=", data.size(), " samples"));
  }
  return solve_saddle(loss, remove_indices(data, deleted), domain, cfg).point;
}

struct Closeness {
  double dw = 0.0;
  double dv = 0.0;
};

inline Closeness measure_closeness(const PrimalDualPoint& pre_noise, const PrimalDualPoint& retrained) {
  if (pre_noise.w.size() != retrained.w.size() || pre_noise.v.size() != retrained.v.size()) {
    throw DimensionError("measure_closeness: point dimensions differ");
  }
  return {(pre_noise.w - retrained.w).norm(), (pre_noise.v - retrained.v).norm()};
}

// Samples standing in for the population. Losses affine in the sample collapse
// to their mean sample, which is exact and much cheaper.
template <MinimaxLoss Loss>
std::vector<Sample> evaluation_samples(const Loss&, const Dataset& eval) {
  if (eval.empty()) throw InvalidArgument("empty evaluation set");
  if constexpr (is_sample_affine_v<Loss>) {
    return {mean_quadratic_sample(std::span<const Sample>(eval.samples))};
  } else {
    return eval.samples;
  }
}

struct RiskReport {
  double weak_pd = 0.0;
  double strong_pd = 0.0;
  std::size_t trials = 0;
  std::size_t eval_set_size = 0;
  double inner_tolerance = 0.0;
};

namespace detail {

inline SolverConfig inner_config(const SolverConfig& cfg) {
  SolverConfig c = cfg;
  c.grad_tolerance = std::min(cfg.grad_tolerance, 1e-10);
  return c;
}

inline void split_outputs(std::span<const PrimalDualPoint> outputs, std::vector<Vector>& ws,
                          std::vector<Vector>& vs) {
  if (outputs.empty()) throw InvalidArgument("risk estimate needs at least one output");
  ws.clear();
  vs.clear();
  for (const auto& p : outputs) {
    ws.push_back(p.w);
    vs.push_back(p.v);
  }
}

}  // namespace detail

// max_v E F(w^u, v) - min_w E F(w, v^u), expectation over the outputs inside.
template <MinimaxLoss Loss>
double empirical_weak_pd_risk(const Loss& loss, std::span<const Sample> population,
                              std::span<const PrimalDualPoint> outputs, const SolverConfig& cfg) {
  std::vector<Vector> ws, vs;
  detail::split_outputs(outputs, ws, vs);
  const SolverConfig inner = detail::inner_config(cfg);
  const double hi = maximize_over_dual(loss, population, std::span<const Vector>(ws), inner).value;
  const double lo = minimize_over_primal(loss, population, std::span<const Vector>(vs), inner).value;
  return hi - lo;
}

// E[max_v F(w^u, v) - min_w F(w, v^u)], expectation outside.
template <MinimaxLoss Loss>
double empirical_strong_pd_risk(const Loss& loss, std::span<const Sample> population,
                                std::span<const PrimalDualPoint> outputs, const SolverConfig& cfg) {
  if (outputs.empty()) throw InvalidArgument("risk estimate needs at least one output");
  const SolverConfig inner = detail::inner_config(cfg);
  std::vector<double> gaps(outputs.size());
  parallel_for(outputs.size(), [&](std::size_t k) {
    const Vector w[1] = {outputs[k].w};
    const Vector v[1] = {outputs[k].v};
    gaps[k] = maximize_over_dual(loss, population, std::span<const Vector>(w), inner).value -
              minimize_over_primal(loss, population, std::span<const Vector>(v), inner).value;
  });
  double s = 0.0;
  for (double g : gaps) s += g;
  return s / static_cast<double>(outputs.size());
}

template <MinimaxLoss Loss>
RiskReport evaluate_risk(const Loss& loss, const Dataset& eval, std::span<const PrimalDualPoint> outputs,
                         const SolverConfig& cfg) {
  const std::vector<Sample> pop = evaluation_samples(loss, eval);
  RiskReport r;
  r.weak_pd = empirical_weak_pd_risk(loss, std::span<const Sample>(pop), outputs, cfg);
  r.strong_pd = empirical_strong_pd_risk(loss, std::span<const Sample>(pop), outputs, cfg);
  r.trials = outputs.size();
  r.eval_set_size = eval.size();
  r.inner_tolerance = detail::inner_config(cfg).grad_tolerance;
  return r;
}

// ---- Sensitivity audit ------------------------------------------------------------

struct AuditRow {
  std::uint64_t seed = 0;
  std::size_t n = 0;
  std::size_t m = 0;
  LossConstants constants;
  Closeness alg2;
  double bound_alg2 = 0.0;
  bool alg2_within_capacity = true;
  Closeness alg3;
  double bound_alg3 = 0.0;
  double train_residual = 0.0;

  double ratio_alg2() const {
    const double d = std::max(alg2.dw, alg2.dv);
    return bound_alg2 > 0.0 ? d / bound_alg2 : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  double ratio_alg3() const {
    const double d = std::max(alg3.dw, alg3.dv);
    return bound_alg3 > 0.0 ? d / bound_alg3 : (d > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
};

struct AuditReport {
  std::vector<AuditRow> rows;
  double max_ratio_alg2 = 0.0;
  double max_ratio_alg3 = 0.0;
  std::size_t alg2_over_capacity = 0;
};

struct AuditOptions {
  SolverConfig solver;
  HessianMode hessian_mode = HessianMode::kCombined;
  int probe_count = 200;
};

// Runs one instance: train, both unlearning updates without noise, retrain, compare.
template <MinimaxLoss Loss>
AuditRow audit_instance(const Instance<Loss>& inst, std::size_t m, std::uint64_t seed,
                        const AuditOptions& opt,
                        const std::optional<LossConstants>& fixed = std::nullopt) {
  AuditRow row;
  row.seed = seed;
  row.n = inst.train.size();
  row.m = m;
  const TrainedModel model = train(inst.loss, inst.train, inst.domain, opt.solver);
  row.train_residual = model.residual_grad_norm;
  row.constants = fixed ? *fixed : estimate_constants(inst.loss, inst.domain, inst.train, opt.probe_count, seed);

  UnlearnRequest req;
  req.deleted_indices = random_deletion(row.n, m, seed);
  req.add_noise = false;
  req.hessian_mode = opt.hessian_mode;
  const PrimalDualPoint truth =
      retrain_oracle(inst.loss, inst.train, std::span<const std::size_t>(req.deleted_indices), inst.domain, opt.solver);

  const UnlearnResult r3 = unlearn_alg3(model, req, inst.loss, inst.train, row.constants);
  row.alg3 = measure_closeness(r3.pre_noise, truth);
  row.bound_alg3 = r3.closeness_bound();
  try {
    const UnlearnResult r2 = unlearn_alg2(model, req, inst.loss, inst.train, row.constants);
    row.alg2 = measure_closeness(r2.pre_noise, truth);
    row.bound_alg2 = r2.closeness_bound();
  } catch (const CapacityError&) {
    row.alg2_within_capacity = false;
  }
  return row;
}

// `make(seed)` returns an Instance; instance k uses seed + k.
template <class Factory>
AuditReport audit_sensitivity(const Factory& make, std::size_t instance_count, std::size_t m,
                              std::uint64_t seed, const AuditOptions& opt = {}) {
  if (instance_count < 1) throw InvalidArgument("audit needs at least one instance");
  AuditReport rep;
  rep.rows.resize(instance_count);
  parallel_for(instance_count, [&](std::size_t k) {
    const auto inst = make(seed + k);
    rep.rows[k] = audit_instance(inst, m, seed + k, opt);
  });
  for (const auto& r : rep.rows) {
    rep.max_ratio_alg3 = std::max(rep.max_ratio_alg3, r.ratio_alg3());
    if (r.alg2_within_capacity) rep.max_ratio_alg2 = std::max(rep.max_ratio_alg2, r.ratio_alg2());
    else ++rep.alg2_over_capacity;
  }
  return rep;
}

// ---- Deletion capacity ------------------------------------------------------------

struct SweepConfig {
  std::vector<std::size_t> m_grid;
  double gamma = 0.01;
  std::size_t trials = 64;
  double epsilon = 1.0;
  double delta = 1e-5;
  UnlearnMode mode = UnlearnMode::kEfficient;
  HessianMode hessian_mode = HessianMode::kCombined;
  std::uint64_t seed = 0;  // deletion sets and noise
  SolverConfig solver;
  int probe_count = 200;
  std::optional<LossConstants> constants;  // estimated from the training set when absent
};

struct CurvePoint {
  std::size_t m = 0;
  double weak_pd = 0.0;
  double strong_pd = 0.0;
  double sigma_w = 0.0;
  double sigma_v = 0.0;
  double bound = 0.0;
};

struct CapacityReport {
  double gamma = 0.01;
  std::size_t m_max = 0;
  std::vector<CurvePoint> risk_curve;
  bool stopped_at_capacity = false;  // grid cut short by the calibration limit
  LossConstants constants;
};

template <MinimaxLoss Loss>
CapacityReport sweep_deletion_capacity(const Instance<Loss>& inst, const SweepConfig& cfg) {
  if (!(cfg.gamma >= 0.0)) throw InvalidArgument("gamma must be nonnegative");
  if (cfg.trials == 0) throw InvalidArgument("sweep needs at least one trial");
  if (!std::is_sorted(cfg.m_grid.begin(), cfg.m_grid.end())) throw InvalidArgument("m grid must be ascending");

  CapacityReport rep;
  rep.gamma = cfg.gamma;
  const TrainedModel model = train(inst.loss, inst.train, inst.domain, cfg.solver);
  rep.constants = cfg.constants ? *cfg.constants
                                : estimate_constants(inst.loss, inst.domain, inst.train, cfg.probe_count, cfg.seed);
  const std::vector<Sample> pop = evaluation_samples(inst.loss, inst.eval);
  const std::size_t n = inst.train.size();

  for (std::size_t m : cfg.m_grid) {
    if (m >= n) break;
    UnlearnRequest req;
    req.deleted_indices = random_deletion(n, m, cfg.seed);
    req.epsilon = cfg.epsilon;
    req.delta = cfg.delta;
    req.mode = cfg.mode;
    req.hessian_mode = cfg.hessian_mode;
    req.add_noise = false;
    UnlearnResult base;
    try {
      base = unlearn(model, req, inst.loss, inst.train, rep.constants);
    } catch (const CapacityError&) {
      rep.stopped_at_capacity = true;
      break;
    }
    const double sw = noise_from_bound(base.bound_w, cfg.epsilon, cfg.delta);
    const double sv = noise_from_bound(base.bound_v, cfg.epsilon, cfg.delta);
    std::vector<PrimalDualPoint> outs(cfg.trials);
    for (std::size_t k = 0; k < cfg.trials; ++k) {
      outs[k] = gaussian_perturb(base.pre_noise, {sw, sv, cfg.seed * 1000003ULL + m * 1009ULL + k});
    }
    CurvePoint cp;
    cp.m = m;
    cp.weak_pd = empirical_weak_pd_risk(inst.loss, std::span<const Sample>(pop),
                                        std::span<const PrimalDualPoint>(outs), cfg.solver);
    cp.strong_pd = empirical_strong_pd_risk(inst.loss, std::span<const Sample>(pop),
                                            std::span<const PrimalDualPoint>(outs), cfg.solver);
    cp.sigma_w = sw;
    cp.sigma_v = sv;
    cp.bound = base.closeness_bound();
    rep.risk_curve.push_back(cp);
    if (cp.weak_pd <= cfg.gamma) rep.m_max = m;
  }
  return rep;
}

}  // namespace mmu
