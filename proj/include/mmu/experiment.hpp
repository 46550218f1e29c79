#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mmu/config.hpp"
#include "mmu/constants.hpp"
#include "mmu/data_gen.hpp"
#include "mmu/evaluation.hpp"
#include "mmu/io.hpp"
#include "mmu/loss.hpp"
#include "mmu/mechanism.hpp"
#include "mmu/saddle_solver.hpp"
#include "mmu/unlearner.hpp"

namespace mmu {

// Resolved, validated experiment settings. Keys are documented in README.md.
struct ExperimentConfig {
  LossFamily family = LossFamily::kQuadratic;
  Index d1 = 3, d2 = 3;
  std::size_t n = 200;
  std::uint64_t seed = 0;
  QuadGenConfig quad;
  BilogGenConfig bilog;
  std::string data_path;
  std::string model_path;

  bool estimate = true;
  LossConstants constants;
  int probe_count = 200;

  SolverConfig solver;
  bool projection = false;
  std::optional<double> radius_w, radius_v;

  UnlearnMode mode = UnlearnMode::kEfficient;
  HessianMode hessian_mode = HessianMode::kCombined;
  double epsilon = 1.0;
  double delta = 1e-5;
  std::size_t m = 0;
  std::vector<std::size_t> deleted;  // explicit indices; overrides m
  std::uint64_t deletion_seed = 0;
  std::uint64_t noise_seed = 0;

  std::vector<std::size_t> m_grid;
  double gamma = 0.01;
  std::size_t trials = 64;
  std::size_t eval_factor = 20;
  std::size_t instances = 10;

  std::uint64_t hash = 0;

  static ExperimentConfig from(const Config& c) {
    ExperimentConfig e;
    e.family = parse_family(c.str("family", "quadratic"));
    e.d1 = c.integer("d1", 3);
    e.d2 = c.integer("d2", 3);
    const long long n = c.integer("n", 200);
    if (e.d1 <= 0 || e.d2 <= 0) throw ConfigError("d1 and d2 must be positive");
    if (n <= 1) throw ConfigError("n must be at least 2");
    e.n = static_cast<std::size_t>(n);
    e.seed = static_cast<std::uint64_t>(c.integer("seed", 0));

    e.quad.d1 = e.bilog.d1 = e.d1;
    e.quad.d2 = e.bilog.d2 = e.d2;
    e.quad.seed = e.bilog.seed = e.seed;
    e.quad.mu_w = c.real("mu_w", 1.0);
    e.quad.mu_v = e.bilog.mu_v = c.real("mu_v", 1.0);
    e.quad.spectrum_width = c.real("spectrum_width", 1.0);
    e.quad.coupling = c.real("coupling", 1.0);
    e.quad.linear_shift = c.real("linear_shift", 1.0);
    e.quad.linear_noise = c.real("linear_noise", 1.0);
    e.bilog.mu_w_floor = c.real("mu_w_floor", 0.0);
    e.bilog.x_max = c.real("x_max", 1.0);
    e.bilog.u_max = c.real("u_max", 1.0);
    e.data_path = c.str("data", "");
    e.model_path = c.str("model", "");

    const std::string cm = c.str("constants", "estimate");
    if (cm == "estimate") {
      e.estimate = true;
    } else if (cm == "explicit") {
      e.estimate = false;
      auto& k = e.constants;
      k.L = c.real("const_L", 0.0);
      k.ell = c.real("const_ell", 0.0);
      k.rho = c.real("const_rho", 0.0);
      const double mu = c.real("const_mu", 0.0);
      k.mu_w = c.real("const_mu_w", mu);
      k.mu_v = c.real("const_mu_v", mu);
      k.mu_ww = c.real("const_mu_ww", k.mu_w);
      k.mu_vv = c.real("const_mu_vv", k.mu_v);
      try {
        k.validate();
      } catch (const InvalidArgument& err) {
        throw ConfigError(err.what());
      }
    } else {
      throw ConfigError("constants must be 'estimate' or 'explicit'");
    }
    e.probe_count = static_cast<int>(c.integer("probe_count", 200));
    if (e.probe_count < 100) throw ConfigError("probe_count must be at least 100");

    e.solver.method = parse_solver_method(
        c.str("solver", e.family == LossFamily::kQuadratic ? "closed_form" : "extragradient"));
    e.solver.grad_tolerance = c.real("grad_tolerance", 1e-10);
    e.solver.max_iterations = static_cast<long>(c.integer("max_iterations", 200000));
    e.solver.step_size = c.real("step_size", 0.0);
    e.projection = c.boolean("projection", false);
    if (c.has("radius_w")) e.radius_w = c.real("radius_w", 1.0);
    if (c.has("radius_v")) e.radius_v = c.real("radius_v", 1.0);

    e.mode = parse_unlearn_mode(c.str("mode", "alg3"));
    e.hessian_mode = parse_hessian_mode(c.str("hessian_mode", "combined"));
    e.epsilon = c.real("epsilon", 1.0);
    e.delta = c.real("delta", 1e-5);
    e.m = static_cast<std::size_t>(c.integer("m", 0));
    e.deleted = c.index_list("deleted");
    e.deletion_seed = static_cast<std::uint64_t>(c.integer("deletion_seed", static_cast<long long>(e.seed)));
    e.noise_seed = static_cast<std::uint64_t>(c.integer("noise_seed", static_cast<long long>(e.seed)));
    e.m_grid = c.index_list("m_grid");
    e.gamma = c.real("gamma", 0.01);
    e.trials = static_cast<std::size_t>(c.integer("trials", 64));
    e.eval_factor = static_cast<std::size_t>(c.integer("eval_factor", 20));
    e.instances = static_cast<std::size_t>(c.integer("instances", 10));

    if (!(e.epsilon > 0.0)) throw ConfigError("epsilon must be positive");
    if (!(e.delta > 0.0 && e.delta < 1.0)) throw ConfigError("delta must lie in (0, 1)");
    if (!(e.gamma >= 0.0)) throw ConfigError("gamma must be nonnegative");
    if (e.trials == 0) throw ConfigError("trials must be positive");
    if (e.eval_factor == 0) throw ConfigError("eval_factor must be positive");
    if (e.instances == 0) throw ConfigError("instances must be positive");
    if (e.m >= e.n) throw ConfigError("m must be below n");
    if (!(e.solver.grad_tolerance > 0.0) || e.solver.max_iterations <= 0 || !(e.solver.step_size >= 0.0)) {
      throw ConfigError("invalid solver settings");
    }
    try {
      if (e.family == LossFamily::kQuadratic) e.quad.validate();
      else e.bilog.validate();
    } catch (const InvalidArgument& err) {
      throw ConfigError(err.what());
    }
    if (const auto unused = c.unused_keys(); !unused.empty()) {
      std::string list;
      for (const auto& k : unused) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("unknown config keys: " + list);
    }
    e.hash = c.hash();
    return e;
  }

  ReportMeta report_meta() const { return {hash, estimate, solver.grad_tolerance}; }

  std::vector<std::size_t> deletion_set(std::size_t data_n) const {
    if (!deleted.empty()) return deleted;
    return random_deletion(data_n, m, deletion_seed);
  }
};

struct RunOptions {
  bool timing = false;
};

// Exit codes of the CLI.
enum ExitCode : int {
  kExitOk = 0,
  kExitOther = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitCapacity = 4,
  kExitSolver = 5,
  kExitSingular = 6,
};

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InvalidArgument*>(&e) ||
      dynamic_cast<const DimensionError*>(&e)) {
    return kExitConfig;
  }
  if (dynamic_cast<const IoError*>(&e)) return kExitIo;
  if (dynamic_cast<const CapacityError*>(&e)) return kExitCapacity;
  if (dynamic_cast<const SolverError*>(&e)) return kExitSolver;
  if (dynamic_cast<const SingularMatrixError*>(&e)) return kExitSingular;
  return kExitOther;
}

namespace detail {

class Stopwatch {
 public:
  explicit Stopwatch(bool on) : on_(on), t0_(std::chrono::steady_clock::now()) {}
  double ms() const {
    if (!on_) return 0.0;
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  bool on_;
  std::chrono::steady_clock::time_point t0_;
};

inline std::string out_path(const std::string& dir, const std::string& file) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  return (std::filesystem::path(dir) / file).string();
}

inline std::string point_to_text(const PrimalDualPoint& p) {
  std::string out = "mmu-point v1\nw";
  for (Index i = 0; i < p.w.size(); ++i) out += " " + format_double(p.w(i));
  out += "\nv";
  for (Index i = 0; i < p.v.size(); ++i) out += " " + format_double(p.v(i));
  return out + "\n";
}

inline std::string run_id(const char* cmd, std::uint64_t seed, std::size_t k) {
  return concat(cmd, "-s", seed, "-", k);
}

inline double audit_epsilon(const Closeness& c, double sigma_w, double sigma_v, double delta) {
  if (sigma_w <= 0.0 || sigma_v <= 0.0) return 0.0;
  return composed_effective_epsilon(c.dw, sigma_w, c.dv, sigma_v, delta);
}

}  // namespace detail

// Builds the instance named by the config and calls fn(instance).
template <class Fn>
decltype(auto) with_instance(const ExperimentConfig& e, Fn&& fn) {
  const std::size_t eval_n = e.eval_factor * e.n;
  const auto finish_domain = [&](DomainSpec d) {
    if (e.radius_w) d.radius_w = *e.radius_w;
    if (e.radius_v) d.radius_v = *e.radius_v;
    d.projection_enabled = e.projection;
    d.validate();
    return d;
  };
  if (e.family == LossFamily::kQuadratic) {
    auto inst = make_quad_instance(e.quad, e.n, eval_n);
    if (!e.data_path.empty()) {
      inst.train = read_dataset_csv(e.data_path);
      if (inst.train.family != LossFamily::kQuadratic || inst.train.d1 != e.d1 || inst.train.d2 != e.d2) {
        throw ConfigError("dataset file does not match the configured family and dimensions");
      }
      inst.domain = quadratic_domain(inst.train, e.quad.mu_w, e.quad.mu_v);
    }
    inst.domain = finish_domain(inst.domain);
    return fn(inst);
  }
  auto inst = make_bilog_instance(e.bilog, e.n, eval_n);
  if (!e.data_path.empty()) {
    inst.train = read_dataset_csv(e.data_path);
    if (inst.train.family != LossFamily::kBilinearLogistic || inst.train.d1 != e.d1 || inst.train.d2 != e.d2) {
      throw ConfigError("dataset file does not match the configured family and dimensions");
    }
  }
  inst.domain = finish_domain(inst.domain);
  return fn(inst);
}

template <MinimaxLoss Loss>
LossConstants resolve_constants(const ExperimentConfig& e, const Instance<Loss>& inst) {
  if (!e.estimate) return e.constants;
  return estimate_constants(inst.loss, inst.domain, inst.train, e.probe_count, e.seed);
}

template <MinimaxLoss Loss>
TrainedModel load_or_train(const ExperimentConfig& e, const Instance<Loss>& inst) {
  if (e.model_path.empty()) return train(inst.loss, inst.train, inst.domain, e.solver);
  TrainedModel m = read_model(e.model_path);
  if (m.point.w.size() != e.d1 || m.point.v.size() != e.d2 || m.n != inst.train.size()) {
    throw ConfigError("model file does not match the configured dataset");
  }
  return m;
}

// Noise draws of one unlearning result; draw k uses noise seed + k.
inline std::vector<PrimalDualPoint> noise_draws(const UnlearnResult& r, std::uint64_t seed, std::size_t trials) {
  std::vector<PrimalDualPoint> outs;
  outs.reserve(trials);
  for (std::size_t k = 0; k < trials; ++k) outs.push_back(gaussian_perturb(r.pre_noise, {r.sigma_w, r.sigma_v, seed + k}));
  return outs;
}

inline void cmd_gen_data(const ExperimentConfig& e, const std::string& out_dir) {
  const Dataset d = e.family == LossFamily::kQuadratic ? QuadGenerator(e.quad).draw(e.n)
                                                       : BilogGenerator(e.bilog).draw(e.n);
  write_dataset_csv(detail::out_path(out_dir, "dataset.csv"), d);
}

inline void cmd_train(const ExperimentConfig& e, const std::string& out_dir, const RunOptions& opt = {}) {
  with_instance(e, [&](const auto& inst) {
    const detail::Stopwatch sw(opt.timing);
    const TrainedModel model = train(inst.loss, inst.train, inst.domain, e.solver);
    const PrimalDualPoint pts[1] = {model.point};
    const RiskReport risk = evaluate_risk(inst.loss, inst.eval, std::span<const PrimalDualPoint>(pts), e.solver);
    ReportRow row;
    row.run_id = detail::run_id("train", e.seed, 0);
    row.mode = "train";
    row.n = inst.train.size();
    row.epsilon = e.epsilon;
    row.delta = e.delta;
    row.weak_pd = risk.weak_pd;
    row.strong_pd = risk.strong_pd;
    row.wall_time_ms = sw.ms();
    write_model(detail::out_path(out_dir, "model.txt"), model);
    write_report_csv(detail::out_path(out_dir, "train.csv"), {row}, e.report_meta());
  });
}

namespace detail {

template <MinimaxLoss Loss>
ReportRow unlearn_row(const ExperimentConfig& e, const Instance<Loss>& inst, const TrainedModel& model,
                      const LossConstants& c, UnlearnMode mode, const PrimalDualPoint& truth,
                      const std::vector<std::size_t>& deleted, bool timing, PrimalDualPoint* output) {
  const Stopwatch sw(timing);
  UnlearnRequest req;
  req.deleted_indices = deleted;
  req.epsilon = e.epsilon;
  req.delta = e.delta;
  req.seed = e.noise_seed;
  req.mode = mode;
  req.hessian_mode = e.hessian_mode;
  const UnlearnResult r = unlearn(model, req, inst.loss, inst.train, c);
  const Closeness cl = measure_closeness(r.pre_noise, truth);
  const auto outs = noise_draws(r, e.noise_seed, e.trials);
  const RiskReport risk = evaluate_risk(inst.loss, inst.eval, std::span<const PrimalDualPoint>(outs), e.solver);
  if (output) *output = r.output;
  ReportRow row;
  row.mode = std::string(unlearn_mode_name(mode));
  row.n = inst.train.size();
  row.m = deleted.size();
  row.epsilon = e.epsilon;
  row.delta = e.delta;
  row.sigma_w = r.sigma_w;
  row.sigma_v = r.sigma_v;
  row.bound = r.closeness_bound();
  row.measured_dw = cl.dw;
  row.measured_dv = cl.dv;
  row.eps_effective = audit_epsilon(cl, r.sigma_w, r.sigma_v, e.delta);
  row.weak_pd = risk.weak_pd;
  row.strong_pd = risk.strong_pd;
  row.wall_time_ms = sw.ms();
  return row;
}

}  // namespace detail

inline void cmd_unlearn(const ExperimentConfig& e, const std::string& out_dir, const RunOptions& opt = {}) {
  with_instance(e, [&](const auto& inst) {
    const TrainedModel model = load_or_train(e, inst);
    const LossConstants c = resolve_constants(e, inst);
    const auto deleted = e.deletion_set(inst.train.size());
    const PrimalDualPoint truth =
        retrain_oracle(inst.loss, inst.train, std::span<const std::size_t>(deleted), inst.domain, e.solver);
    PrimalDualPoint out;
    ReportRow row = detail::unlearn_row(e, inst, model, c, e.mode, truth, deleted, opt.timing, &out);
    row.run_id = detail::run_id("unlearn", e.seed, 0);
    write_file(detail::out_path(out_dir, "unlearned.txt"), detail::point_to_text(out));
    write_report_csv(detail::out_path(out_dir, "unlearn.csv"), {row}, e.report_meta());
  });
}

inline void cmd_retrain(const ExperimentConfig& e, const std::string& out_dir, const RunOptions& opt = {}) {
  with_instance(e, [&](const auto& inst) {
    const detail::Stopwatch sw(opt.timing);
    const TrainedModel model = load_or_train(e, inst);
    const auto deleted = e.deletion_set(inst.train.size());
    const PrimalDualPoint truth =
        retrain_oracle(inst.loss, inst.train, std::span<const std::size_t>(deleted), inst.domain, e.solver);
    const PrimalDualPoint pts[1] = {truth};
    const RiskReport risk = evaluate_risk(inst.loss, inst.eval, std::span<const PrimalDualPoint>(pts), e.solver);
    const Closeness shift = measure_closeness(truth, model.point);
    ReportRow row;
    row.run_id = detail::run_id("retrain", e.seed, 0);
    row.mode = "retrain";
    row.n = inst.train.size();
    row.m = deleted.size();
    row.epsilon = e.epsilon;
    row.delta = e.delta;
    row.measured_dw = shift.dw;
    row.measured_dv = shift.dv;
    row.weak_pd = risk.weak_pd;
    row.strong_pd = risk.strong_pd;
    row.wall_time_ms = sw.ms();
    write_file(detail::out_path(out_dir, "retrained.txt"), detail::point_to_text(truth));
    write_report_csv(detail::out_path(out_dir, "retrain.csv"), {row}, e.report_meta());
  });
}

// All three updates on the same deletion set, each compared with the retrain oracle.
// The recompute update is skipped when the deletion exceeds its calibration capacity.
inline void cmd_evaluate(const ExperimentConfig& e, const std::string& out_dir, const RunOptions& opt = {}) {
  with_instance(e, [&](const auto& inst) {
    const TrainedModel model = load_or_train(e, inst);
    const LossConstants c = resolve_constants(e, inst);
    const auto deleted = e.deletion_set(inst.train.size());
    const PrimalDualPoint truth =
        retrain_oracle(inst.loss, inst.train, std::span<const std::size_t>(deleted), inst.domain, e.solver);
    std::vector<ReportRow> rows;
    std::size_t k = 0;
    for (UnlearnMode mode : {UnlearnMode::kRecompute, UnlearnMode::kEfficient, UnlearnMode::kOnline}) {
      try {
        ReportRow row = detail::unlearn_row(e, inst, model, c, mode, truth, deleted, opt.timing, nullptr);
        row.run_id = detail::run_id("evaluate", e.seed, k++);
        rows.push_back(row);
      } catch (const CapacityError&) {
        if (mode != UnlearnMode::kRecompute) throw;
      }
    }
    write_report_csv(detail::out_path(out_dir, "evaluate.csv"), rows, e.report_meta());
  });
}

// Instance k is generated with seed + k; rows for the recompute and efficient updates per instance.
// eps_effective uses the noise scale calibrated for the configured epsilon.
inline void cmd_audit(const ExperimentConfig& e, const std::string& out_dir, const RunOptions& opt = {}) {
  std::vector<ReportRow> rows;
  AuditOptions ao;
  ao.solver = e.solver;
  ao.hessian_mode = e.hessian_mode;
  ao.probe_count = e.probe_count;
  for (std::size_t k = 0; k < e.instances; ++k) {
    ExperimentConfig ek = e;
    ek.seed = ek.quad.seed = ek.bilog.seed = e.seed + k;
    ek.eval_factor = 1;
    ek.data_path.clear();
    with_instance(ek, [&](const auto& inst) {
      const detail::Stopwatch sw(opt.timing);
      const std::optional<LossConstants> fixed = e.estimate ? std::nullopt : std::optional<LossConstants>(e.constants);
      const AuditRow a = audit_instance(inst, e.m, ek.seed, ao, fixed);
      const double ms = sw.ms();
      const auto push = [&](const char* mode, const Closeness& cl, double bound) {
        ReportRow row;
        row.run_id = detail::run_id("audit", ek.seed, rows.size());
        row.mode = mode;
        row.n = a.n;
        row.m = a.m;
        row.epsilon = e.epsilon;
        row.delta = e.delta;
        row.sigma_w = row.sigma_v = noise_from_bound(bound, e.epsilon, e.delta);
        row.bound = bound;
        row.measured_dw = cl.dw;
        row.measured_dv = cl.dv;
        row.eps_effective = detail::audit_epsilon(cl, row.sigma_w, row.sigma_v, e.delta);
        row.wall_time_ms = ms;
        rows.push_back(row);
      };
      if (a.alg2_within_capacity) push("alg2", a.alg2, a.bound_alg2);
      push("alg3", a.alg3, a.bound_alg3);
    });
  }
  write_report_csv(detail::out_path(out_dir, "audit.csv"), rows, e.report_meta());
}

// One row per grid value, then a summary row whose m column holds m_max.
inline void cmd_sweep(const ExperimentConfig& e, const std::string& out_dir, const RunOptions& opt = {}) {
  if (e.m_grid.empty()) throw ConfigError("sweep needs m_grid");
  with_instance(e, [&](const auto& inst) {
    const detail::Stopwatch sw(opt.timing);
    SweepConfig sc;
    sc.m_grid = e.m_grid;
    sc.gamma = e.gamma;
    sc.trials = e.trials;
    sc.epsilon = e.epsilon;
    sc.delta = e.delta;
    sc.mode = e.mode;
    sc.hessian_mode = e.hessian_mode;
    sc.seed = e.deletion_seed;
    sc.solver = e.solver;
    sc.probe_count = e.probe_count;
    if (!e.estimate) sc.constants = e.constants;
    const CapacityReport rep = sweep_deletion_capacity(inst, sc);
    std::vector<ReportRow> rows;
    for (const auto& cp : rep.risk_curve) {
      ReportRow row;
      row.run_id = detail::run_id("sweep", e.seed, rows.size());
      row.mode = std::string(unlearn_mode_name(e.mode));
      row.n = inst.train.size();
      row.m = cp.m;
      row.epsilon = e.epsilon;
      row.delta = e.delta;
      row.sigma_w = cp.sigma_w;
      row.sigma_v = cp.sigma_v;
      row.bound = cp.bound;
      row.weak_pd = cp.weak_pd;
      row.strong_pd = cp.strong_pd;
      rows.push_back(row);
    }
    ReportRow summary;
    summary.run_id = "summary";
    summary.mode = "m_max";
    summary.n = inst.train.size();
    summary.m = rep.m_max;
    summary.epsilon = e.epsilon;
    summary.delta = e.delta;
    summary.weak_pd = e.gamma;
    summary.wall_time_ms = sw.ms();
    rows.push_back(summary);
    write_report_csv(detail::out_path(out_dir, "sweep.csv"), rows, e.report_meta());
  });
}

}  // namespace mmu
