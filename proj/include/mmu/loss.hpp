#pragma once

#include <concepts>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mmu/core.hpp"

namespace mmu {

enum class LossFamily { kQuadratic, kBilinearLogistic };

inline std::string_view family_name(LossFamily f) {
  return f == LossFamily::kQuadratic ? "quadratic" : "bilinear_logistic";
}

inline LossFamily parse_family(std::string_view s) {
  if (s == "quadratic" || s == "quad") return LossFamily::kQuadratic;
  if (s == "bilinear_logistic" || s == "bilog") return LossFamily::kBilinearLogistic;
  throw ConfigError("unknown loss family '" + std::string(s) + "'");
}

// Per-sample terms of 0.5 w'Aw + w'Bv - 0.5 v'Cv + a'w + c'v.
struct QuadraticTerms {
  Matrix A;  // d1 x d1
  Matrix B;  // d1 x d2
  Matrix C;  // d2 x d2
  Vector a;  // d1
  Vector c;  // d2
};

struct Sample {
  Vector x;  // paired with w (bilinear-logistic)
  Vector u;  // paired with v (bilinear-logistic)
  double y = 0.0;
  std::optional<QuadraticTerms> quad;
};

struct Dataset {
  LossFamily family = LossFamily::kQuadratic;
  Index d1 = 0;
  Index d2 = 0;
  std::vector<Sample> samples;
  std::uint64_t generator_seed = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  const Sample& operator[](std::size_t i) const { return samples[i]; }
};

// Samples at the given indices, in the given order.
inline std::vector<Sample> gather(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) {
    if (i >= data.size()) {
      throw InvalidArgument(detail::concat("sample index ", i, " out of range (n=", data.size(), ")"));
    }
    out.push_back(data.samples[i]);
  }
  return out;
}

// Dataset without the given indices; order of the survivors is preserved.
inline Dataset remove_indices(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<char> drop(data.size(), 0);
  for (std::size_t i : idx) {
    if (i >= data.size()) {
      throw InvalidArgument(detail::concat("sample index ", i, " out of range (n=", data.size(), ")"));
    }
    drop[i] = 1;
  }
  Dataset out{data.family, data.d1, data.d2, {}, data.generator_seed};
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!drop[i]) out.samples.push_back(data.samples[i]);
  return out;
}

template <class L>
concept MinimaxLoss = requires(const L& f, const PrimalDualPoint& p, const Sample& z) {
  { f.primal_dim() } -> std::convertible_to<Index>;
  { f.dual_dim() } -> std::convertible_to<Index>;
  { f.value(p, z) } -> std::convertible_to<double>;
  { f.gradient(p, z) } -> std::same_as<Gradient>;
  { f.hessian(p, z) } -> std::same_as<HessianBlocks>;
};

// Losses whose Hessian does not depend on the point.
template <class L>
inline constexpr bool has_constant_hessian_v = false;

// Losses that are affine in the sample parameters, so a dataset average equals
// the loss of the averaged sample.
template <class L>
inline constexpr bool is_sample_affine_v = false;

class QuadraticLoss {
 public:
  QuadraticLoss(Index d1, Index d2) : d1_(d1), d2_(d2) {
    if (d1 <= 0 || d2 <= 0) throw DimensionError("quadratic loss needs d1 > 0 and d2 > 0");
  }

  Index primal_dim() const { return d1_; }
  Index dual_dim() const { return d2_; }

  double value(const PrimalDualPoint& p, const Sample& z) const {
    const auto& q = terms(z);
    return 0.5 * p.w.dot(q.A * p.w) + p.w.dot(q.B * p.v) - 0.5 * p.v.dot(q.C * p.v) +
           q.a.dot(p.w) + q.c.dot(p.v);
  }

  Gradient gradient(const PrimalDualPoint& p, const Sample& z) const {
    const auto& q = terms(z);
    return {q.A * p.w + q.B * p.v + q.a, q.B.transpose() * p.w - q.C * p.v + q.c};
  }

  HessianBlocks hessian(const PrimalDualPoint&, const Sample& z) const {
    const auto& q = terms(z);
    return {q.A, q.B, q.B.transpose(), -q.C};
  }

  const QuadraticTerms& terms(const Sample& z) const {
    if (!z.quad) throw InvalidArgument("quadratic loss applied to a sample without quadratic terms");
    const auto& q = *z.quad;
    if (q.A.rows() != d1_ || q.A.cols() != d1_ || q.B.rows() != d1_ || q.B.cols() != d2_ ||
        q.C.rows() != d2_ || q.C.cols() != d2_ || q.a.size() != d1_ || q.c.size() != d2_) {
      throw DimensionError("quadratic sample terms do not match loss dimensions");
    }
    return q;
  }

 private:
  Index d1_, d2_;
};

template <>
inline constexpr bool has_constant_hessian_v<QuadraticLoss> = true;
template <>
inline constexpr bool is_sample_affine_v<QuadraticLoss> = true;

// f = (mu_w/2)|w|^2 - (mu_v/2)|v|^2 + softplus(w'x) + (v'u) tanh(w'x).
class BilinearLogisticLoss {
 public:
  BilinearLogisticLoss(Index d1, Index d2, double mu_w, double mu_v)
      : d1_(d1), d2_(d2), mu_w_(mu_w), mu_v_(mu_v) {
    if (d1 <= 0 || d2 <= 0) throw DimensionError("bilinear-logistic loss needs d1 > 0 and d2 > 0");
    if (!(mu_w >= 0.0) || !(mu_v > 0.0)) {
      throw InvalidArgument("bilinear-logistic loss needs mu_w >= 0 and mu_v > 0");
    }
  }

  Index primal_dim() const { return d1_; }
  Index dual_dim() const { return d2_; }
  double mu_w() const { return mu_w_; }
  double mu_v() const { return mu_v_; }

  static double softplus(double t) { return t > 0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)); }
  static double sigmoid(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
  }

  double value(const PrimalDualPoint& p, const Sample& z) const {
    check(z);
    const double t = p.w.dot(z.x);
    const double q = p.v.dot(z.u);
    return 0.5 * mu_w_ * p.w.squaredNorm() - 0.5 * mu_v_ * p.v.squaredNorm() + softplus(t) +
           q * std::tanh(t);
  }

  Gradient gradient(const PrimalDualPoint& p, const Sample& z) const {
    check(z);
    const double t = p.w.dot(z.x);
    const double q = p.v.dot(z.u);
    const double th = std::tanh(t);
    const double sech2 = 1.0 - th * th;
    return {mu_w_ * p.w + (sigmoid(t) + q * sech2) * z.x, -mu_v_ * p.v + th * z.u};
  }

  HessianBlocks hessian(const PrimalDualPoint& p, const Sample& z) const {
    check(z);
    const double t = p.w.dot(z.x);
    const double q = p.v.dot(z.u);
    const double th = std::tanh(t);
    const double sech2 = 1.0 - th * th;
    const double s = sigmoid(t);
    const double curv = s * (1.0 - s) - 2.0 * q * th * sech2;
    HessianBlocks h;
    h.ww = mu_w_ * Matrix::Identity(d1_, d1_) + curv * z.x * z.x.transpose();
    h.wv = sech2 * z.x * z.u.transpose();
    h.vw = h.wv.transpose();
    h.vv = -mu_v_ * Matrix::Identity(d2_, d2_);
    return h;
  }

 private:
  void check(const Sample& z) const {
    if (z.x.size() != d1_ || z.u.size() != d2_) {
      throw DimensionError("bilinear-logistic sample features do not match loss dimensions");
    }
  }

  Index d1_, d2_;
  double mu_w_, mu_v_;
};

// f + (lambda_w/2)|w|^2 - (lambda_v/2)|v|^2.
template <MinimaxLoss L>
class Regularized {
 public:
  Regularized(L base, double lambda_w, double lambda_v)
      : base_(std::move(base)), lambda_w_(lambda_w), lambda_v_(lambda_v) {
    if (!(lambda_w >= 0.0) || !(lambda_v >= 0.0)) {
      throw InvalidArgument("regularization weights must be nonnegative");
    }
  }

  Index primal_dim() const { return base_.primal_dim(); }
  Index dual_dim() const { return base_.dual_dim(); }
  const L& base() const { return base_; }
  double lambda_w() const { return lambda_w_; }
  double lambda_v() const { return lambda_v_; }

  double value(const PrimalDualPoint& p, const Sample& z) const {
    return base_.value(p, z) + 0.5 * lambda_w_ * p.w.squaredNorm() -
           0.5 * lambda_v_ * p.v.squaredNorm();
  }

  Gradient gradient(const PrimalDualPoint& p, const Sample& z) const {
    Gradient g = base_.gradient(p, z);
    g.w += lambda_w_ * p.w;
    g.v -= lambda_v_ * p.v;
    return g;
  }

  HessianBlocks hessian(const PrimalDualPoint& p, const Sample& z) const {
    HessianBlocks h = base_.hessian(p, z);
    h.ww.diagonal().array() += lambda_w_;
    h.vv.diagonal().array() -= lambda_v_;
    return h;
  }

 private:
  L base_;
  double lambda_w_, lambda_v_;
};

template <class L>
inline constexpr bool has_constant_hessian_v<Regularized<L>> = has_constant_hessian_v<L>;
template <class L>
inline constexpr bool is_sample_affine_v<Regularized<L>> = is_sample_affine_v<L>;

template <MinimaxLoss L>
Regularized<L> regularize(const L& loss, double lambda_w, double lambda_v) {
  return Regularized<L>(loss, lambda_w, lambda_v);
}

template <MinimaxLoss L>
Regularized<L> regularize(const Regularized<L>& loss, double lambda_w, double lambda_v) {
  if (!(lambda_w >= 0.0) || !(lambda_v >= 0.0)) {
    throw InvalidArgument("regularization weights must be nonnegative");
  }
  return Regularized<L>(loss.base(), loss.lambda_w() + lambda_w, loss.lambda_v() + lambda_v);
}

template <MinimaxLoss L>
void check_point(const L& loss, const PrimalDualPoint& p) {
  if (p.w.size() != loss.primal_dim() || p.v.size() != loss.dual_dim()) {
    throw DimensionError(detail::concat("point dimensions (", p.w.size(), ", ", p.v.size(),
                                        ") do not match loss (", loss.primal_dim(), ", ",
                                        loss.dual_dim(), ")"));
  }
}

template <MinimaxLoss L>
double loss_value(const L& loss, const PrimalDualPoint& p, const Sample& z) {
  check_point(loss, p);
  return loss.value(p, z);
}

template <MinimaxLoss L>
Gradient gradient(const L& loss, const PrimalDualPoint& p, const Sample& z) {
  check_point(loss, p);
  return loss.gradient(p, z);
}

template <MinimaxLoss L>
HessianBlocks hessian_blocks(const L& loss, const PrimalDualPoint& p, const Sample& z) {
  check_point(loss, p);
  return loss.hessian(p, z);
}

template <MinimaxLoss L>
PrimalDualPoint zero_point(const L& loss) {
  return {Vector::Zero(loss.primal_dim()), Vector::Zero(loss.dual_dim())};
}

template <MinimaxLoss L>
double avg_value(const L& loss, const PrimalDualPoint& p, std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidArgument("average over an empty sample set");
  check_point(loss, p);
  double s = 0.0;
  for (const auto& z : samples) s += loss.value(p, z);
  return s / static_cast<double>(samples.size());
}

template <MinimaxLoss L>
Gradient sum_gradient(const L& loss, const PrimalDualPoint& p, std::span<const Sample> samples) {
  check_point(loss, p);
  Gradient g{Vector::Zero(loss.primal_dim()), Vector::Zero(loss.dual_dim())};
  for (const auto& z : samples) {
    const Gradient gi = loss.gradient(p, z);
    g.w += gi.w;
    g.v += gi.v;
  }
  return g;
}

template <MinimaxLoss L>
Gradient avg_gradient(const L& loss, const PrimalDualPoint& p, std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidArgument("average over an empty sample set");
  Gradient g = sum_gradient(loss, p, samples);
  const double inv = 1.0 / static_cast<double>(samples.size());
  g.w *= inv;
  g.v *= inv;
  return g;
}

template <MinimaxLoss L>
HessianBlocks avg_hessian_blocks(const L& loss, const PrimalDualPoint& p,
                                 std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidArgument("average over an empty sample set");
  check_point(loss, p);
  const Index d1 = loss.primal_dim(), d2 = loss.dual_dim();
  HessianBlocks h{Matrix::Zero(d1, d1), Matrix::Zero(d1, d2), Matrix::Zero(d2, d1),
                  Matrix::Zero(d2, d2)};
  for (const auto& z : samples) {
    const HessianBlocks hi = loss.hessian(p, z);
    h.ww += hi.ww;
    h.wv += hi.wv;
    h.vw += hi.vw;
    h.vv += hi.vv;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  h.ww *= inv;
  h.wv *= inv;
  h.vw *= inv;
  h.vv *= inv;
  return h;
}

template <MinimaxLoss L>
double avg_value(const L& loss, const PrimalDualPoint& p, const Dataset& d) {
  return avg_value(loss, p, std::span<const Sample>(d.samples));
}
template <MinimaxLoss L>
Gradient avg_gradient(const L& loss, const PrimalDualPoint& p, const Dataset& d) {
  return avg_gradient(loss, p, std::span<const Sample>(d.samples));
}
template <MinimaxLoss L>
HessianBlocks avg_hessian_blocks(const L& loss, const PrimalDualPoint& p, const Dataset& d) {
  return avg_hessian_blocks(loss, p, std::span<const Sample>(d.samples));
}

// Mean of the quadratic terms; the quadratic loss is affine in them.
inline Sample mean_quadratic_sample(std::span<const Sample> samples) {
  if (samples.empty()) throw InvalidArgument("mean of an empty sample set");
  QuadraticTerms m = *samples.front().quad;
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const auto& q = *samples[i].quad;
    m.A += q.A;
    m.B += q.B;
    m.C += q.C;
    m.a += q.a;
    m.c += q.c;
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  m.A *= inv;
  m.B *= inv;
  m.C *= inv;
  m.a *= inv;
  m.c *= inv;
  Sample s;
  s.quad = std::move(m);
  return s;
}

}  // namespace mmu
