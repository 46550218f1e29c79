#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace mmu {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// A (w, v) pair; w is the primal (minimizing) block, v the dual (maximizing) one.
struct PrimalDualPoint {
  Vector w;
  Vector v;
};

struct Gradient {
  Vector w;
  Vector v;
};

struct HessianBlocks {
  Matrix ww;
  Matrix wv;
  Matrix vw;
  Matrix vv;
};

// Errors. Each kind has its own type so the CLI can map them to exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SingularMatrixError : public Error {
 public:
  SingularMatrixError(const std::string& what, double condition)
      : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

// Raised when a noise calibration denominator is not positive.
class CapacityError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  SolverError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}
  double last_residual() const { return last_residual_; }

 private:
  double last_residual_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  (os << ... << args);
  return os.str();
}

}  // namespace detail

struct DomainSpec {
  double radius_w = 1.0;
  double radius_v = 1.0;
  bool projection_enabled = false;

  void validate() const {
    if (!(radius_w > 0.0) || !std::isfinite(radius_w) || !(radius_v > 0.0) ||
        !std::isfinite(radius_v)) {
      throw InvalidArgument(detail::concat("domain radii must be positive and finite, got ",
                                           radius_w, ", ", radius_v));
    }
  }
};

inline void project_ball(Vector& x, double radius) {
  const double nrm = x.norm();
  if (nrm > radius) x *= radius / nrm;
}

inline bool all_finite(const Vector& x) { return x.allFinite(); }

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double max_abs_eigenvalue(const Matrix& sym) {
  if (sym.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double min_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Matrix& sym) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

// Cholesky factorization of a symmetric positive definite matrix, refused when
// the 2-norm condition number exceeds kMaxCondition.
class SpdSolver {
 public:
  static constexpr double kMaxCondition = 1e12;

  explicit SpdSolver(const Matrix& a, const char* what = "matrix") {
    if (a.rows() != a.cols()) {
      throw DimensionError(detail::concat(what, " is not square"));
    }
    const Matrix s = symmetrize(a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
    const auto& ev = es.eigenvalues();
    const double lo = ev.minCoeff();
    const double hi = ev.maxCoeff();
    condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(lo > 0.0) || condition_ > kMaxCondition) {
      throw SingularMatrixError(
          detail::concat(what, " is singular or ill-conditioned (condition ", condition_, ")"),
          condition_);
    }
    llt_.compute(s);
    if (llt_.info() != Eigen::Success) {
      throw SingularMatrixError(detail::concat(what, ": Cholesky failed"), condition_);
    }
  }

  template <class Rhs>
  Matrix solve(const Eigen::MatrixBase<Rhs>& b) const {
    return llt_.solve(b);
  }
  Vector solve(const Vector& b) const { return llt_.solve(b); }

  double condition() const { return condition_; }

 private:
  Eigen::LLT<Matrix> llt_;
  double condition_ = 0.0;
};

}  // namespace mmu
