#pragma once

#include <functional>

#include "mmu/core.hpp"
#include "mmu/data_gen.hpp"
#include "mmu/loss.hpp"
#include "mmu/random.hpp"

namespace mmu::testing {

inline Sample quad_sample(double A, double B, double C, double a, double c) {
  Sample s;
  s.x = Vector(0);
  s.u = Vector(0);
  s.quad = QuadraticTerms{Matrix::Constant(1, 1, A), Matrix::Constant(1, 1, B), Matrix::Constant(1, 1, C),
                          Vector::Constant(1, a), Vector::Constant(1, c)};
  return s;
}

inline Dataset quad_dataset(std::vector<Sample> s) {
  const Index d1 = s.front().quad->A.rows(), d2 = s.front().quad->C.rows();
  return {LossFamily::kQuadratic, d1, d2, std::move(s), 0};
}

inline PrimalDualPoint pt(double w, double v) { return {Vector::Constant(1, w), Vector::Constant(1, v)}; }

inline double rel_err(const Matrix& a, const Matrix& b) {
  return (a - b).norm() / std::max(1.0, b.norm());
}

// Central differences of a scalar function of a stacked (w, v) vector.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    g(i) = (f(a) - f(b)) / (2 * h);
  }
  return g;
}

inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  const Index n = x.size();
  const Index m = f(x).size();
  Matrix J(m, n);
  for (Index i = 0; i < n; ++i) {
    Vector a = x, b = x;
    a(i) += h;
    b(i) -= h;
    J.col(i) = (f(a) - f(b)) / (2 * h);
  }
  return J;
}

inline Vector stack(const PrimalDualPoint& p) {
  Vector z(p.w.size() + p.v.size());
  z << p.w, p.v;
  return z;
}

inline PrimalDualPoint unstack(const Vector& z, Index d1) {
  return {z.head(d1), z.tail(z.size() - d1)};
}

}  // namespace mmu::testing
