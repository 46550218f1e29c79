#include <gtest/gtest.h>

#include "mmu/constants.hpp"
#include "mmu/data_gen.hpp"
#include "mmu/evaluation.hpp"
#include "mmu/saddle_solver.hpp"
#include "test_util.hpp"

namespace mmu {
namespace {

using testing::quad_dataset;
using testing::quad_sample;

SolverConfig eg() {
  SolverConfig c;
  c.method = SolverMethod::kExtragradient;
  return c;
}

TEST(QuadraticSaddle, OneDimensionalExample) {
  const QuadraticLoss f(1, 1);
  const PrimalDualPoint p = solve_quadratic_saddle(f, quad_dataset({quad_sample(2, 1, 1, -2, 0)}));
  EXPECT_NEAR(p.w(0), 2.0 / 3, 1e-15);
  EXPECT_NEAR(p.v(0), 2.0 / 3, 1e-15);
}

TEST(QuadraticSaddle, HomogeneousSystemGivesOrigin) {
  QuadGenConfig g{.d1 = 3, .d2 = 2, .linear_shift = 0.0, .linear_noise = 0.0, .seed = 1};
  const auto inst = make_quad_instance(g, 20, 0);
  const PrimalDualPoint p = solve_quadratic_saddle(inst.loss, inst.train);
  EXPECT_EQ(p.w.norm(), 0.0);
  EXPECT_EQ(p.v.norm(), 0.0);
}

TEST(QuadraticSaddle, DecoupledCase) {
  QuadGenConfig g{.d1 = 3, .d2 = 2, .coupling = 0.0, .seed = 2};
  const auto inst = make_quad_instance(g, 1, 0);
  const auto& q = *inst.train[0].quad;
  const PrimalDualPoint p = solve_quadratic_saddle(inst.loss, inst.train);
  EXPECT_LE((p.w + q.A.llt().solve(q.a)).norm(), 1e-12);
  EXPECT_LE((p.v - q.C.llt().solve(q.c)).norm(), 1e-12);
}

TEST(QuadraticSaddle, RejectsIllConditionedSystem) {
  const QuadraticLoss f(1, 2);
  Sample s;
  s.x = Vector(0);
  s.u = Vector(0);
  s.quad = QuadraticTerms{Matrix::Identity(1, 1), Matrix::Zero(1, 2), Vector(Eigen::Vector2d(1.0, 1e-14)).asDiagonal(),
                          Vector::Ones(1), Vector::Ones(2)};
  Dataset d{LossFamily::kQuadratic, 1, 2, {s}, 0};
  EXPECT_THROW(solve_quadratic_saddle(f, d), SingularMatrixError);
}

TEST(QuadraticSaddle, ResidualsVanish) {
  const auto inst = make_quad_instance({.d1 = 5, .d2 = 4, .seed = 3}, 100, 0);
  const TrainedModel m = train(inst.loss, inst.train, inst.domain, SolverConfig{});
  EXPECT_LE(m.residual_grad_norm, 1e-10);
}

TEST(Extragradient, MatchesClosedFormOnRandomQuadratics) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Index d1 = 1 + s % 5, d2 = 1 + (s / 5) % 5;
    const auto inst = make_quad_instance({.d1 = d1, .d2 = d2, .seed = 100 + s}, 40, 0);
    const SolverConfig cfg = eg();
    const SolveResult r = solve_extragradient(inst.loss, inst.train, inst.domain, cfg);
    const PrimalDualPoint cf = solve_quadratic_saddle(inst.loss, inst.train);
    const double dist = std::sqrt((r.point.w - cf.w).squaredNorm() + (r.point.v - cf.v).squaredNorm());
    EXPECT_LE(dist, 10 * cfg.grad_tolerance) << "seed " << s;
  }
}

TEST(Extragradient, OptimalWarmStartReturnsImmediately) {
  const auto inst = make_quad_instance({.d1 = 2, .d2 = 2, .seed = 4}, 30, 0);
  const PrimalDualPoint cf = solve_quadratic_saddle(inst.loss, inst.train);
  SolverConfig cfg = eg();
  cfg.grad_tolerance = 1e-9;
  EXPECT_LE(solve_extragradient(inst.loss, inst.train, inst.domain, cfg, cf).iterations, 1);
}

TEST(Extragradient, BilinearLogisticConverges) {
  const auto inst = make_bilog_instance({.d1 = 2, .d2 = 2, .seed = 5}, 50, 0);
  const SolveResult r = solve_extragradient(inst.loss, inst.train, inst.domain, eg());
  EXPECT_LE(r.residual, 1e-10);
  EXPECT_LE(joint_norm(avg_gradient(inst.loss, r.point, inst.train)), 1e-10);
}

TEST(Extragradient, ReportsNonConvergence) {
  const auto inst = make_bilog_instance({.d1 = 2, .d2 = 2, .seed = 5}, 50, 0);
  SolverConfig cfg = eg();
  cfg.max_iterations = 3;
  try {
    solve_extragradient(inst.loss, inst.train, inst.domain, cfg);
    FAIL() << "expected SolverError";
  } catch (const SolverError& e) {
    EXPECT_GT(e.last_residual(), 0.0);
  }
}

TEST(Extragradient, ProjectionKeepsIterateInBalls) {
  const auto inst = make_quad_instance({.d1 = 2, .d2 = 2, .linear_shift = 3.0, .seed = 6}, 30, 0);
  DomainSpec dom{0.1, 0.1, true};
  const SolveResult r = solve_extragradient(inst.loss, inst.train, dom, eg());
  EXPECT_LE(r.point.w.norm(), 0.1 + 1e-15);
  EXPECT_LE(r.point.v.norm(), 0.1 + 1e-15);
  EXPECT_LE(r.residual, 1e-10);
}

TEST(Saddle, PropertyAtOutput) {
  const auto inst = make_bilog_instance({.d1 = 3, .d2 = 2, .seed = 7}, 60, 0);
  const TrainedModel m = train(inst.loss, inst.train, inst.domain, eg());
  const double f0 = avg_value(inst.loss, m.point, inst.train);
  CounterRng rng(7, 1);
  for (int k = 0; k < 100; ++k) {
    const Vector w = m.point.w + uniform_in_ball(rng, 3, 0.5);
    const Vector v = m.point.v + uniform_in_ball(rng, 2, 0.5);
    EXPECT_LE(avg_value(inst.loss, {m.point.w, v}, inst.train), f0 + 1e-8);
    EXPECT_GE(avg_value(inst.loss, {w, m.point.v}, inst.train), f0 - 1e-8);
  }
}

TEST(BestResponse, QuadraticLinearSolve) {
  const auto inst = make_quad_instance({.d1 = 3, .d2 = 4, .seed = 8}, 25, 0);
  const Vector w = Vector::LinSpaced(3, -1, 2);
  const HessianBlocks h = avg_hessian_blocks(inst.loss, zero_point(inst.loss), inst.train);
  const Gradient g0 = avg_gradient(inst.loss, zero_point(inst.loss), inst.train);
  const Vector expect = (-h.vv).llt().solve(Vector(h.vw * w + g0.v));
  EXPECT_LE((best_response_v(inst.loss, inst.train, w, SolverConfig{}) - expect).norm(), 1e-10);
}

TEST(BestResponse, AtSaddleReturnsSaddle) {
  const auto inst = make_bilog_instance({.d1 = 2, .d2 = 3, .seed = 9}, 40, 0);
  const TrainedModel m = train(inst.loss, inst.train, inst.domain, eg());
  EXPECT_LE((best_response_v(inst.loss, inst.train, m.point.w, eg()) - m.point.v).norm(), 1e-9);
  EXPECT_LE((best_response_w(inst.loss, inst.train, m.point.v, eg()) - m.point.w).norm(), 1e-9);
}

TEST(BestResponse, LipschitzInW) {
  const auto inst = make_bilog_instance({.d1 = 3, .d2 = 3, .seed = 10}, 40, 0);
  const LossConstants c = estimate_constants(inst.loss, inst.domain, inst.train, 300, 1);
  CounterRng rng(10, 2);
  for (int k = 0; k < 20; ++k) {
    const Vector w1 = uniform_in_ball(rng, 3, inst.domain.radius_w);
    const Vector w2 = uniform_in_ball(rng, 3, inst.domain.radius_w);
    const Vector v1 = best_response_v(inst.loss, inst.train, w1, eg());
    const Vector v2 = best_response_v(inst.loss, inst.train, w2, eg());
    EXPECT_LE((v1 - v2).norm(), c.ell / c.mu_v * (w1 - w2).norm() + 1e-10);
  }
}

TEST(Train, MemoryIsSchurComplementOfAverages) {
  const auto inst = make_quad_instance({.d1 = 3, .d2 = 2, .seed = 11}, 30, 0);
  const TrainedModel m = train(inst.loss, inst.train, inst.domain, SolverConfig{});
  const Sample mean = mean_quadratic_sample(std::span<const Sample>(inst.train.samples));
  const auto& q = *mean.quad;
  const Matrix expect = q.A + q.B * q.C.llt().solve(Matrix(q.B.transpose()));
  EXPECT_LE((m.memory.d_ww - expect).norm(), 1e-12);
  EXPECT_EQ(m.n, 30u);
}

TEST(Train, SingletonDataset) {
  const QuadraticLoss f(1, 1);
  const TrainedModel m = train(f, quad_dataset({quad_sample(2, 1, 1, -2, 0)}), {1, 1, false}, SolverConfig{});
  EXPECT_NEAR(m.point.w(0), 2.0 / 3, 1e-15);
}

TEST(Train, Deterministic) {
  const auto inst = make_bilog_instance({.d1 = 2, .d2 = 2, .seed = 12}, 30, 0);
  const TrainedModel a = train(inst.loss, inst.train, inst.domain, eg());
  const TrainedModel b = train(inst.loss, inst.train, inst.domain, eg());
  EXPECT_EQ(a.point.w, b.point.w);
  EXPECT_EQ(a.point.v, b.point.v);
}

TEST(Train, ClosedFormNeedsConstantHessian) {
  const auto inst = make_bilog_instance({.d1 = 2, .d2 = 2, .seed = 12}, 30, 0);
  EXPECT_THROW(train(inst.loss, inst.train, inst.domain, SolverConfig{}), ConfigError);
}

// Deletion moves the saddle point by at most 2Lm/(mu n); the dual best response
// at the old primal point is within 2Lm/(mu_v (n - m)) of the old dual point.
TEST(DeletionDistance, RandomQuadratics) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto inst = make_quad_instance({.d1 = 3, .d2 = 3, .seed = 200 + s}, 100, 0);
    const LossConstants c = estimate_constants(inst.loss, inst.domain, inst.train, 200, s);
    const TrainedModel m = train(inst.loss, inst.train, inst.domain, SolverConfig{});
    for (std::size_t k : {1u, 5u, 10u}) {
      const auto del = random_deletion(100, k, s);
      const Dataset kept = remove_indices(inst.train, del);
      const PrimalDualPoint r = solve_quadratic_saddle(inst.loss, kept);
      const double n = 100.0, mm = static_cast<double>(k);
      EXPECT_LE((r.w - m.point.w).norm(), 2 * c.L * mm / (c.mu_w * n));
      EXPECT_LE((r.v - m.point.v).norm(), 2 * c.L * mm / (c.mu_v * n));
      const Vector vbr = best_response_v(inst.loss, kept, m.point.w, SolverConfig{});
      EXPECT_LE((m.point.v - vbr).norm(), 2 * c.L * mm / (c.mu_v * (n - mm)));
    }
  }
}

}  // namespace
}  // namespace mmu
