#include <gtest/gtest.h>

#include "mmu/data_gen.hpp"
#include "mmu/saddle_solver.hpp"
#include "mmu/total_hessian.hpp"
#include "test_util.hpp"

namespace mmu {
namespace {

using testing::quad_dataset;
using testing::quad_sample;

HessianBlocks blocks(Matrix ww, Matrix wv, Matrix vv) {
  Matrix vw = wv.transpose();
  return {std::move(ww), std::move(wv), std::move(vw), std::move(vv)};
}

TEST(TotalWw, SchurArithmetic) {
  Matrix ww = 2 * Matrix::Identity(2, 2), wv(2, 1), vv(1, 1);
  wv << 1, 0;
  vv << -1;
  Matrix expect(2, 2);
  expect << 3, 0, 0, 2;
  EXPECT_LE((total_ww(blocks(ww, wv, vv)) - expect).norm(), 1e-15);
}

TEST(TotalWw, NoCouplingLeavesBlock) {
  Matrix ww(2, 2);
  ww << 2, 0.5, 0.5, 1;
  EXPECT_EQ(total_ww(blocks(ww, Matrix::Zero(2, 3), -Matrix::Identity(3, 3))), ww);
}

TEST(TotalVv, ScalarArithmetic) {
  EXPECT_DOUBLE_EQ(total_vv(blocks(Matrix::Constant(1, 1, 2), Matrix::Constant(1, 1, 1), Matrix::Constant(1, 1, -1)))(0, 0), -1.5);
  Matrix vv(2, 2);
  vv << -2, 0.3, 0.3, -1;
  EXPECT_EQ(total_vv(blocks(Matrix::Identity(1, 1), Matrix::Zero(1, 2), vv)), vv);
}

TEST(TotalHessian, RejectsSingularBlocks) {
  EXPECT_THROW(total_ww(blocks(Matrix::Identity(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1))), SingularMatrixError);
  EXPECT_THROW(total_vv(blocks(Matrix::Zero(1, 1), Matrix::Ones(1, 1), -Matrix::Identity(1, 1))), SingularMatrixError);
}

TEST(TotalHessian, SchurMonotonicityOnRandomBlocks) {
  CounterRng rng(3, 0);
  for (int k = 0; k < 100; ++k) {
    const Index d1 = 1 + k % 4, d2 = 1 + (k / 4) % 4;
    const Matrix a = rng.normal_matrix(d1, d1), c = rng.normal_matrix(d2, d2);
    const HessianBlocks h = blocks(a * a.transpose() + 0.5 * Matrix::Identity(d1, d1), rng.normal_matrix(d1, d2),
                                   -(c * c.transpose() + 0.5 * Matrix::Identity(d2, d2)));
    const Matrix tw = total_ww(h), tv = total_vv(h);
    EXPECT_LE((tw - tw.transpose()).norm(), 1e-10);
    EXPECT_GE(min_eigenvalue(tw - h.ww), -1e-10);
    EXPECT_LE(max_eigenvalue(tv - h.vv), 1e-10);
    EXPECT_GE(min_eigenvalue(tw), min_eigenvalue(h.ww) - 1e-10);
    EXPECT_LE(max_eigenvalue(tv), max_eigenvalue(h.vv) + 1e-10);
  }
}

TEST(MemoryVariables, QuadraticExact) {
  const auto inst = make_quad_instance({.d1 = 3, .d2 = 4, .seed = 2}, 20, 0);
  const TrainedModel m = train(inst.loss, inst.train, inst.domain, SolverConfig{});
  const Sample mean = mean_quadratic_sample(std::span<const Sample>(inst.train.samples));
  const auto& q = *mean.quad;
  EXPECT_LE((m.memory.d_ww - (q.A + q.B * q.C.inverse() * q.B.transpose())).norm(), 1e-12);
  EXPECT_LE((m.memory.d_vv - (-q.C - q.B.transpose() * q.A.inverse() * q.B)).norm(), 1e-12);
  EXPECT_GE(min_eigenvalue(m.memory.d_ww), 1.0 - 1e-8);
  EXPECT_LE(max_eigenvalue(m.memory.d_vv), -1.0 + 1e-8);
}

TEST(MemoryVariables, SingletonEqualsPerSample) {
  const QuadraticLoss f(1, 1);
  const Dataset d = quad_dataset({quad_sample(2, 1, 1, -2, 0)});
  const MemoryVariables mv = memory_variables(f, d, testing::pt(0, 0));
  EXPECT_DOUBLE_EQ(mv.d_ww(0, 0), 3.0);
  EXPECT_DOUBLE_EQ(mv.d_vv(0, 0), -1.5);
}

// Hessian of P(w) = max_v F_S(w, v) by central differences of the envelope
// gradient grad_w F_S(w, V_S(w)).
template <class Loss>
void check_primal_hessian(const Instance<Loss>& inst, const SolverConfig& cfg, std::uint64_t seed) {
  SolverConfig inner = cfg;
  inner.grad_tolerance = 1e-12;
  const Index d1 = inst.loss.primal_dim();
  const auto primal_grad = [&](const Vector& w) {
    const Vector v = best_response_v(inst.loss, inst.train, w, inner);
    return Vector(avg_gradient(inst.loss, {w, v}, inst.train).w);
  };
  CounterRng rng(seed, 0);
  for (int k = 0; k < 10; ++k) {
    const Vector w = uniform_in_ball(rng, d1, inst.domain.radius_w);
    const Matrix fd = symmetrize(testing::fd_jacobian(primal_grad, w, 1e-4));
    const Vector v = best_response_v(inst.loss, inst.train, w, inner);
    const Matrix dww = total_ww(avg_hessian_blocks(inst.loss, {w, v}, inst.train));
    EXPECT_LE((dww - fd).norm() / dww.norm(), 1e-3) << "probe " << k;
  }
}

TEST(PrimalHessianIdentity, BilinearLogistic) {
  SolverConfig cfg;
  cfg.method = SolverMethod::kExtragradient;
  check_primal_hessian(make_bilog_instance({.d1 = 3, .d2 = 3, .seed = 4}, 50, 0), cfg, 1);
}

TEST(PrimalHessianIdentity, Quadratic) {
  check_primal_hessian(make_quad_instance({.d1 = 3, .d2 = 3, .seed = 5}, 50, 0), SolverConfig{}, 2);
}

TEST(TotalHessian, NormBoundOnSampledPoints) {
  const auto inst = make_bilog_instance({.d1 = 3, .d2 = 2, .seed = 6}, 30, 0);
  const LossConstants c = estimate_constants(inst.loss, inst.domain, inst.train, 400, 3);
  CounterRng rng(6, 1);
  for (int k = 0; k < 100; ++k) {
    const PrimalDualPoint p{uniform_in_ball(rng, 3, inst.domain.radius_w), uniform_in_ball(rng, 2, inst.domain.radius_v)};
    const Matrix d = total_ww(inst.loss.hessian(p, inst.train[k % 30]));
    EXPECT_LE(spectral_norm(d), c.ell + c.ell * c.ell / c.mu_v);
  }
}

TEST(CombineRemaining, EmptyDeletionReturnsMemory) {
  const auto inst = make_quad_instance({.d1 = 2, .d2 = 2, .seed = 7}, 10, 0);
  const TrainedModel m = train(inst.loss, inst.train, inst.domain, SolverConfig{});
  const RemainingTotals r = combine_remaining(m.memory, std::span<const Sample>(), inst.loss);
  EXPECT_EQ(r.d_ww, m.memory.d_ww);
  EXPECT_EQ(r.d_vv, m.memory.d_vv);
}

TEST(CombineRemaining, SharedCouplingMatchesRecompute) {
  // With B and C shared the w-correction is additive; with A and B shared the
  // v-correction is.
  const std::vector<std::size_t> del = {3, 17, 21, 29};
  for (int shared_a = 0; shared_a < 2; ++shared_a) {
    auto inst = make_quad_instance({.d1 = 3, .d2 = 2, .seed = 8}, 30, 0);
    for (auto& s : inst.train.samples) {
      s.quad->B = inst.train[0].quad->B;
      if (shared_a) {
        s.quad->A = inst.train[0].quad->A;
      } else {
        s.quad->C = inst.train[0].quad->C;
      }
    }
    const TrainedModel m = train(inst.loss, inst.train, inst.domain, SolverConfig{});
    const auto deleted = gather(inst.train, del);
    const RemainingTotals a = combine_remaining(m.memory, std::span<const Sample>(deleted), inst.loss);
    const RemainingTotals b = recompute_remaining(m.memory, inst.train, std::span<const std::size_t>(del), inst.loss);
    if (shared_a) {
      EXPECT_LE((a.d_vv - b.d_vv).norm(), 1e-12);
    } else {
      EXPECT_LE((a.d_ww - b.d_ww).norm(), 1e-12);
    }
  }
}

TEST(CombineRemaining, IdenticalSamplesReturnMemory) {
  const QuadraticLoss f(1, 1);
  const Sample z = quad_sample(2, 0.7, 1.5, -1, 0.3);
  const Dataset d = quad_dataset({z, z, z, z, z});
  const TrainedModel m = train(f, d, {5, 5, false}, SolverConfig{});
  const std::vector<Sample> del = {z, z};
  const RemainingTotals r = combine_remaining(m.memory, std::span<const Sample>(del), f);
  EXPECT_NEAR(r.d_ww(0, 0), m.memory.d_ww(0, 0), 1e-14);
  EXPECT_NEAR(r.d_vv(0, 0), m.memory.d_vv(0, 0), 1e-14);
}

TEST(CombineRemaining, RejectsDeletingEverything) {
  const QuadraticLoss f(1, 1);
  const Sample z = quad_sample(2, 0.7, 1.5, -1, 0.3);
  const Dataset d = quad_dataset({z, z});
  const TrainedModel m = train(f, d, {5, 5, false}, SolverConfig{});
  const std::vector<Sample> del = {z, z};
  EXPECT_THROW(combine_remaining(m.memory, std::span<const Sample>(del), f), InvalidArgument);
}

}  // namespace
}  // namespace mmu
