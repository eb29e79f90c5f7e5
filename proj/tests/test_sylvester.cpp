#include "halr/construct.hpp"
#include "halr/pde.hpp"
#include "halr/sylvester.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace halr;
using namespace halr::testing;

namespace {

Banded1DOperator lyap_op(Index n, double dt = 5e-4) {
  return Banded1DOperator::affine(0.5, -dt, Banded1DOperator::laplacian_dirichlet(n, 2.0 / static_cast<double>(n + 1)));
}

}  // namespace

TEST(DenseSolver, SymmetricAndGeneralPaths) {
  std::mt19937_64 gen(1);
  const Index n = 30;
  const Matrix s = gaussian(n, n, gen);
  const Matrix a = s * s.transpose() + n * Matrix::Identity(n, n);
  const Matrix c = gaussian(n, n, gen);
  Matrix x = dense_solver_sylv(a, a, c);
  EXPECT_LT((a * x + x * a - c).norm(), 1e-10 * c.norm());
  const Matrix b = gaussian(n, n, gen) + 3 * n * Matrix::Identity(n, n);
  x = dense_solver_sylv(a, b, c);
  EXPECT_LT((a * x + x * b - c).norm(), 1e-10 * c.norm());
}

TEST(DenseSolver, SpectralOverlapRaises) {
  const Matrix a = Matrix::Identity(4, 4);
  try {
    dense_solver_sylv(a, -a, Matrix::Ones(4, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SpectralOverlap);
  }
}

TEST(LowRankRhs, RankOneResidualBelowTol) {
  std::mt19937_64 gen(2);
  const Index n = 512;
  const OperatorView a(lyap_op(n));
  const FactoredLowRank c(gaussian(n, 1, gen), gaussian(n, 1, gen));
  SolveStats st;
  const FactoredLowRank x = low_rank_rhs_sylv(a, a, c, {1e-8, 256, 100}, &st);
  EXPECT_TRUE(st.converged);
  EXPECT_LT(sylvester_residual(a, a, x.to_dense(), c.to_dense()), 1e-8);
  EXPECT_LT(x.rank(), 60);
}

TEST(LowRankRhs, NonsymmetricOperators) {
  std::mt19937_64 gen(3);
  const Index n = 300;
  const double h = 1.0 / n;
  const OperatorView a(Banded1DOperator::affine(1.0, -1e-4, Banded1DOperator::laplacian_dirichlet(n, h)));
  const OperatorView b(Banded1DOperator::affine(1.0, 1e-3, Banded1DOperator::forward_difference(n, h)));
  const FactoredLowRank c(gaussian(n, 2, gen), gaussian(n, 2, gen));
  const FactoredLowRank x = low_rank_rhs_sylv(a, b, c, {1e-8, 256, 100});
  EXPECT_LT(sylvester_residual(a, b, x.to_dense(), c.to_dense()), 1e-8);
}

TEST(LowRankRhs, ZeroRhsGivesZero) {
  const OperatorView a(lyap_op(64));
  const FactoredLowRank x = low_rank_rhs_sylv(a, a, FactoredLowRank::zero(64, 64));
  EXPECT_EQ(x.frobenius_norm(), 0.0);
}

TEST(LowRankRhs, IterationCapReportsNonConvergence) {
  std::mt19937_64 gen(4);
  const Index n = 512;
  const OperatorView a(lyap_op(n, 1e-1));
  const FactoredLowRank c(gaussian(n, 1, gen), gaussian(n, 1, gen));
  SolveStats st;
  low_rank_rhs_sylv(a, a, c, {1e-14, 256, 1}, &st);
  EXPECT_FALSE(st.converged);
  try {
    low_rank_rhs_sylv(a, a, c, {1e-14, 256, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MaxIterations);
  }
}

TEST(DenseRhs, MatchesDenseSolver) {
  std::mt19937_64 gen(5);
  const Index n = 256;
  const auto op = lyap_op(n);
  const OperatorView a(op);
  const Matrix c = gaussian(n, n, gen);
  const Matrix x = dense_rhs_sylv(a, a, c, {1e-11, 64, 100});
  const Matrix ref = dense_solver_sylv(op.dense(), op.dense(), c);
  EXPECT_LT(rel_err(x, ref), 1e-9);
}

TEST(DacSylv, HalrRhsKeepsClusterAndMeetsTol) {
  std::mt19937_64 gen(6);
  const Index n = 512;
  const OperatorView a(lyap_op(n));
  const HalrMatrix c = random_halr(random_cluster(IndexBox::of_size(n, n), 4, gen, 0.7, 0.2), 3, gen);
  SolveStats st;
  const HalrMatrix x = dac_sylv(a, a, c, {1e-6, 128, 100}, &st);
  EXPECT_TRUE(st.converged);
  EXPECT_EQ(x.cluster(), c.cluster());
  EXPECT_LT(sylvester_residual(a, a, to_dense(x), to_dense(c)), 1e-6);
}

TEST(DacSylv, BurgersSnapshotRhs) {
  const Index n = 512;
  BurgersParams bp;
  bp.n = n;
  bp.K = 0.01;
  const BurgersProblem prob(bp);
  const HalrMatrix c = halr_adaptive(prob.oracle(0.5), relative_params(prob.oracle(0.5), 50, 1e-8, 64));
  const OperatorView a(prob.lyapunov_operator());
  const HalrMatrix x = dac_sylv(a, a, c, {1e-6, 128, 100});
  EXPECT_LT(sylvester_residual(a, a, to_dense(x), to_dense(c)), 1e-6);
}

TEST(DacSylv, DenseLeafRootDelegatesToDenseRhs) {
  std::mt19937_64 gen(7);
  const Index n = 100;
  const auto op = lyap_op(n);
  const OperatorView a(op);
  const Matrix c = gaussian(n, n, gen);
  const HalrMatrix x = dac_sylv(a, a, HalrMatrix::dense(c), {1e-10, 32, 100});
  EXPECT_LT(sylvester_residual(a, a, to_dense(x), c), 1e-10);
  EXPECT_THROW(dac_sylv(a, a, HalrMatrix::dense(Matrix::Ones(n, n + 1))), Error);
}
