#include "halr/arithmetic.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace halr;
using namespace halr::testing;

namespace {

const IndexBox kBox = IndexBox::of_size(48, 48);

}  // namespace

TEST(HalrMatrix, ClusterAndEntryAccess) {
  std::mt19937_64 gen(1);
  const auto t = random_cluster(kBox, 4, gen);
  const HalrMatrix a = random_halr(t, 3, gen);
  EXPECT_EQ(a.cluster(), t);
  const Matrix d = to_dense(a);
  for (Index i = 0; i < 48; i += 7)
    for (Index j = 0; j < 48; j += 5) EXPECT_DOUBLE_EQ(a.entry(i, j), d(i, j));
}

TEST(HalrMatrix, ToDenseGuard) {
  const HalrMatrix z = HalrMatrix::zero(100, 100);
  EXPECT_THROW(to_dense(z, 9999), Error);
  EXPECT_EQ(to_dense(z).norm(), 0.0);
}

TEST(Arithmetic, MatvecMatchesDense) {
  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 20; ++trial) {
    const HalrMatrix a = random_halr(random_cluster(kBox, 5, gen), 4, gen);
    const Matrix d = to_dense(a);
    const Vector v = gaussian(48, 1, gen);
    EXPECT_LT((matvec(a, v) - d * v).norm(), 1e-12 * (d.norm() * v.norm() + 1));
    EXPECT_LT((matvec_transpose(a, v) - d.transpose() * v).norm(), 1e-12 * (d.norm() * v.norm() + 1));
    const Matrix x = gaussian(48, 3, gen);
    EXPECT_LT((matmat(a, x) - d * x).norm(), 1e-12 * (d.norm() * x.norm() + 1));
    EXPECT_LT((dense_times(x.transpose(), a) - x.transpose() * d).norm(), 1e-12 * (d.norm() * x.norm() + 1));
  }
}

TEST(Arithmetic, MatvecFlopsMatchStorage) {
  std::mt19937_64 gen(3);
  const HalrMatrix a = random_halr(hodlr_cluster(IndexBox::of_size(256, 256), 4), 5, gen);
  FlopCounter f;
  matvec(a, Vector::Ones(256), &f);
  EXPECT_EQ(f.multiply_adds, a.storage_entries());
  EXPECT_EQ(storage_report(a).entries, a.storage_entries());
}

TEST(Arithmetic, TransposeRoundTrip) {
  std::mt19937_64 gen(4);
  const HalrMatrix a = random_halr(random_cluster(IndexBox::of_size(30, 20), 4, gen), 3, gen);
  EXPECT_EQ(to_dense(transpose(a)), to_dense(a).transpose());
  EXPECT_EQ(transpose(a).cluster(), transpose(a.cluster()));
}

TEST(Arithmetic, ScaleByZeroGivesZeroLowRankLeaves) {
  std::mt19937_64 gen(5);
  const HalrMatrix a = random_halr(hodlr_cluster(kBox, 3), 4, gen);
  const HalrMatrix z = scale(a, 0.0);
  EXPECT_EQ(to_dense(z).norm(), 0.0);
  EXPECT_EQ(z.rank(), 0);
  EXPECT_EQ(z.cluster(), a.cluster());
}

TEST(Arithmetic, ExactAddMatchesDenseAndIntersectsClusters) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto ta = random_cluster(kBox, 4, gen);
    const auto tb = random_cluster(kBox, 4, gen);
    const HalrMatrix a = random_halr(ta, 3, gen);
    const HalrMatrix b = random_halr(tb, 3, gen);
    const HalrMatrix c = add_exact(a, b);
    EXPECT_LT(rel_err(to_dense(c), to_dense(a) + to_dense(b)), 1e-13);
    EXPECT_EQ(normalize(c.cluster()), normalize(intersect(ta, tb)));
    EXPECT_LE(c.rank(), a.rank() + b.rank());
  }
}

TEST(Arithmetic, TruncatedAddRecompresses) {
  std::mt19937_64 gen(7);
  const HalrMatrix a = random_halr(hodlr_cluster(kBox, 3), 3, gen);
  const HalrMatrix c = add(a, a, 1e-12);
  EXPECT_LT(rel_err(to_dense(c), 2 * to_dense(a)), 1e-10);
  EXPECT_EQ(c.rank(), a.rank());
  const HalrMatrix d = axpy(-1.0, a, a, 1e-12);
  EXPECT_LT(to_dense(d).norm(), 1e-10 * to_dense(a).norm());
}

TEST(Arithmetic, MultiplyMatchesDense) {
  std::mt19937_64 gen(8);
  for (int trial = 0; trial < 20; ++trial) {
    const HalrMatrix a = random_halr(random_cluster(kBox, 4, gen), 3, gen);
    const HalrMatrix b = random_halr(random_cluster(kBox, 4, gen), 3, gen);
    const Matrix ref = to_dense(a) * to_dense(b);
    EXPECT_LT(rel_err(to_dense(multiply_exact(a, b)), ref), 1e-12);
    EXPECT_LT(rel_err(to_dense(multiply(a, b, 1e-10)), ref), 1e-8);
  }
}

TEST(Arithmetic, HadamardMatchesDense) {
  std::mt19937_64 gen(9);
  for (int trial = 0; trial < 20; ++trial) {
    const HalrMatrix a = random_halr(random_cluster(kBox, 4, gen), 3, gen);
    const HalrMatrix b = random_halr(random_cluster(kBox, 4, gen), 2, gen);
    const Matrix ref = to_dense(a).cwiseProduct(to_dense(b));
    const HalrMatrix c = hadamard_exact(a, b);
    EXPECT_LT(rel_err(to_dense(c), ref), 1e-12);
    EXPECT_LT(rel_err(to_dense(hadamard(a, b, 1e-10)), ref), 1e-8);
  }
}

TEST(Arithmetic, HadamardRankIsProductOfRanks) {
  std::mt19937_64 gen(10);
  const Index n = 200;
  const HalrMatrix a = HalrMatrix::low_rank(FactoredLowRank(gaussian(n, 3, gen), gaussian(n, 3, gen)));
  const HalrMatrix b = HalrMatrix::low_rank(FactoredLowRank(gaussian(n, 4, gen), gaussian(n, 4, gen)));
  EXPECT_EQ(hadamard_exact(a, b).rank(), 12);
}

TEST(Arithmetic, DotAndFrobeniusMatchDense) {
  std::mt19937_64 gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const HalrMatrix a = random_halr(random_cluster(kBox, 4, gen), 3, gen);
    const HalrMatrix b = random_halr(random_cluster(kBox, 4, gen), 3, gen);
    const Matrix da = to_dense(a);
    const Matrix db = to_dense(b);
    EXPECT_NEAR(dot(a, b), (da.array() * db.array()).sum(), 1e-10 * da.norm() * db.norm());
    EXPECT_NEAR(frobenius_norm(a), da.norm(), 1e-10 * da.norm());
  }
}

TEST(Arithmetic, RestrictBlockMatchesDense) {
  std::mt19937_64 gen(12);
  const HalrMatrix a = random_halr(random_cluster(kBox, 4, gen, 0.9), 3, gen);
  const Matrix d = to_dense(a);
  EXPECT_EQ(to_dense(restrict_block(a, 0, 24, 24, 24)), d.block(0, 24, 24, 24));
  EXPECT_EQ(to_dense(restrict_block(a, 10, 10, 30, 30)), d.block(10, 10, 30, 30));
  EXPECT_EQ(to_dense(restrict_block(a, 5, 30, 30, 10)), d.block(5, 30, 30, 10));
  EXPECT_THROW(restrict_block(a, 40, 0, 10, 5), Error);
}

TEST(Arithmetic, Norm2EstimateIsLowerBound) {
  std::mt19937_64 gen(13);
  const HalrMatrix a = random_halr(hodlr_cluster(kBox, 3), 3, gen);
  const double est = norm2_estimate(a, 20);
  Eigen::JacobiSVD<Matrix> svd(to_dense(a));
  EXPECT_LE(est, svd.singularValues()(0) * (1 + 1e-12));
  EXPECT_GE(est, 0.9 * svd.singularValues()(0));
}

TEST(Arithmetic, StorageReportCountsLeaves) {
  const HalrMatrix a = HalrMatrix::split({HalrMatrix::dense(Matrix::Ones(2, 2)),
                                          HalrMatrix::low_rank(FactoredLowRank(Matrix::Ones(2, 1), Matrix::Ones(3, 1))),
                                          HalrMatrix::zero(3, 2), HalrMatrix::dense(Matrix::Ones(3, 3))});
  const StorageReport r = storage_report(a);
  EXPECT_EQ(r.dense_leaves, 2);
  EXPECT_EQ(r.low_rank_leaves, 2);
  EXPECT_EQ(r.entries, 4 + 5 + 0 + 9);
  EXPECT_EQ(r.bytes, 18 * sizeof(double));
  EXPECT_EQ(r.halr_rank, 1);
  EXPECT_EQ(r.rank_histogram.at(0), 1);
}

TEST(Arithmetic, SplitMismatchRaises) {
  const HalrMatrix a = HalrMatrix::split({HalrMatrix::dense(Matrix::Ones(2, 2)), HalrMatrix::zero(2, 2),
                                          HalrMatrix::zero(2, 2), HalrMatrix::dense(Matrix::Ones(2, 2))});
  const HalrMatrix b = HalrMatrix::split({HalrMatrix::dense(Matrix::Ones(1, 2)), HalrMatrix::zero(1, 2),
                                          HalrMatrix::zero(3, 2), HalrMatrix::dense(Matrix::Ones(3, 2))});
  try {
    add_exact(a, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IncompatibleClusters);
  }
  EXPECT_THROW(add_exact(a, HalrMatrix::zero(4, 5)), Error);
}
