#pragma once

#include "halr/arithmetic.hpp"

#include <random>

namespace halr::testing {

inline Matrix gaussian(Index m, Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> nd;
  Matrix a(m, n);
  for (Index i = 0; i < a.size(); ++i) a.data()[i] = nd(gen);
  return a;
}

/// Random cluster on `box` with midpoint splits, up to `max_depth` levels.
inline QuadTreeCluster random_cluster(const IndexBox& box, Index max_depth, std::mt19937_64& gen,
                                      double p_split = 0.6, double p_dense = 0.3) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (max_depth > 1 && box.rows() >= 2 && box.cols() >= 2 && u(gen) < p_split) {
    const auto b = midpoint_split(box);
    return QuadTreeCluster::split(box, {random_cluster(b[0], max_depth - 1, gen, p_split, p_dense),
                                        random_cluster(b[1], max_depth - 1, gen, p_split, p_dense),
                                        random_cluster(b[2], max_depth - 1, gen, p_split, p_dense),
                                        random_cluster(b[3], max_depth - 1, gen, p_split, p_dense)});
  }
  return u(gen) < p_dense ? QuadTreeCluster::dense(box) : QuadTreeCluster::low_rank(box);
}

/// Random HALR matrix on cluster t with low-rank leaves of rank <= k.
/// Column j of each left factor is scaled by decay^j.
inline HalrMatrix random_halr(const QuadTreeCluster& t, Index k, std::mt19937_64& gen, double decay = 1.0) {
  if (t.is_dense_leaf()) return HalrMatrix::dense(gaussian(t.rows(), t.cols(), gen));
  if (t.is_low_rank_leaf()) {
    const Index r = std::min({k, t.rows(), t.cols()});
    Matrix u = gaussian(t.rows(), r, gen);
    for (Index j = 0; j < r; ++j) u.col(j) *= std::pow(decay, static_cast<double>(j));
    return HalrMatrix::low_rank(FactoredLowRank(std::move(u), gaussian(t.cols(), r, gen)));
  }
  return HalrMatrix::split({random_halr(t.child(0), k, gen, decay), random_halr(t.child(1), k, gen, decay),
                            random_halr(t.child(2), k, gen, decay), random_halr(t.child(3), k, gen, decay)});
}

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double nb = b.norm();
  return nb > 0 ? (a - b).norm() / nb : (a - b).norm();
}

/// Largest rank over low-rank leaves.
inline Index max_leaf_rank(const HalrMatrix& a) { return a.rank(); }

}  // namespace halr::testing
