#pragma once

// Structured arithmetic on HALR matrices. Functions with an `_exact` suffix
// never truncate: low-rank sums append factors, so leaf ranks follow the
// worst-case structure bounds. The truncating variants take a relative
// tolerance eps and recompress every low-rank leaf at eps * ||C||_2, where
// ||C||_2 is estimated by a short power iteration on the untruncated result.

#include "halr/halr_matrix.hpp"

#include <cmath>
#include <cstdint>
#include <map>
#include <random>

namespace halr {

/// Element-count guard for densification.
inline constexpr Index kDefaultDensifyLimit = 100'000'000;

inline Matrix to_dense(const HalrMatrix& a, Index limit = kDefaultDensifyLimit) {
  if (a.rows() * a.cols() > limit) raise(ErrorCode::TooLarge, "to_dense exceeds element limit");
  if (a.is_dense_leaf()) return a.dense_block();
  if (a.is_low_rank_leaf()) return a.factors().to_dense();
  Matrix out(a.rows(), a.cols());
  a.for_each_leaf([&](const HalrMatrix& leaf, Index r0, Index c0) {
    if (leaf.is_dense_leaf())
      out.block(r0, c0, leaf.rows(), leaf.cols()) = leaf.dense_block();
    else
      out.block(r0, c0, leaf.rows(), leaf.cols()) = leaf.factors().to_dense();
  });
  return out;
}

/// Multiply-add counter for matvec.
struct FlopCounter {
  std::int64_t multiply_adds = 0;
};

namespace detail {

inline void matvec_into(const HalrMatrix& a, const Eigen::Ref<const Vector>& v, Eigen::Ref<Vector> y,
                        FlopCounter* flops) {
  if (a.is_dense_leaf()) {
    y.noalias() += a.dense_block() * v;
    if (flops) flops->multiply_adds += a.rows() * a.cols();
    return;
  }
  if (a.is_low_rank_leaf()) {
    const auto& f = a.factors();
    if (f.rank() == 0) return;
    const Vector t = f.V.transpose() * v;
    y.noalias() += f.U * t;
    if (flops) flops->multiply_adds += f.rank() * (a.rows() + a.cols());
    return;
  }
  const Index r = a.split_row();
  const Index c = a.split_col();
  const Index m2 = a.rows() - r;
  const Index n2 = a.cols() - c;
  matvec_into(a.child(0), v.head(c), y.head(r), flops);
  matvec_into(a.child(1), v.tail(n2), y.head(r), flops);
  matvec_into(a.child(2), v.head(c), y.tail(m2), flops);
  matvec_into(a.child(3), v.tail(n2), y.tail(m2), flops);
}

inline void matmat_into(const HalrMatrix& a, const Eigen::Ref<const Matrix>& x, Eigen::Ref<Matrix> y) {
  if (a.is_dense_leaf()) {
    y.noalias() += a.dense_block() * x;
    return;
  }
  if (a.is_low_rank_leaf()) {
    const auto& f = a.factors();
    if (f.rank() == 0) return;
    const Matrix t = f.V.transpose() * x;
    y.noalias() += f.U * t;
    return;
  }
  const Index r = a.split_row();
  const Index c = a.split_col();
  const Index m2 = a.rows() - r;
  const Index n2 = a.cols() - c;
  matmat_into(a.child(0), x.topRows(c), y.topRows(r));
  matmat_into(a.child(1), x.bottomRows(n2), y.topRows(r));
  matmat_into(a.child(2), x.topRows(c), y.bottomRows(m2));
  matmat_into(a.child(3), x.bottomRows(n2), y.bottomRows(m2));
}

inline void transpose_matmat_into(const HalrMatrix& a, const Eigen::Ref<const Matrix>& x, Eigen::Ref<Matrix> y) {
  if (a.is_dense_leaf()) {
    y.noalias() += a.dense_block().transpose() * x;
    return;
  }
  if (a.is_low_rank_leaf()) {
    const auto& f = a.factors();
    if (f.rank() == 0) return;
    const Matrix t = f.U.transpose() * x;
    y.noalias() += f.V * t;
    return;
  }
  const Index r = a.split_row();
  const Index c = a.split_col();
  const Index m2 = a.rows() - r;
  const Index n2 = a.cols() - c;
  transpose_matmat_into(a.child(0), x.topRows(r), y.topRows(c));
  transpose_matmat_into(a.child(2), x.bottomRows(m2), y.topRows(c));
  transpose_matmat_into(a.child(1), x.topRows(r), y.bottomRows(n2));
  transpose_matmat_into(a.child(3), x.bottomRows(m2), y.bottomRows(n2));
}

}  // namespace detail

/// A v by block recursion; O(storage) flops.
inline Vector matvec(const HalrMatrix& a, const Vector& v, FlopCounter* flops = nullptr) {
  require_dims(v.size() == a.cols(), "matvec: vector length != cols");
  Vector y = Vector::Zero(a.rows());
  detail::matvec_into(a, v, y, flops);
  return y;
}

/// A^T v.
inline Vector matvec_transpose(const HalrMatrix& a, const Vector& v) {
  require_dims(v.size() == a.rows(), "matvec_transpose: vector length != rows");
  Matrix y = Matrix::Zero(a.cols(), 1);
  detail::transpose_matmat_into(a, v, y);
  return y.col(0);
}

/// A X for a dense block of columns X.
inline Matrix matmat(const HalrMatrix& a, const Matrix& x) {
  require_dims(x.rows() == a.cols(), "matmat: inner dimensions differ");
  Matrix y = Matrix::Zero(a.rows(), x.cols());
  detail::matmat_into(a, x, y);
  return y;
}

/// A^T X.
inline Matrix transpose_matmat(const HalrMatrix& a, const Matrix& x) {
  require_dims(x.rows() == a.rows(), "transpose_matmat: inner dimensions differ");
  Matrix y = Matrix::Zero(a.cols(), x.cols());
  detail::transpose_matmat_into(a, x, y);
  return y;
}

/// X A for a dense block of rows X.
inline Matrix dense_times(const Matrix& x, const HalrMatrix& a) {
  require_dims(x.cols() == a.rows(), "dense_times: inner dimensions differ");
  return transpose_matmat(a, x.transpose()).transpose();
}

inline HalrMatrix transpose(const HalrMatrix& a) {
  if (a.is_dense_leaf()) return HalrMatrix::dense(a.dense_block().transpose());
  if (a.is_low_rank_leaf()) return HalrMatrix::low_rank(a.factors().transposed());
  return HalrMatrix::split({transpose(a.child(0)), transpose(a.child(2)), transpose(a.child(1)), transpose(a.child(3))});
}

/// The m x n sub-block at (r0, c0) as an HALR matrix. Sub-blocks that cut
/// through exactly one split line of a node cannot be a 2x2 quad-tree node
/// and are materialized densely.
inline HalrMatrix restrict_block(const HalrMatrix& a, Index r0, Index c0, Index m, Index n) {
  require_dims(r0 >= 0 && c0 >= 0 && m > 0 && n > 0 && r0 + m <= a.rows() && c0 + n <= a.cols(),
               "restrict_block out of range");
  if (r0 == 0 && c0 == 0 && m == a.rows() && n == a.cols()) return a;
  if (a.is_dense_leaf()) return HalrMatrix::dense(a.dense_block().block(r0, c0, m, n));
  if (a.is_low_rank_leaf()) return HalrMatrix::low_rank(a.factors().block(r0, c0, m, n));
  const Index r = a.split_row();
  const Index c = a.split_col();
  const bool top = r0 + m <= r;
  const bool bottom = r0 >= r;
  const bool left = c0 + n <= c;
  const bool right = c0 >= c;
  if ((top || bottom) && (left || right)) {
    const int i = top ? 0 : 1;
    const int j = left ? 0 : 1;
    return restrict_block(a.child(i, j), top ? r0 : r0 - r, left ? c0 : c0 - c, m, n);
  }
  if (!top && !bottom && !left && !right) {
    const Index m1 = r - r0;
    const Index n1 = c - c0;
    return HalrMatrix::split({restrict_block(a.child(0), r0, c0, m1, n1), restrict_block(a.child(1), r0, 0, m1, n - n1),
                              restrict_block(a.child(2), 0, c0, m - m1, n1),
                              restrict_block(a.child(3), 0, 0, m - m1, n - n1)});
  }
  Matrix out(m, n);
  const Matrix full = to_dense(a);
  out = full.block(r0, c0, m, n);
  return HalrMatrix::dense(std::move(out));
}

inline HalrMatrix scale(const HalrMatrix& a, double alpha) {
  return a.map_leaves([alpha](const HalrMatrix& leaf) {
    if (leaf.is_dense_leaf()) return HalrMatrix::dense(alpha * leaf.dense_block());
    if (alpha == 0.0) return HalrMatrix::zero(leaf.rows(), leaf.cols());
    const auto& f = leaf.factors();
    return HalrMatrix::low_rank(FactoredLowRank(alpha * f.U, f.V));
  });
}

/// Recompress every low-rank leaf at absolute tolerance `tol`.
inline HalrMatrix recompress(const HalrMatrix& a, double tol, TruncationNorm norm = TruncationNorm::Spectral) {
  return a.map_leaves([tol, norm](const HalrMatrix& leaf) {
    if (leaf.is_dense_leaf()) return leaf;
    return HalrMatrix::low_rank(compress_factors(leaf.factors(), tol, norm));
  });
}

/// Power-iteration estimate (lower bound) of ||A||_2.
inline double norm2_estimate(const HalrMatrix& a, int iterations = 5) {
  std::mt19937_64 gen(0x5eed);
  std::normal_distribution<double> nd;
  Vector x(a.cols());
  for (Index i = 0; i < x.size(); ++i) x(i) = nd(gen);
  double nx = x.norm();
  if (nx == 0.0) return 0.0;
  x /= nx;
  double est = 0.0;
  for (int it = 0; it < iterations; ++it) {
    const Vector y = matvec(a, x);
    est = y.norm();
    if (est == 0.0) return 0.0;
    x = matvec_transpose(a, y);
    nx = x.norm();
    if (nx == 0.0) return est;
    x /= nx;
  }
  return std::max(est, matvec(a, x).norm());
}

/// Structural sum: cluster is the intersection of the operand clusters.
inline HalrMatrix add_exact(const HalrMatrix& a, const HalrMatrix& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "add: shapes differ");
  if (a.is_dense_leaf() || b.is_dense_leaf()) {
    Matrix s = to_dense(a);
    if (b.is_dense_leaf())
      s += b.dense_block();
    else
      s += to_dense(b);
    return HalrMatrix::dense(std::move(s));
  }
  if (a.is_low_rank_leaf() && b.is_low_rank_leaf())
    return HalrMatrix::low_rank(append_factors(a.factors(), b.factors()));
  if (a.is_low_rank_leaf() || b.is_low_rank_leaf()) {
    const HalrMatrix& lr = a.is_low_rank_leaf() ? a : b;
    const HalrMatrix& sp = a.is_low_rank_leaf() ? b : a;
    const Index r = sp.split_row();
    const Index c = sp.split_col();
    const Index m2 = sp.rows() - r;
    const Index n2 = sp.cols() - c;
    const auto& f = lr.factors();
    return HalrMatrix::split({add_exact(HalrMatrix::low_rank(f.block(0, 0, r, c)), sp.child(0)),
                              add_exact(HalrMatrix::low_rank(f.block(0, c, r, n2)), sp.child(1)),
                              add_exact(HalrMatrix::low_rank(f.block(r, 0, m2, c)), sp.child(2)),
                              add_exact(HalrMatrix::low_rank(f.block(r, c, m2, n2)), sp.child(3))});
  }
  if (a.split_row() != b.split_row() || a.split_col() != b.split_col())
    raise(ErrorCode::IncompatibleClusters, "add: split positions differ");
  return HalrMatrix::split({add_exact(a.child(0), b.child(0)), add_exact(a.child(1), b.child(1)),
                            add_exact(a.child(2), b.child(2)), add_exact(a.child(3), b.child(3))});
}

namespace detail {

inline HalrMatrix truncate_relative(const HalrMatrix& c, double eps) {
  if (eps <= 0.0) return c;
  const double nrm = norm2_estimate(c);
  return recompress(c, eps * nrm);
}

}  // namespace detail

/// A + B with relative recompression tolerance eps (eps <= 0: exact).
inline HalrMatrix add(const HalrMatrix& a, const HalrMatrix& b, double eps) {
  return detail::truncate_relative(add_exact(a, b), eps);
}

inline HalrMatrix axpy(double alpha, const HalrMatrix& a, const HalrMatrix& b, double eps) {
  return add(scale(a, alpha), b, eps);
}

/// A + U V^T keeping the cluster of A.
inline HalrMatrix add_low_rank(const HalrMatrix& a, const FactoredLowRank& f, double eps = 0.0) {
  return add(a, HalrMatrix::low_rank(f), eps);
}

/// Block-recursive product; see `multiply`.
inline HalrMatrix multiply_exact(const HalrMatrix& a, const HalrMatrix& b) {
  require_dims(a.cols() == b.rows(), "multiply: inner dimensions differ");
  if (a.is_low_rank_leaf()) {
    const auto& f = a.factors();
    return HalrMatrix::low_rank(FactoredLowRank(f.U, transpose_matmat(b, f.V)));
  }
  if (b.is_low_rank_leaf()) {
    const auto& f = b.factors();
    return HalrMatrix::low_rank(FactoredLowRank(matmat(a, f.U), f.V));
  }
  if (a.is_dense_leaf()) return HalrMatrix::dense(dense_times(a.dense_block(), b));
  if (b.is_dense_leaf()) return HalrMatrix::dense(matmat(a, b.dense_block()));
  if (a.split_col() != b.split_row()) raise(ErrorCode::IncompatibleClusters, "multiply: inner splits differ");
  std::array<HalrMatrix, 4> c;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      c[static_cast<std::size_t>(2 * i + j)] =
          add_exact(multiply_exact(a.child(i, 0), b.child(0, j)), multiply_exact(a.child(i, 1), b.child(1, j)));
  return HalrMatrix::split(std::move(c));
}

/// A B: low-rank roots short-circuit, dense roots go dense, otherwise the
/// 2x2 block products are summed with cluster T_ij1 ∩ T_ij2.
inline HalrMatrix multiply(const HalrMatrix& a, const HalrMatrix& b, double eps) {
  return detail::truncate_relative(multiply_exact(a, b), eps);
}

namespace detail {

/// Row-wise Kronecker (face-splitting) product: out(i, p*kb+q) = a(i,p) b(i,q).
inline Matrix face_split(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows(), a.cols() * b.cols());
  for (Index p = 0; p < a.cols(); ++p)
    for (Index q = 0; q < b.cols(); ++q) out.col(p * b.cols() + q) = a.col(p).cwiseProduct(b.col(q));
  return out;
}

}  // namespace detail

inline HalrMatrix hadamard_exact(const HalrMatrix& a, const HalrMatrix& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "hadamard: shapes differ");
  if (a.is_dense_leaf() || b.is_dense_leaf()) {
    Matrix p = to_dense(a);
    p.array() *= to_dense(b).array();
    return HalrMatrix::dense(std::move(p));
  }
  if (a.is_low_rank_leaf() && b.is_low_rank_leaf()) {
    const auto& fa = a.factors();
    const auto& fb = b.factors();
    const Index m = a.rows();
    const Index n = a.cols();
    if (fa.rank() * fb.rank() > std::min(m, n)) {
      // The face-split factors would be wider than the block; an identity
      // factor is exact with rank min(m, n) instead.
      Matrix p = fa.to_dense();
      p.array() *= fb.to_dense().array();
      if (n <= m) return HalrMatrix::low_rank(FactoredLowRank(std::move(p), Matrix::Identity(n, n)));
      return HalrMatrix::low_rank(FactoredLowRank(Matrix::Identity(m, m), p.transpose()));
    }
    return HalrMatrix::low_rank(FactoredLowRank(detail::face_split(fa.U, fb.U), detail::face_split(fa.V, fb.V)));
  }
  if (a.is_low_rank_leaf() || b.is_low_rank_leaf()) {
    const HalrMatrix& lr = a.is_low_rank_leaf() ? a : b;
    const HalrMatrix& sp = a.is_low_rank_leaf() ? b : a;
    const Index r = sp.split_row();
    const Index c = sp.split_col();
    std::array<HalrMatrix, 4> ch;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const auto& s = sp.child(i, j);
        ch[static_cast<std::size_t>(2 * i + j)] =
            hadamard_exact(restrict_block(lr, i ? r : 0, j ? c : 0, s.rows(), s.cols()), s);
      }
    return HalrMatrix::split(std::move(ch));
  }
  if (a.split_row() != b.split_row() || a.split_col() != b.split_col())
    raise(ErrorCode::IncompatibleClusters, "hadamard: split positions differ");
  return HalrMatrix::split({hadamard_exact(a.child(0), b.child(0)), hadamard_exact(a.child(1), b.child(1)),
                            hadamard_exact(a.child(2), b.child(2)), hadamard_exact(a.child(3), b.child(3))});
}

/// Entrywise product; low-rank leaf pairs have rank ka*kb before recompression.
inline HalrMatrix hadamard(const HalrMatrix& a, const HalrMatrix& b, double eps) {
  return detail::truncate_relative(hadamard_exact(a, b), eps);
}

/// trace(A^T B) without densifying low-rank leaves. Where one side is dense
/// and the other is split, the dense side is partitioned like the other.
inline double dot(const HalrMatrix& a, const HalrMatrix& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "dot: shapes differ");
  if (a.is_low_rank_leaf()) {
    const auto& f = a.factors();
    if (f.rank() == 0) return 0.0;
    return f.U.cwiseProduct(matmat(b, f.V)).sum();
  }
  if (b.is_low_rank_leaf()) {
    const auto& f = b.factors();
    if (f.rank() == 0) return 0.0;
    return f.U.cwiseProduct(matmat(a, f.V)).sum();
  }
  if (a.is_dense_leaf() && b.is_dense_leaf()) return a.dense_block().cwiseProduct(b.dense_block()).sum();
  // Partition by whichever side is split; when both are, follow `a`.
  const HalrMatrix& sp = a.is_leaf() ? b : a;
  const Index r = sp.split_row();
  const Index c = sp.split_col();
  double s = 0.0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const Index r0 = i ? r : 0;
      const Index c0 = j ? c : 0;
      const Index m = i ? sp.rows() - r : r;
      const Index n = j ? sp.cols() - c : c;
      const HalrMatrix ai = (!a.is_leaf() && &sp == &a) ? a.child(i, j) : restrict_block(a, r0, c0, m, n);
      const HalrMatrix bi = (!b.is_leaf() && b.split_row() == r && b.split_col() == c) ? b.child(i, j)
                                                                                       : restrict_block(b, r0, c0, m, n);
      s += dot(ai, bi);
    }
  return s;
}

inline double frobenius_norm(const HalrMatrix& a) { return std::sqrt(std::max(0.0, dot(a, a))); }

struct StorageReport {
  Index entries = 0;
  std::size_t bytes = 0;
  Index dense_leaves = 0;
  Index low_rank_leaves = 0;
  Index halr_rank = 0;
  std::map<Index, Index> rank_histogram;  ///< rank -> number of low-rank leaves

  double megabytes() const { return static_cast<double>(bytes) / (1024.0 * 1024.0); }
};

inline StorageReport storage_report(const HalrMatrix& a) {
  StorageReport r;
  a.for_each_leaf([&](const HalrMatrix& leaf, Index, Index) {
    if (leaf.is_dense_leaf()) {
      ++r.dense_leaves;
      r.entries += leaf.rows() * leaf.cols();
    } else {
      ++r.low_rank_leaves;
      const Index k = leaf.factors().rank();
      r.entries += k * (leaf.rows() + leaf.cols());
      r.halr_rank = std::max(r.halr_rank, k);
      ++r.rank_histogram[k];
    }
  });
  r.bytes = static_cast<std::size_t>(r.entries) * sizeof(double);
  return r;
}

}  // namespace halr
