#pragma once

#include "halr/common.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <vector>

namespace halr {

/// A ~= U * V^T with U (m x k) and V (n x k); k = 0 is the zero matrix.
struct FactoredLowRank {
  Matrix U;
  Matrix V;

  FactoredLowRank() = default;
  FactoredLowRank(Matrix u, Matrix v) : U(std::move(u)), V(std::move(v)) {
    require_dims(U.cols() == V.cols(), "factor column counts differ");
  }

  static FactoredLowRank zero(Index m, Index n) { return {Matrix(m, 0), Matrix(n, 0)}; }

  Index rows() const { return U.rows(); }
  Index cols() const { return V.rows(); }
  Index rank() const { return U.cols(); }

  Matrix to_dense() const {
    if (rank() == 0) return Matrix::Zero(rows(), cols());
    return U * V.transpose();
  }

  /// ||U V^T||_F without forming the product.
  double frobenius_norm() const {
    if (rank() == 0) return 0.0;
    const Matrix gu = U.transpose() * U;
    const Matrix gv = V.transpose() * V;
    return std::sqrt(std::max(0.0, gu.cwiseProduct(gv).sum()));
  }

  FactoredLowRank transposed() const { return {V, U}; }

  FactoredLowRank block(Index r0, Index c0, Index m, Index n) const {
    return {U.middleRows(r0, m), V.middleRows(c0, n)};
  }
};

/// Exact concatenation [U1 U2][V1 V2]^T.
inline FactoredLowRank append_factors(const FactoredLowRank& a, const FactoredLowRank& b) {
  require_dims(a.rows() == b.rows() && a.cols() == b.cols(), "append_factors: shapes differ");
  Matrix u(a.rows(), a.rank() + b.rank());
  Matrix v(a.cols(), a.rank() + b.rank());
  u << a.U, b.U;
  v << a.V, b.V;
  return {std::move(u), std::move(v)};
}

/// Function handle for the entries f(i, j) of an m x n matrix (0-based),
/// optionally with a block evaluator for cheaper bulk access.
class EntryOracle {
 public:
  using EntryFn = std::function<double(Index, Index)>;
  using BlockFn = std::function<void(Index r0, Index c0, Eigen::Ref<Matrix> out)>;

  EntryOracle() = default;

  static EntryOracle from_function(Index m, Index n, EntryFn f) {
    auto s = std::make_shared<Source>();
    s->entry = std::move(f);
    return EntryOracle(std::move(s), 0, 0, m, n);
  }

  /// `entry` may be empty, in which case single entries go through 1x1 blocks.
  static EntryOracle from_blocks(Index m, Index n, BlockFn b, EntryFn entry = {}) {
    auto s = std::make_shared<Source>();
    s->block = std::move(b);
    s->entry = std::move(entry);
    return EntryOracle(std::move(s), 0, 0, m, n);
  }

  static EntryOracle from_matrix(Matrix a) {
    auto data = std::make_shared<const Matrix>(std::move(a));
    const Index m = data->rows();
    const Index n = data->cols();
    return from_blocks(
        m, n, [data](Index r0, Index c0, Eigen::Ref<Matrix> out) { out = data->block(r0, c0, out.rows(), out.cols()); },
        [data](Index i, Index j) { return (*data)(i, j); });
  }

  Index rows() const { return m_; }
  Index cols() const { return n_; }

  double operator()(Index i, Index j) const {
    if (src_->entry) return src_->entry(r0_ + i, c0_ + j);
    Matrix one(1, 1);
    src_->block(r0_ + i, c0_ + j, one);
    return one(0, 0);
  }

  void block(Index r0, Index c0, Eigen::Ref<Matrix> out) const {
    if (src_->block) {
      src_->block(r0_ + r0, c0_ + c0, out);
      return;
    }
    for (Index j = 0; j < out.cols(); ++j)
      for (Index i = 0; i < out.rows(); ++i) out(i, j) = src_->entry(r0_ + r0 + i, c0_ + c0 + j);
  }

  Matrix block(Index r0, Index c0, Index m, Index n) const {
    Matrix out(m, n);
    block(r0, c0, out);
    return out;
  }

  Vector row(Index i) const {
    Matrix r(1, n_);
    block(i, 0, r);
    return r.transpose();
  }

  Vector col(Index j) const {
    Matrix c(m_, 1);
    block(0, j, c);
    return c.col(0);
  }

  Matrix dense() const { return block(0, 0, m_, n_); }

  /// View of the m x n sub-block starting at (r0, c0).
  EntryOracle sub(Index r0, Index c0, Index m, Index n) const {
    require_dims(r0 >= 0 && c0 >= 0 && r0 + m <= m_ && c0 + n <= n_, "sub-oracle out of range");
    return EntryOracle(src_, r0_ + r0, c0_ + c0, m, n);
  }

 private:
  struct Source {
    EntryFn entry;
    BlockFn block;
  };

  EntryOracle(std::shared_ptr<const Source> s, Index r0, Index c0, Index m, Index n)
      : src_(std::move(s)), r0_(r0), c0_(c0), m_(m), n_(n) {}

  std::shared_ptr<const Source> src_;
  Index r0_ = 0;
  Index c0_ = 0;
  Index m_ = 0;
  Index n_ = 0;
};

/// Consecutive below-eps crosses that end an ACA run.
inline constexpr Index kAcaWindow = 2;

struct AcaResult {
  FactoredLowRank factors;
  bool success = false;
  Index entries_evaluated = 0;
};

/// Adaptive cross approximation with partial pivoting.
///
/// The first pivot row is the middle row; each subsequent pivot row is the
/// largest-modulus untried entry of the previous residual column (ties go to
/// the lowest index). The iteration stops successfully once ||u_k|| ||v_k|| <=
/// eps holds on two consecutive steps, or when every row has been tried with a
/// zero residual. The two trailing window crosses do not count against
/// `maxrank`: failure (success = false, partial factorization returned) means
/// a cross above eps numbered maxrank + 1 was needed.
inline AcaResult aca(const EntryOracle& a, Index maxrank, double eps) {
  const Index m = a.rows();
  const Index n = a.cols();
  const Index full = std::min(m, n);
  const Index sig_cap = std::max<Index>(0, maxrank);
  const Index cap = std::min(sig_cap + kAcaWindow, full);
  Matrix U(m, cap);
  Matrix V(n, cap);
  std::vector<char> tried(static_cast<std::size_t>(m), 0);
  Index n_tried = 0;
  Index k = 0;
  int small_steps = 0;
  Index evaluated = 0;
  Index pivot_row = m / 2;

  auto next_untried = [&](Index from) {
    for (Index s = 0; s < m; ++s) {
      const Index r = (from + s) % m;
      if (!tried[static_cast<std::size_t>(r)]) return r;
    }
    return Index(-1);
  };

  AcaResult result;
  Vector row(n);
  Vector col(m);
  while (true) {
    if (n_tried == m) {
      result.success = true;
      break;
    }
    row = a.row(pivot_row);
    evaluated += n;
    if (k > 0) row.noalias() -= V.leftCols(k) * U.row(pivot_row).head(k).transpose();
    Index pivot_col = 0;
    const double pivot_abs = row.cwiseAbs().maxCoeff(&pivot_col);
    if (pivot_abs == 0.0) {
      tried[static_cast<std::size_t>(pivot_row)] = 1;
      ++n_tried;
      if (n_tried == m) {
        result.success = true;
        break;
      }
      pivot_row = next_untried(pivot_row + 1);
      continue;
    }
    if (k == cap) {
      // Another cross is needed but the rank budget is exhausted.
      result.success = (cap == full && cap > 0);
      break;
    }
    const double pivot = row(pivot_col);
    col = a.col(pivot_col);
    evaluated += m;
    if (k > 0) col.noalias() -= U.leftCols(k) * V.row(pivot_col).head(k).transpose();
    U.col(k) = col;
    V.col(k) = row / pivot;
    tried[static_cast<std::size_t>(pivot_row)] = 1;
    ++n_tried;
    const double step = U.col(k).norm() * V.col(k).norm();
    ++k;
    small_steps = step <= eps ? small_steps + 1 : 0;
    if (small_steps >= kAcaWindow) {
      result.success = true;
      break;
    }
    if (k - small_steps > sig_cap) break;
    // Largest untried entry of the new residual column.
    Index best = -1;
    double best_abs = -1.0;
    for (Index i = 0; i < m; ++i) {
      if (tried[static_cast<std::size_t>(i)]) continue;
      const double v = std::abs(U(i, k - 1));
      if (v > best_abs) {
        best_abs = v;
        best = i;
      }
    }
    if (best < 0) {
      result.success = true;
      break;
    }
    pivot_row = best;
  }
  if (!result.success) k = std::min(k, sig_cap);
  result.factors = FactoredLowRank(U.leftCols(k), V.leftCols(k));
  result.entries_evaluated = evaluated;
  return result;
}

enum class TruncationNorm {
  Spectral,   ///< drop singular values <= tol
  Frobenius,  ///< drop the smallest singular values while their tail norm <= tol
};

/// Truncated SVD of U V^T via QR of both factors; returns a minimal-rank
/// factorization within `tol` (absolute). The left factor carries the
/// singular values.
inline FactoredLowRank compress_factors(const FactoredLowRank& f, double tol,
                                        TruncationNorm norm = TruncationNorm::Spectral) {
  const Index m = f.rows();
  const Index n = f.cols();
  const Index k = f.rank();
  if (k == 0) return FactoredLowRank::zero(m, n);
  const Index ku = std::min(m, k);
  const Index kv = std::min(n, k);
  Eigen::HouseholderQR<Matrix> qru(f.U);
  Eigen::HouseholderQR<Matrix> qrv(f.V);
  const Matrix ru = qru.matrixQR().topRows(ku).triangularView<Eigen::Upper>();
  const Matrix rv = qrv.matrixQR().topRows(kv).triangularView<Eigen::Upper>();
  const Matrix core = ru * rv.transpose();
  Eigen::JacobiSVD<Matrix> svd(core, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Index r = 0;
  if (norm == TruncationNorm::Spectral) {
    while (r < s.size() && s(r) > tol) ++r;
  } else {
    r = s.size();
    double tail = 0.0;
    while (r > 0 && tail + s(r - 1) * s(r - 1) <= tol * tol) {
      tail += s(r - 1) * s(r - 1);
      --r;
    }
  }
  if (r == 0) return FactoredLowRank::zero(m, n);
  const Matrix qu = qru.householderQ() * Matrix::Identity(m, ku);
  const Matrix qv = qrv.householderQ() * Matrix::Identity(n, kv);
  Matrix u = qu * (svd.matrixU().leftCols(r) * s.head(r).asDiagonal());
  Matrix v = qv * svd.matrixV().leftCols(r);
  return {std::move(u), std::move(v)};
}

/// F1 + F2 by appending factors and recompressing at absolute tolerance eps.
inline FactoredLowRank add_factored(const FactoredLowRank& a, const FactoredLowRank& b, double eps) {
  return compress_factors(append_factors(a, b), eps);
}

/// Pilot rank used by estimate_norm.
inline constexpr Index kNormPilotRank = 10;

/// ||U0 V0^T||_F of a rank-10 pilot cross approximation.
inline double estimate_norm(const EntryOracle& a) {
  const AcaResult pilot = aca(a, kNormPilotRank, 0.0);
  return pilot.factors.frobenius_norm();
}

}  // namespace halr
