#pragma once

// Solvers for A X + X B = C with banded A, B.
//
// Tolerances: the public entry points take a relative target tol and aim
// for ||A X + X B - C||_F <= tol * ||C||_F. Internally every solve receives
// an absolute residual budget; recursive solvers split their budget between
// the coupling correction, leaf truncation and the children (children in
// proportion to the square root of their area, so disjoint blocks add up in
// the Frobenius norm).

#include "halr/operators.hpp"

#include <Eigen/Eigenvalues>

#include <complex>

namespace halr {

struct SolveStats {
  bool converged = true;
  Index krylov_solves = 0;
  Index dense_solves = 0;
  Index max_krylov_iterations = 0;
  Index max_basis_size = 0;
};

struct SylvesterOptions {
  double tol = 1e-8;
  Index n_min = 256;
  Index max_iterations = 100;  ///< block steps of the extended Krylov method
};

namespace detail {

inline bool is_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) return false;
  const double s = a.cwiseAbs().maxCoeff();
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-14 * s;
}

inline Matrix solve_diagonalized(const SymEig& ea, const SymEig& eb, const Matrix& c) {
  Matrix f = ea.vectors.transpose() * c * eb.vectors;
  const double scale = ea.values.cwiseAbs().maxCoeff() + eb.values.cwiseAbs().maxCoeff();
  for (Index j = 0; j < f.cols(); ++j)
    for (Index i = 0; i < f.rows(); ++i) {
      const double d = ea.values(i) + eb.values(j);
      if (std::abs(d) <= 1e-14 * scale) raise(ErrorCode::SpectralOverlap, "spectra of A and -B overlap");
      f(i, j) /= d;
    }
  return ea.vectors * f * eb.vectors.transpose();
}

inline Matrix solve_schur(const Matrix& a, const Matrix& b, const Matrix& c) {
  using CMatrix = Eigen::MatrixXcd;
  Eigen::ComplexSchur<CMatrix> sa(a.cast<std::complex<double>>());
  Eigen::ComplexSchur<CMatrix> sb(b.cast<std::complex<double>>());
  const CMatrix& ta = sa.matrixT();
  const CMatrix& tb = sb.matrixT();
  CMatrix f = sa.matrixU().adjoint() * c.cast<std::complex<double>>() * sb.matrixU();
  const double scale = ta.diagonal().cwiseAbs().maxCoeff() + tb.diagonal().cwiseAbs().maxCoeff();
  const Index n = b.rows();
  CMatrix y(a.rows(), n);
  for (Index j = 0; j < n; ++j) {
    Eigen::VectorXcd rhs = f.col(j);
    if (j > 0) rhs.noalias() -= y.leftCols(j) * tb.col(j).head(j);
    CMatrix t = ta;
    t.diagonal().array() += tb(j, j);
    if (t.diagonal().cwiseAbs().minCoeff() <= 1e-14 * scale)
      raise(ErrorCode::SpectralOverlap, "spectra of A and -B overlap");
    y.col(j) = t.triangularView<Eigen::Upper>().solve(rhs);
  }
  return (sa.matrixU() * y * sb.matrixU().adjoint()).real();
}

}  // namespace detail

/// Dense solve of A X + X B = C: simultaneous diagonalization when A and B
/// are symmetric, complex Bartels-Stewart otherwise.
inline Matrix dense_solver_sylv(const Matrix& a, const Matrix& b, const Matrix& c) {
  require_dims(a.rows() == a.cols() && b.rows() == b.cols() && c.rows() == a.rows() && c.cols() == b.rows(),
               "dense_solver_sylv: incompatible sizes");
  if (detail::is_symmetric(a) && detail::is_symmetric(b)) {
    Eigen::SelfAdjointEigenSolver<Matrix> ea(a);
    Eigen::SelfAdjointEigenSolver<Matrix> eb(b);
    return detail::solve_diagonalized({ea.eigenvalues(), ea.eigenvectors()}, {eb.eigenvalues(), eb.eigenvectors()},
                                      c);
  }
  return detail::solve_schur(a, b, c);
}

namespace detail {

/// A X + X Bt^T = C on operator views, with cached eigendecompositions.
inline Matrix dense_solve_views(const OperatorView& a, const OperatorView& bt, const Matrix& c) {
  if (a.symmetric() && bt.symmetric())
    return solve_diagonalized(*a.op().block_eig(a.offset(), a.size()), *bt.op().block_eig(bt.offset(), bt.size()), c);
  return dense_solver_sylv(a.dense(), bt.dense().transpose(), c);
}

/// Orthonormal basis of an extended Krylov space, grown one block at a time.
class ExtendedKrylovBasis {
 public:
  ExtendedKrylovBasis(const OperatorView& op, const Matrix& start) : op_(op) {
    const Index m = op.size();
    q_.resize(m, 0);
    aq_.resize(m, 0);
    fwd_ = append(start);
    inv_ = fwd_.cols() > 0 ? append(op_.shifted_solve(0.0, fwd_)) : Matrix(m, 0);
  }

  /// Adds [A * fwd, A^{-1} * inv] orthogonalized against the basis.
  void expand() {
    if (exhausted()) return;
    Matrix w1 = fwd_.cols() > 0 ? op_.apply(fwd_) : Matrix(q_.rows(), 0);
    Matrix w2 = inv_.cols() > 0 ? op_.shifted_solve(0.0, inv_) : Matrix(q_.rows(), 0);
    fwd_ = append(w1);
    inv_ = append(w2);
  }

  /// No new directions can be produced.
  bool exhausted() const { return q_.cols() >= q_.rows() || (fwd_.cols() == 0 && inv_.cols() == 0); }

  const Matrix& q() const { return q_; }
  const Matrix& aq() const { return aq_; }

 private:
  Matrix append(Matrix w) {
    if (w.cols() == 0) return w;
    const double w0 = w.colwise().norm().maxCoeff();
    if (w0 == 0.0) return Matrix(q_.rows(), 0);
    for (int pass = 0; pass < 2 && q_.cols() > 0; ++pass) w.noalias() -= q_ * (q_.transpose() * w);
    Eigen::JacobiSVD<Matrix> svd(w, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    Index keep = 0;
    while (keep < s.size() && s(keep) > 1e-12 * w0) ++keep;
    keep = std::min(keep, q_.rows() - q_.cols());
    if (keep == 0) return Matrix(q_.rows(), 0);
    Matrix z = svd.matrixU().leftCols(keep);
    if (q_.cols() > 0) z.noalias() -= q_ * (q_.transpose() * z);
    Eigen::HouseholderQR<Matrix> qr(z);
    z = qr.householderQ() * Matrix::Identity(z.rows(), keep);
    const Matrix az = op_.apply(z);
    const Index k = q_.cols();
    q_.conservativeResize(Eigen::NoChange, k + keep);
    aq_.conservativeResize(Eigen::NoChange, k + keep);
    q_.rightCols(keep) = z;
    aq_.rightCols(keep) = az;
    return z;
  }

  OperatorView op_;
  Matrix q_;
  Matrix aq_;
  Matrix fwd_;
  Matrix inv_;
};

inline Matrix projected(const Matrix& q, const Matrix& aq, bool symmetric) {
  Matrix t = q.transpose() * aq;
  if (symmetric) t = 0.5 * (t + t.transpose()).eval();
  return t;
}

/// A X + X Bt^T = U V^T to absolute residual `budget` (Frobenius).
inline FactoredLowRank low_rank_solve(const OperatorView& a, const OperatorView& bt, const FactoredLowRank& c,
                                      double budget, Index max_iterations, SolveStats& stats) {
  require_dims(c.rows() == a.size() && c.cols() == bt.size(), "low-rank Sylvester: rhs shape");
  ++stats.krylov_solves;
  if (c.rank() == 0 || c.frobenius_norm() == 0.0) return FactoredLowRank::zero(c.rows(), c.cols());
  const double op_norm = a.norm_bound() + bt.norm_bound();
  ExtendedKrylovBasis ka(a, c.U);
  ExtendedKrylovBasis kb(bt, c.V);
  Matrix y;
  double res = std::numeric_limits<double>::infinity();
  Index it = 0;
  for (;;) {
    const Matrix& qa = ka.q();
    const Matrix& qb = kb.q();
    const Matrix ta = projected(qa, ka.aq(), a.symmetric());
    const Matrix tb = projected(qb, kb.aq(), bt.symmetric());
    const Matrix rhs = (qa.transpose() * c.U) * (qb.transpose() * c.V).transpose();
    y = dense_solver_sylv(ta, tb.transpose(), rhs);
    const Matrix ea = ka.aq() - qa * ta;
    const Matrix eb = kb.aq() - qb * tb;
    res = std::sqrt((ea * y).squaredNorm() + (eb * y.transpose()).squaredNorm());
    if (res <= 0.5 * budget) break;
    if (ka.exhausted() && kb.exhausted()) break;
    if (it >= max_iterations) {
      stats.converged = false;
      break;
    }
    ka.expand();
    kb.expand();
    ++it;
  }
  stats.max_krylov_iterations = std::max(stats.max_krylov_iterations, it);
  stats.max_basis_size = std::max({stats.max_basis_size, ka.q().cols(), kb.q().cols()});
  // Truncating Y by delta changes the residual by at most op_norm * delta.
  const double trunc = op_norm > 0 ? 0.5 * budget / op_norm : 0.0;
  Eigen::JacobiSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& s = svd.singularValues();
  Index r = s.size();
  double tail = 0.0;
  while (r > 0 && tail + s(r - 1) * s(r - 1) <= trunc * trunc) {
    tail += s(r - 1) * s(r - 1);
    --r;
  }
  if (r == 0) return FactoredLowRank::zero(c.rows(), c.cols());
  return {ka.q() * (svd.matrixU().leftCols(r) * s.head(r).asDiagonal()), kb.q() * svd.matrixV().leftCols(r)};
}

/// Factors of -([0 A12; A21 0] X + X [0 B12; B21 0]) given Bt = B^T.
template <class LeftT, class RightT>
FactoredLowRank coupling_rhs(const OperatorView& a, const OperatorView& bt, Index r, Index c, const LeftT& xt_times,
                             const RightT& x_times) {
  const FactoredLowRank ao = a.coupling_factors(r);
  const FactoredLowRank bo = bt.coupling_factors(c);
  // A_off X = Uo (X^T Vo)^T ; X B_off = X (Bt_off)^T = (X Vb) Ub^T.
  const Matrix left_v = xt_times(ao.V);
  const Matrix right_u = x_times(bo.V);
  Matrix u(a.size(), ao.rank() + bo.rank());
  Matrix v(bt.size(), ao.rank() + bo.rank());
  u << -ao.U, -right_u;
  v << left_v, bo.U;
  return {std::move(u), std::move(v)};
}

inline Matrix dense_rhs_solve(const OperatorView& a, const OperatorView& bt, const Matrix& c, double budget,
                              const SylvesterOptions& opt, SolveStats& stats) {
  const Index m = c.rows();
  const Index n = c.cols();
  if ((m <= opt.n_min && n <= opt.n_min) || m < 2 || n < 2) {
    ++stats.dense_solves;
    return dense_solve_views(a, bt, c);
  }
  const Index r = (m + 1) / 2;
  const Index cc = (n + 1) / 2;
  const double area = static_cast<double>(m) * static_cast<double>(n);
  auto child_budget = [&](Index mi, Index nj) {
    return 0.5 * budget * std::sqrt(static_cast<double>(mi) * static_cast<double>(nj) / area);
  };
  Matrix x(m, n);
  x.topLeftCorner(r, cc) = dense_rhs_solve(a.sub(0, r), bt.sub(0, cc), c.topLeftCorner(r, cc),
                                           child_budget(r, cc), opt, stats);
  x.topRightCorner(r, n - cc) = dense_rhs_solve(a.sub(0, r), bt.sub(cc, n - cc), c.topRightCorner(r, n - cc),
                                                child_budget(r, n - cc), opt, stats);
  x.bottomLeftCorner(m - r, cc) = dense_rhs_solve(a.sub(r, m - r), bt.sub(0, cc), c.bottomLeftCorner(m - r, cc),
                                                  child_budget(m - r, cc), opt, stats);
  x.bottomRightCorner(m - r, n - cc) =
      dense_rhs_solve(a.sub(r, m - r), bt.sub(cc, n - cc), c.bottomRightCorner(m - r, n - cc),
                      child_budget(m - r, n - cc), opt, stats);
  const FactoredLowRank corr = coupling_rhs(
      a, bt, r, cc, [&](const Matrix& w) { return Matrix(x.transpose() * w); },
      [&](const Matrix& w) { return Matrix(x * w); });
  const FactoredLowRank dx = low_rank_solve(a, bt, corr, 0.5 * budget, opt.max_iterations, stats);
  if (dx.rank() > 0) x.noalias() += dx.U * dx.V.transpose();
  return x;
}

inline HalrMatrix dac_solve(const OperatorView& a, const OperatorView& bt, const HalrMatrix& c, double budget,
                            const SylvesterOptions& opt, SolveStats& stats) {
  if (c.is_low_rank_leaf())
    return HalrMatrix::low_rank(low_rank_solve(a, bt, c.factors(), budget, opt.max_iterations, stats));
  if (c.is_dense_leaf()) return HalrMatrix::dense(dense_rhs_solve(a, bt, c.dense_block(), budget, opt, stats));
  const Index r = c.split_row();
  const Index cc = c.split_col();
  const Index m = c.rows();
  const Index n = c.cols();
  const double area = static_cast<double>(m) * static_cast<double>(n);
  const double third = budget / 3.0;
  std::array<HalrMatrix, 4> ch;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      const HalrMatrix& cij = c.child(i, j);
      const double frac = static_cast<double>(cij.rows()) * static_cast<double>(cij.cols()) / area;
      ch[static_cast<std::size_t>(2 * i + j)] =
          dac_solve(i ? a.sub(r, m - r) : a.sub(0, r), j ? bt.sub(cc, n - cc) : bt.sub(0, cc), cij,
                    third * std::sqrt(frac), opt, stats);
    }
  const HalrMatrix xt = HalrMatrix::split(std::move(ch));
  const FactoredLowRank corr = coupling_rhs(
      a, bt, r, cc, [&](const Matrix& w) { return transpose_matmat(xt, w); },
      [&](const Matrix& w) { return matmat(xt, w); });
  const FactoredLowRank dx = low_rank_solve(a, bt, corr, third, opt.max_iterations, stats);
  HalrMatrix x = add_exact(xt, HalrMatrix::low_rank(dx));
  // Leaf truncation: per-leaf Frobenius tolerance scaled by sqrt(area).
  const double op_norm = a.norm_bound() + bt.norm_bound();
  if (op_norm <= 0) return x;
  const double tol_total = third / op_norm;
  return x.map_leaves([&](const HalrMatrix& leaf) {
    if (leaf.is_dense_leaf()) return leaf;
    const double frac = static_cast<double>(leaf.rows()) * static_cast<double>(leaf.cols()) / area;
    return HalrMatrix::low_rank(
        compress_factors(leaf.factors(), tol_total * std::sqrt(frac), TruncationNorm::Frobenius));
  });
}

inline void finish(const SolveStats& local, SolveStats* stats) {
  if (stats) {
    *stats = local;
    return;
  }
  if (!local.converged) raise(ErrorCode::MaxIterations, "extended Krylov iteration limit reached");
}

}  // namespace detail

/// Extended Krylov solve for a factored right-hand side. When `stats` is
/// null a non-converged solve throws MaxIterations; otherwise the best
/// iterate is returned and stats->converged is cleared.
inline FactoredLowRank low_rank_rhs_sylv(const OperatorView& a, const OperatorView& b, const FactoredLowRank& c,
                                         const SylvesterOptions& opt = {}, SolveStats* stats = nullptr) {
  SolveStats local;
  FactoredLowRank x =
      detail::low_rank_solve(a, b.transpose(), c, opt.tol * c.frobenius_norm(), opt.max_iterations, local);
  detail::finish(local, stats);
  return x;
}

/// Dense right-hand side: split into four diagonal-block problems down to
/// n_min, then correct with one low-rank solve per level.
inline Matrix dense_rhs_sylv(const OperatorView& a, const OperatorView& b, const Matrix& c,
                             const SylvesterOptions& opt = {}, SolveStats* stats = nullptr) {
  require_dims(c.rows() == a.size() && c.cols() == b.size(), "dense_rhs_sylv: rhs shape");
  SolveStats local;
  Matrix x = detail::dense_rhs_solve(a, b.transpose(), c, opt.tol * c.norm(), opt, local);
  detail::finish(local, stats);
  return x;
}

/// Divide-and-conquer solve with an HALR right-hand side; the solution
/// inherits the cluster of C.
inline HalrMatrix dac_sylv(const OperatorView& a, const OperatorView& b, const HalrMatrix& c,
                           const SylvesterOptions& opt = {}, SolveStats* stats = nullptr) {
  require_dims(c.rows() == a.size() && c.cols() == b.size(), "dac_sylv: rhs shape");
  SolveStats local;
  HalrMatrix x = detail::dac_solve(a, b.transpose(), c, opt.tol * frobenius_norm(c), opt, local);
  detail::finish(local, stats);
  return x;
}

/// ||A X + X B - C||_F / ||C||_F for a dense X, using banded products.
inline double sylvester_residual(const OperatorView& a, const OperatorView& b, const Matrix& x, const Matrix& c) {
  const Matrix r = a.apply(x) + b.transpose().apply(x.transpose()).transpose() - c;
  const double nc = c.norm();
  return nc > 0 ? r.norm() / nc : r.norm();
}

}  // namespace halr
