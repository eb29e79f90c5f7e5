#pragma once

// Building HALR matrices from entry oracles.

#include "halr/arithmetic.hpp"

namespace halr {

struct ConstructionParams {
  Index maxrank = 50;
  double eps = 1e-8;  ///< absolute truncation tolerance
  Index n_min = 256;  ///< blocks with min(m, n) <= n_min are stored dense when not low-rank

  void validate() const {
    if (maxrank < 1) raise(ErrorCode::InvalidArgument, "maxrank must be >= 1");
    if (n_min < 2) raise(ErrorCode::InvalidArgument, "n_min must be >= 2");
    if (!(eps >= 0)) raise(ErrorCode::InvalidArgument, "eps must be >= 0");
  }
};

/// Turns a relative tolerance into an absolute one using a pilot ACA.
inline ConstructionParams relative_params(const EntryOracle& a, Index maxrank, double eps_rel, Index n_min = 256) {
  return {maxrank, eps_rel * estimate_norm(a), n_min};
}

/// A factorization is only worth storing if it is no larger than the block.
inline bool worth_low_rank(Index k, Index m, Index n) { return k * (m + n) <= m * n; }

namespace detail {

inline HalrMatrix approximate_node(const EntryOracle& a, const QuadTreeCluster& t, double tol) {
  const IndexBox& b = t.box();
  const EntryOracle sub = a.sub(b.row_lo - 1, b.col_lo - 1, b.rows(), b.cols());
  if (t.is_dense_leaf()) return HalrMatrix::dense(sub.dense());
  if (t.is_low_rank_leaf()) {
    AcaResult r = aca(sub, std::min(sub.rows(), sub.cols()), tol);
    if (!r.success) raise(ErrorCode::AcaFailure, "ACA did not reach the tolerance on a low-rank leaf");
    return HalrMatrix::low_rank(compress_factors(r.factors, 0.1 * tol));
  }
  return HalrMatrix::split({approximate_node(a, t.child(0), tol), approximate_node(a, t.child(1), tol),
                            approximate_node(a, t.child(2), tol), approximate_node(a, t.child(3), tol)});
}

inline bool all_dense(const std::array<HalrMatrix, 4>& ch) {
  return std::all_of(ch.begin(), ch.end(), [](const HalrMatrix& c) { return c.is_dense_leaf(); });
}

inline HalrMatrix merge_dense(const std::array<HalrMatrix, 4>& ch) {
  Matrix d(ch[0].rows() + ch[2].rows(), ch[0].cols() + ch[1].cols());
  d << ch[0].dense_block(), ch[1].dense_block(), ch[2].dense_block(), ch[3].dense_block();
  return HalrMatrix::dense(std::move(d));
}

/// Oracle over the entries of a factored block.
inline EntryOracle factor_oracle(const FactoredLowRank& f) {
  auto data = std::make_shared<const FactoredLowRank>(f);
  return EntryOracle::from_blocks(
      f.rows(), f.cols(),
      [data](Index r0, Index c0, Eigen::Ref<Matrix> out) {
        if (data->rank() == 0) {
          out.setZero();
          return;
        }
        out.noalias() = data->U.middleRows(r0, out.rows()) * data->V.middleRows(c0, out.cols()).transpose();
      },
      [data](Index i, Index j) { return data->rank() == 0 ? 0.0 : data->U.row(i).dot(data->V.row(j)); });
}

}  // namespace detail

/// Approximates `a` on a prescribed cluster. `eps` is relative to a pilot
/// estimate of ||A||_F; low-rank leaves use ACA without a rank cap.
inline HalrMatrix approximate_with_cluster(const EntryOracle& a, const QuadTreeCluster& t, double eps) {
  const IndexBox& b = t.box();
  require_dims(b.row_lo == 1 && b.col_lo == 1 && b.rows() == a.rows() && b.cols() == a.cols(),
               "cluster does not cover the oracle");
  return detail::approximate_node(a, t, eps * estimate_norm(a));
}

/// Greedy construction: accept a low-rank leaf when ACA converges within
/// maxrank and the factors are no larger than the block, store small
/// failures dense, otherwise split and recurse, merging
/// four dense children back into one dense leaf.
inline HalrMatrix halr_adaptive(const EntryOracle& a, const ConstructionParams& p) {
  p.validate();
  const Index m = a.rows();
  const Index n = a.cols();
  const AcaResult r = aca(a, p.maxrank + 1, p.eps);
  if (r.success) {
    FactoredLowRank f = compress_factors(r.factors, p.eps);
    if (f.rank() <= p.maxrank && worth_low_rank(f.rank(), m, n)) return HalrMatrix::low_rank(std::move(f));
  }
  if (std::min(m, n) <= p.n_min) return HalrMatrix::dense(a.dense());
  const auto boxes = midpoint_split(IndexBox::of_size(m, n));
  std::array<HalrMatrix, 4> ch;
  for (std::size_t k = 0; k < 4; ++k)
    ch[k] = halr_adaptive(a.sub(boxes[k].row_lo - 1, boxes[k].col_lo - 1, boxes[k].rows(), boxes[k].cols()), p);
  if (detail::all_dense(ch)) return detail::merge_dense(ch);
  return HalrMatrix::split(std::move(ch));
}

/// Re-adapts the cluster of an existing HALR matrix bottom-up: leaves are
/// recompressed or re-adapted from their own payloads, four dense siblings
/// merge, and four low-rank siblings merge when the joint factorization
/// recompresses to rank <= maxrank.
inline HalrMatrix refine_cluster(const HalrMatrix& a, const ConstructionParams& p) {
  p.validate();
  if (a.is_dense_leaf()) return halr_adaptive(EntryOracle::from_matrix(a.dense_block()), p);
  if (a.is_low_rank_leaf()) {
    FactoredLowRank f = compress_factors(a.factors(), p.eps);
    if (f.rank() <= p.maxrank && worth_low_rank(f.rank(), f.rows(), f.cols())) return HalrMatrix::low_rank(std::move(f));
    return halr_adaptive(detail::factor_oracle(f), p);
  }
  std::array<HalrMatrix, 4> ch;
  for (int k = 0; k < 4; ++k) ch[static_cast<std::size_t>(k)] = refine_cluster(a.child(k), p);
  if (detail::all_dense(ch)) return detail::merge_dense(ch);
  const bool all_low = std::all_of(ch.begin(), ch.end(), [](const HalrMatrix& c) { return c.is_low_rank_leaf(); });
  if (all_low) {
    const Index r = ch[0].rows();
    const Index c = ch[0].cols();
    const Index m = a.rows();
    const Index n = a.cols();
    Index k = 0;
    for (const auto& x : ch) k += x.factors().rank();
    if (k == 0) return HalrMatrix::zero(m, n);
    Matrix u = Matrix::Zero(m, k);
    Matrix v = Matrix::Zero(n, k);
    Index q = 0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) {
        const auto& f = ch[static_cast<std::size_t>(2 * i + j)].factors();
        u.block(i ? r : 0, q, f.rows(), f.rank()) = f.U;
        v.block(j ? c : 0, q, f.cols(), f.rank()) = f.V;
        q += f.rank();
      }
    FactoredLowRank merged = compress_factors(FactoredLowRank(std::move(u), std::move(v)), p.eps);
    if (merged.rank() <= p.maxrank && worth_low_rank(merged.rank(), m, n))
      return HalrMatrix::low_rank(std::move(merged));
  }
  return HalrMatrix::split(std::move(ch));
}

}  // namespace halr
