#pragma once

// Banded 1D operators with an implicit HODLR view. The Sylvester stack only
// needs three things from an operator restricted to a principal block:
// products, exact low-rank factors of off-diagonal blocks, and shifted
// solves. None of them materializes a hierarchical matrix.

#include "halr/arithmetic.hpp"

#include <bit>
#include <future>
#include <limits>
#include <list>
#include <mutex>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace halr {

/// Banded LU factorization with partial pivoting of an n x n matrix with
/// lower bandwidth bl and upper bandwidth bu.
class BandLU {
 public:
  /// `band(i, d + bl)` holds entry (i, i + d) for d in [-bl, bu].
  BandLU(const Matrix& band, Index bl, Index bu) : n_(band.rows()), bl_(bl), bu_(bu), w_(2 * bl + bu + 1) {
    ab_ = Matrix::Zero(n_, w_);
    ab_.leftCols(bl + bu + 1) = band;
    piv_.resize(static_cast<std::size_t>(n_));
    const double scale = std::max(band.cwiseAbs().maxCoeff(), std::numeric_limits<double>::min());
    for (Index k = 0; k < n_; ++k) {
      const Index last = std::min(n_ - 1, k + bl_);
      Index p = k;
      double best = std::abs(at(k, k));
      for (Index i = k + 1; i <= last; ++i) {
        const double v = std::abs(at(i, k));
        if (v > best) {
          best = v;
          p = i;
        }
      }
      if (best <= 1e-13 * scale) raise(ErrorCode::SingularShift, "shifted operator is numerically singular");
      piv_[static_cast<std::size_t>(k)] = p;
      const Index jend = std::min(n_ - 1, k + bl_ + bu_);
      if (p != k)
        for (Index j = k; j <= jend; ++j) std::swap(at(k, j), at(p, j));
      const double d = at(k, k);
      for (Index i = k + 1; i <= last; ++i) {
        const double l = at(i, k) / d;
        at(i, k) = l;
        if (l == 0.0) continue;
        for (Index j = k + 1; j <= jend; ++j) at(i, j) -= l * at(k, j);
      }
    }
  }

  Index size() const { return n_; }

  /// Overwrites x with the solution of (LU) x = b.
  void solve_in_place(Eigen::Ref<Matrix> x) const {
    require_dims(x.rows() == n_, "BandLU: rhs rows != n");
    for (Index k = 0; k < n_; ++k) {
      const Index p = piv_[static_cast<std::size_t>(k)];
      if (p != k) x.row(k).swap(x.row(p));
      const Index last = std::min(n_ - 1, k + bl_);
      for (Index i = k + 1; i <= last; ++i) {
        const double l = at(i, k);
        if (l != 0.0) x.row(i) -= l * x.row(k);
      }
    }
    for (Index k = n_ - 1; k >= 0; --k) {
      const Index jend = std::min(n_ - 1, k + bl_ + bu_);
      for (Index j = k + 1; j <= jend; ++j) {
        const double u = at(k, j);
        if (u != 0.0) x.row(k) -= u * x.row(j);
      }
      x.row(k) /= at(k, k);
    }
  }

 private:
  double& at(Index i, Index j) { return ab_(i, j - i + bl_); }
  double at(Index i, Index j) const { return ab_(i, j - i + bl_); }

  Index n_;
  Index bl_;
  Index bu_;
  Index w_;
  Matrix ab_;
  std::vector<Index> piv_;
};

/// Symmetric eigendecomposition of a principal block, cached for dense
/// Sylvester base cases.
struct SymEig {
  Vector values;
  Matrix vectors;
};

/// An n x n banded matrix. Immutable value type; copies share the band data
/// and the factorization caches.
class Banded1DOperator {
 public:
  static constexpr std::size_t kCacheCapacity = 64;

  Banded1DOperator() = default;

  /// `band(i, d + bl)` is entry (i, i + d); entries outside the matrix are ignored.
  Banded1DOperator(Matrix band, Index bl, Index bu) : data_(std::make_shared<Data>()) {
    require_dims(band.cols() == bl + bu + 1 && bl >= 0 && bu >= 0, "band array width != bl + bu + 1");
    const Index n = band.rows();
    for (Index i = 0; i < n; ++i)
      for (Index d = -bl; d <= bu; ++d)
        if (i + d < 0 || i + d >= n) band(i, d + bl) = 0.0;
    data_->band = std::move(band);
    data_->bl = bl;
    data_->bu = bu;
    data_->symmetric = check_symmetric();
  }

  /// Tridiagonal (1, -2, 1) / h^2 with homogeneous Dirichlet conditions.
  static Banded1DOperator laplacian_dirichlet(Index n, double h) {
    if (n < 2 || !(h > 0)) raise(ErrorCode::InvalidArgument, "laplacian_dirichlet needs n >= 2 and h > 0");
    Matrix b(n, 3);
    b.col(0).setConstant(1.0 / (h * h));
    b.col(1).setConstant(-2.0 / (h * h));
    b.col(2).setConstant(1.0 / (h * h));
    return {std::move(b), 1, 1};
  }

  /// Zero-flux Laplacian from mirrored ghost points: boundary rows (-1, 1) / h^2.
  static Banded1DOperator laplacian_neumann(Index n, double h) {
    Banded1DOperator a = laplacian_dirichlet(n, h);
    Matrix b = a.data_->band;
    b(0, 1) = -1.0 / (h * h);
    b(n - 1, 1) = -1.0 / (h * h);
    return {std::move(b), 1, 1};
  }

  /// Upper bidiagonal (-1, 1) / h.
  static Banded1DOperator forward_difference(Index n, double h) {
    if (n < 2 || !(h > 0)) raise(ErrorCode::InvalidArgument, "forward_difference needs n >= 2 and h > 0");
    Matrix b(n, 2);
    b.col(0).setConstant(-1.0 / h);
    b.col(1).setConstant(1.0 / h);
    return {std::move(b), 0, 1};
  }

  /// alpha * I + beta * L.
  static Banded1DOperator affine(double alpha, double beta, const Banded1DOperator& l) {
    Matrix b = beta * l.data_->band;
    b.col(l.lower_bandwidth()).array() += alpha;
    return {std::move(b), l.lower_bandwidth(), l.upper_bandwidth()};
  }

  Banded1DOperator transpose() const {
    if (symmetric()) return *this;
    const Index n = size();
    const Index bl = lower_bandwidth();
    const Index bu = upper_bandwidth();
    Matrix t = Matrix::Zero(n, bl + bu + 1);
    for (Index i = 0; i < n; ++i)
      for (Index d = -bl; d <= bu; ++d)
        if (i + d >= 0 && i + d < n) t(i + d, -d + bu) = data_->band(i, d + bl);
    return {std::move(t), bu, bl};
  }

  bool empty() const { return data_ == nullptr; }
  Index size() const { return data_->band.rows(); }
  Index lower_bandwidth() const { return data_->bl; }
  Index upper_bandwidth() const { return data_->bu; }
  Index bandwidth() const { return std::max(data_->bl, data_->bu); }
  bool symmetric() const { return data_->symmetric; }

  double operator()(Index i, Index j) const {
    const Index d = j - i;
    if (d < -data_->bl || d > data_->bu) return 0.0;
    return data_->band(i, d + data_->bl);
  }

  const Matrix& band() const { return data_->band; }

  Matrix dense() const { return dense_block(0, 0, size(), size()); }

  Matrix dense_block(Index r0, Index c0, Index m, Index n) const {
    Matrix out = Matrix::Zero(m, n);
    for (Index i = 0; i < m; ++i) {
      const Index gi = r0 + i;
      const Index jlo = std::max(c0, gi - data_->bl);
      const Index jhi = std::min(c0 + n - 1, gi + data_->bu);
      for (Index gj = jlo; gj <= jhi; ++gj) out(i, gj - c0) = (*this)(gi, gj);
    }
    return out;
  }

  /// y += A(off:off+m, off:off+m) x for the principal block of size m.
  void apply_block_add(Index off, const Eigen::Ref<const Matrix>& x, Eigen::Ref<Matrix> y) const {
    const Index m = x.rows();
    for (Index d = -data_->bl; d <= data_->bu; ++d) {
      const Index i0 = std::max<Index>(0, -d);
      const Index i1 = std::min(m, m - d);
      if (i1 <= i0) continue;
      const auto coef = data_->band.col(d + data_->bl).segment(off + i0, i1 - i0);
      y.middleRows(i0, i1 - i0).noalias() += coef.asDiagonal() * x.middleRows(i0 + d, i1 - i0);
    }
  }

  /// Max absolute row sum of a principal block: a bound on its 2-norm for
  /// symmetric operators and a cheap scale otherwise.
  double row_sum_bound(Index off, Index m) const {
    double best = 0.0;
    for (Index i = off; i < off + m; ++i) {
      double s = 0.0;
      for (Index d = -data_->bl; d <= data_->bu; ++d)
        if (i + d >= off && i + d < off + m) s += std::abs(data_->band(i, d + data_->bl));
      best = std::max(best, s);
    }
    return best;
  }

  /// Factorization of sigma*I + A on a principal block, shared through an
  /// LRU cache keyed by (offset, size, bit pattern of sigma). Concurrent
  /// requests for the same key wait on a single factorization.
  std::shared_ptr<const BandLU> shifted_lu(Index off, Index m, double sigma) const {
    const Key key{off, m, std::bit_cast<std::uint64_t>(sigma)};
    auto& cache = *data_->lu_cache;
    std::promise<std::shared_ptr<const BandLU>> promise;
    std::shared_future<std::shared_ptr<const BandLU>> fut;
    bool owner = false;
    {
      std::lock_guard<std::mutex> lock(cache.mutex);
      auto it = cache.map.find(key);
      if (it != cache.map.end()) {
        cache.order.splice(cache.order.begin(), cache.order, it->second.pos);
        fut = it->second.value;
      } else {
        owner = true;
        fut = promise.get_future().share();
        cache.order.push_front(key);
        cache.map.emplace(key, Entry{fut, cache.order.begin()});
        while (cache.map.size() > kCacheCapacity) {
          cache.map.erase(cache.order.back());
          cache.order.pop_back();
        }
      }
    }
    if (owner) {
      try {
        Matrix b = data_->band.middleRows(off, m);
        for (Index i = 0; i < m; ++i)
          for (Index d = -data_->bl; d <= data_->bu; ++d)
            if (i + d < 0 || i + d >= m) b(i, d + data_->bl) = 0.0;
        b.col(data_->bl).array() += sigma;
        promise.set_value(std::make_shared<const BandLU>(b, data_->bl, data_->bu));
      } catch (...) {
        promise.set_exception(std::current_exception());
        std::lock_guard<std::mutex> lock(cache.mutex);
        auto it = cache.map.find(key);
        if (it != cache.map.end()) {
          cache.order.erase(it->second.pos);
          cache.map.erase(it);
        }
      }
    }
    return fut.get();
  }

  std::size_t cached_factorizations() const {
    std::lock_guard<std::mutex> lock(data_->lu_cache->mutex);
    return data_->lu_cache->map.size();
  }

  /// Eigendecomposition of a principal block of a symmetric operator.
  std::shared_ptr<const SymEig> block_eig(Index off, Index m) const {
    auto& cache = *data_->eig_cache;
    const std::pair<Index, Index> key{off, m};
    {
      std::lock_guard<std::mutex> lock(cache.mutex);
      auto it = cache.map.find(key);
      if (it != cache.map.end()) return it->second;
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(dense_block(off, off, m, m));
    auto e = std::make_shared<const SymEig>(SymEig{es.eigenvalues(), es.eigenvectors()});
    std::lock_guard<std::mutex> lock(cache.mutex);
    if (cache.map.size() >= kCacheCapacity) cache.map.clear();
    return cache.map.emplace(key, e).first->second;
  }

 private:
  struct Key {
    Index off;
    Index m;
    std::uint64_t sigma;
    bool operator==(const Key&) const = default;
  };
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      std::size_t h = std::hash<Index>{}(k.off);
      h = h * 1000003u ^ std::hash<Index>{}(k.m);
      return h * 1000003u ^ std::hash<std::uint64_t>{}(k.sigma);
    }
  };
  struct Entry {
    std::shared_future<std::shared_ptr<const BandLU>> value;
    std::list<Key>::iterator pos;
  };
  struct LuCache {
    std::mutex mutex;
    std::list<Key> order;  // most recent first
    std::unordered_map<Key, Entry, KeyHash> map;
  };
  struct PairHash {
    std::size_t operator()(const std::pair<Index, Index>& p) const {
      return std::hash<Index>{}(p.first) * 1000003u ^ std::hash<Index>{}(p.second);
    }
  };
  struct EigCache {
    std::mutex mutex;
    std::unordered_map<std::pair<Index, Index>, std::shared_ptr<const SymEig>, PairHash> map;
  };
  struct Data {
    Matrix band;
    Index bl = 0;
    Index bu = 0;
    bool symmetric = false;
    std::unique_ptr<LuCache> lu_cache = std::make_unique<LuCache>();
    std::unique_ptr<EigCache> eig_cache = std::make_unique<EigCache>();
  };

  bool check_symmetric() const {
    if (data_->bl != data_->bu) return false;
    const Index n = size();
    for (Index i = 0; i < n; ++i)
      for (Index d = 1; d <= data_->bu && i + d < n; ++d)
        if ((*this)(i, i + d) != (*this)(i + d, i)) return false;
    return true;
  }

  std::shared_ptr<Data> data_;
};

/// Principal block A(off:off+m, off:off+m) of a banded operator.
class OperatorView {
 public:
  OperatorView() = default;
  explicit OperatorView(Banded1DOperator op) : op_(std::move(op)), off_(0), m_(op_.size()) {}
  OperatorView(Banded1DOperator op, Index off, Index m) : op_(std::move(op)), off_(off), m_(m) {
    require_dims(off >= 0 && m > 0 && off + m <= op_.size(), "operator view out of range");
  }

  const Banded1DOperator& op() const { return op_; }
  Index offset() const { return off_; }
  Index size() const { return m_; }
  bool symmetric() const { return op_.symmetric(); }

  /// Principal sub-block [r0, r0 + m) of this view.
  OperatorView sub(Index r0, Index m) const { return {op_, off_ + r0, m}; }

  OperatorView transpose() const { return {op_.transpose(), off_, m_}; }

  Matrix dense() const { return op_.dense_block(off_, off_, m_, m_); }

  Matrix apply(const Matrix& x) const {
    require_dims(x.rows() == m_, "operator apply: rows != size");
    Matrix y = Matrix::Zero(m_, x.cols());
    op_.apply_block_add(off_, x, y);
    return y;
  }

  double norm_bound() const { return op_.row_sum_bound(off_, m_); }

  /// Solves (sigma I + A) X = rhs.
  Matrix shifted_solve(double sigma, const Matrix& rhs) const {
    require_dims(rhs.rows() == m_, "shifted_solve: rhs rows != size");
    Matrix x = rhs;
    op_.shifted_lu(off_, m_, sigma)->solve_in_place(x);
    return x;
  }

  Vector shifted_solve(double sigma, const Vector& rhs) const {
    Matrix x = rhs;
    return shifted_solve(sigma, x).col(0);
  }

  /// Exact factors of the block at (r0, c0) of size m x n (view-relative,
  /// 0-based) that must not meet the diagonal. Rank <= bandwidth.
  FactoredLowRank offdiag_factors(Index r0, Index c0, Index m, Index n) const {
    require_dims(r0 >= 0 && c0 >= 0 && m > 0 && n > 0 && r0 + m <= m_ && c0 + n <= m_, "offdiag box out of range");
    if (r0 < c0 + n && c0 < r0 + m) raise(ErrorCode::BoxTouchesDiagonal, "box intersects the diagonal");
    const Index gr = off_ + r0;
    const Index gc = off_ + c0;
    std::vector<Index> rows;
    std::vector<Index> cols;
    for (Index i = 0; i < m; ++i) {
      const Index lo = std::max(gc, gr + i - op_.lower_bandwidth());
      const Index hi = std::min(gc + n - 1, gr + i + op_.upper_bandwidth());
      bool nz = false;
      for (Index j = lo; j <= hi && !nz; ++j) nz = op_(gr + i, j) != 0.0;
      if (nz) rows.push_back(i);
    }
    for (Index j = 0; j < n; ++j) {
      const Index lo = std::max(gr, gc + j - op_.upper_bandwidth());
      const Index hi = std::min(gr + m - 1, gc + j + op_.lower_bandwidth());
      bool nz = false;
      for (Index i = lo; i <= hi && !nz; ++i) nz = op_(i, gc + j) != 0.0;
      if (nz) cols.push_back(j);
    }
    if (rows.size() <= cols.size()) {
      const Index k = static_cast<Index>(rows.size());
      Matrix u = Matrix::Zero(m, k);
      Matrix v(n, k);
      for (Index q = 0; q < k; ++q) {
        const Index i = rows[static_cast<std::size_t>(q)];
        u(i, q) = 1.0;
        v.col(q) = op_.dense_block(gr + i, gc, 1, n).transpose();
      }
      return {std::move(u), std::move(v)};
    }
    const Index k = static_cast<Index>(cols.size());
    Matrix u(m, k);
    Matrix v = Matrix::Zero(n, k);
    for (Index q = 0; q < k; ++q) {
      const Index j = cols[static_cast<std::size_t>(q)];
      v(j, q) = 1.0;
      u.col(q) = op_.dense_block(gr, gc + j, m, 1);
    }
    return {std::move(u), std::move(v)};
  }

  /// Factors of [0 A12; A21 0] for a split of this view at `r`.
  FactoredLowRank coupling_factors(Index r) const {
    const Index m2 = m_ - r;
    const FactoredLowRank a12 = offdiag_factors(0, r, r, m2);
    const FactoredLowRank a21 = offdiag_factors(r, 0, m2, r);
    const Index k1 = a12.rank();
    const Index k2 = a21.rank();
    Matrix u = Matrix::Zero(m_, k1 + k2);
    Matrix v = Matrix::Zero(m_, k1 + k2);
    u.block(0, 0, r, k1) = a12.U;
    v.block(r, 0, m2, k1) = a12.V;
    u.block(r, k1, m2, k2) = a21.U;
    v.block(0, k1, r, k2) = a21.V;
    return {std::move(u), std::move(v)};
  }

 private:
  Banded1DOperator op_;
  Index off_ = 0;
  Index m_ = 0;
};

/// Implicit HODLR partition of a banded operator: diagonal blocks are
/// halved at ceil(m/2) down to depth p or size <= n_min.
struct HodlrView {
  OperatorView view;
  Index depth = 1;
  Index n_min = 256;

  static HodlrView of(const Banded1DOperator& op, Index n_min) {
    Index p = 1;
    for (Index m = op.size(); m > n_min; m = (m + 1) / 2) ++p;
    return {OperatorView(op), p, n_min};
  }

  QuadTreeCluster cluster() const { return hodlr_cluster(IndexBox::of_size(view.size(), view.size()), depth); }

  /// Densified view: dense diagonal blocks plus off-diagonal factor products.
  Matrix dense() const { return densify(view, depth); }

  /// Largest off-diagonal factor rank.
  Index rank() const { return rank_of(view, depth); }

 private:
  static Matrix densify(const OperatorView& v, Index p) {
    const Index m = v.size();
    if (p <= 1 || m < 2) return v.dense();
    const Index r = (m + 1) / 2;
    Matrix out(m, m);
    out.topLeftCorner(r, r) = densify(v.sub(0, r), p - 1);
    out.bottomRightCorner(m - r, m - r) = densify(v.sub(r, m - r), p - 1);
    out.topRightCorner(r, m - r) = v.offdiag_factors(0, r, r, m - r).to_dense();
    out.bottomLeftCorner(m - r, r) = v.offdiag_factors(r, 0, m - r, r).to_dense();
    return out;
  }

  static Index rank_of(const OperatorView& v, Index p) {
    const Index m = v.size();
    if (p <= 1 || m < 2) return 0;
    const Index r = (m + 1) / 2;
    return std::max({v.offdiag_factors(0, r, r, m - r).rank(), v.offdiag_factors(r, 0, m - r, r).rank(),
                     rank_of(v.sub(0, r), p - 1), rank_of(v.sub(r, m - r), p - 1)});
  }
};

/// A X for a banded operator view A and an HALR X. The result keeps the
/// cluster of X; each low-rank leaf gains at most the coupling rank per level.
inline HalrMatrix left_multiply(const OperatorView& a, const HalrMatrix& x) {
  require_dims(a.size() == x.rows(), "left_multiply: operator size != rows");
  if (x.is_dense_leaf()) return HalrMatrix::dense(a.apply(x.dense_block()));
  if (x.is_low_rank_leaf()) {
    const auto& f = x.factors();
    if (f.rank() == 0) return x;
    return HalrMatrix::low_rank(FactoredLowRank(a.apply(f.U), f.V));
  }
  const Index r = x.split_row();
  const Index m2 = x.rows() - r;
  const OperatorView a11 = a.sub(0, r);
  const OperatorView a22 = a.sub(r, m2);
  const FactoredLowRank a12 = a.offdiag_factors(0, r, r, m2);
  const FactoredLowRank a21 = a.offdiag_factors(r, 0, m2, r);
  auto coupled = [](const FactoredLowRank& off, const HalrMatrix& xb) {
    if (off.rank() == 0) return HalrMatrix::zero(off.rows(), xb.cols());
    return HalrMatrix::low_rank(FactoredLowRank(off.U, transpose_matmat(xb, off.V)));
  };
  std::array<HalrMatrix, 4> ch;
  for (int j = 0; j < 2; ++j) {
    ch[static_cast<std::size_t>(j)] = add_exact(left_multiply(a11, x.child(0, j)), coupled(a12, x.child(1, j)));
    ch[static_cast<std::size_t>(2 + j)] = add_exact(left_multiply(a22, x.child(1, j)), coupled(a21, x.child(0, j)));
  }
  return HalrMatrix::split(std::move(ch));
}

/// X B^T for a banded operator view B.
inline HalrMatrix right_multiply_transpose(const HalrMatrix& x, const OperatorView& b) {
  return transpose(left_multiply(b, transpose(x)));
}

/// X B, via (B^T X^T)^T.
inline HalrMatrix right_multiply(const HalrMatrix& x, const OperatorView& b) {
  return right_multiply_transpose(x, b.transpose());
}

}  // namespace halr
