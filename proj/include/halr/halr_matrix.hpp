#pragma once

#include "halr/cluster.hpp"
#include "halr/lowrank.hpp"

#include <array>
#include <functional>
#include <memory>
#include <vector>

namespace halr {

/// A matrix realized over a quad-tree cluster: dense leaves hold their
/// entries, low-rank leaves hold a factorization, split nodes hold four
/// children ordered 11, 12, 21, 22. Immutable; copies share payloads.
class HalrMatrix {
 public:
  HalrMatrix() = default;

  static HalrMatrix dense(Matrix a) {
    auto n = std::make_shared<Node>();
    n->m = a.rows();
    n->n = a.cols();
    n->kind = NodeKind::Dense;
    n->dense = std::move(a);
    return HalrMatrix(std::move(n));
  }

  static HalrMatrix low_rank(FactoredLowRank f) {
    auto n = std::make_shared<Node>();
    n->m = f.rows();
    n->n = f.cols();
    n->kind = NodeKind::LowRank;
    n->factors = std::move(f);
    return HalrMatrix(std::move(n));
  }

  static HalrMatrix zero(Index m, Index n) { return low_rank(FactoredLowRank::zero(m, n)); }

  static HalrMatrix split(std::array<HalrMatrix, 4> ch) {
    for (const auto& c : ch)
      if (c.empty()) raise(ErrorCode::InvalidArgument, "empty child");
    require_dims(ch[0].rows() == ch[1].rows() && ch[2].rows() == ch[3].rows() && ch[0].cols() == ch[2].cols() &&
                     ch[1].cols() == ch[3].cols(),
                 "children do not form a 2x2 block matrix");
    auto n = std::make_shared<Node>();
    n->m = ch[0].rows() + ch[2].rows();
    n->n = ch[0].cols() + ch[1].cols();
    n->kind = NodeKind::Split;
    n->children.assign(std::make_move_iterator(ch.begin()), std::make_move_iterator(ch.end()));
    return HalrMatrix(std::move(n));
  }

  bool empty() const { return node_ == nullptr; }
  Index rows() const { return node_->m; }
  Index cols() const { return node_->n; }
  NodeKind kind() const { return node_->kind; }
  bool is_leaf() const { return node_->kind != NodeKind::Split; }
  bool is_dense_leaf() const { return node_->kind == NodeKind::Dense; }
  bool is_low_rank_leaf() const { return node_->kind == NodeKind::LowRank; }

  const Matrix& dense_block() const { return node_->dense; }
  const FactoredLowRank& factors() const { return node_->factors; }
  const HalrMatrix& child(int k) const { return node_->children[static_cast<std::size_t>(k)]; }
  const HalrMatrix& child(int i, int j) const { return child(2 * i + j); }

  /// Rows of the 11 block / columns of the 11 block.
  Index split_row() const { return child(0).rows(); }
  Index split_col() const { return child(0).cols(); }

  /// Quad-tree cluster with the root placed at (row_lo, col_lo), 1-based.
  QuadTreeCluster cluster(Index row_lo = 1, Index col_lo = 1) const {
    const IndexBox box{row_lo, row_lo + rows() - 1, col_lo, col_lo + cols() - 1};
    if (is_dense_leaf()) return QuadTreeCluster::dense(box);
    if (is_low_rank_leaf()) return QuadTreeCluster::low_rank(box);
    const Index r = split_row();
    const Index c = split_col();
    return QuadTreeCluster::split(box, {child(0).cluster(row_lo, col_lo), child(1).cluster(row_lo, col_lo + c),
                                        child(2).cluster(row_lo + r, col_lo), child(3).cluster(row_lo + r, col_lo + c)});
  }

  /// Maximum low-rank leaf rank (the HALR rank of this representation).
  Index rank() const {
    if (is_low_rank_leaf()) return factors().rank();
    if (is_dense_leaf()) return 0;
    Index k = 0;
    for (int c = 0; c < 4; ++c) k = std::max(k, child(c).rank());
    return k;
  }

  Index depth() const {
    if (is_leaf()) return 1;
    Index d = 0;
    for (int c = 0; c < 4; ++c) d = std::max(d, child(c).depth());
    return d + 1;
  }

  /// Stored scalars: m*n per dense leaf, k*(m+n) per low-rank leaf.
  Index storage_entries() const {
    if (is_dense_leaf()) return rows() * cols();
    if (is_low_rank_leaf()) return factors().rank() * (rows() + cols());
    Index s = 0;
    for (int c = 0; c < 4; ++c) s += child(c).storage_entries();
    return s;
  }

  /// Visit leaves with their 0-based offsets.
  void for_each_leaf(const std::function<void(const HalrMatrix&, Index, Index)>& fn, Index r0 = 0,
                     Index c0 = 0) const {
    if (is_leaf()) {
      fn(*this, r0, c0);
      return;
    }
    const Index r = split_row();
    const Index c = split_col();
    child(0).for_each_leaf(fn, r0, c0);
    child(1).for_each_leaf(fn, r0, c0 + c);
    child(2).for_each_leaf(fn, r0 + r, c0);
    child(3).for_each_leaf(fn, r0 + r, c0 + c);
  }

  /// Replace every leaf by fn(leaf); split structure is kept.
  HalrMatrix map_leaves(const std::function<HalrMatrix(const HalrMatrix&)>& fn) const {
    if (is_leaf()) return fn(*this);
    return split({child(0).map_leaves(fn), child(1).map_leaves(fn), child(2).map_leaves(fn), child(3).map_leaves(fn)});
  }

  /// Single entry, 0-based.
  double entry(Index i, Index j) const {
    if (is_dense_leaf()) return node_->dense(i, j);
    if (is_low_rank_leaf()) {
      const auto& f = node_->factors;
      return f.rank() == 0 ? 0.0 : f.U.row(i).dot(f.V.row(j));
    }
    const Index r = split_row();
    const Index c = split_col();
    return child(i < r ? 0 : 1, j < c ? 0 : 1).entry(i < r ? i : i - r, j < c ? j : j - c);
  }

  bool shares_payload_with(const HalrMatrix& other) const { return node_ == other.node_; }

 private:
  struct Node {
    Index m = 0;
    Index n = 0;
    NodeKind kind = NodeKind::LowRank;
    Matrix dense;
    FactoredLowRank factors;
    std::vector<HalrMatrix> children;  // empty for leaves
  };

  explicit HalrMatrix(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  std::shared_ptr<const Node> node_;
};

}  // namespace halr
