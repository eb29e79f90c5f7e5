#pragma once

// Quad-tree clusters: recursive 2x2 partitions of an index box whose leaves
// are labeled dense or low-rank, together with the tree algebra (transpose,
// compatibility, ordering, intersection) that drives the binary operations
// on HALR matrices.

#include "halr/common.hpp"

#include <array>
#include <functional>
#include <memory>
#include <ostream>
#include <vector>

namespace halr {

/// Row/column index box with 1-based inclusive bounds.
struct IndexBox {
  Index row_lo = 1;
  Index row_hi = 1;
  Index col_lo = 1;
  Index col_hi = 1;

  Index rows() const { return row_hi - row_lo + 1; }
  Index cols() const { return col_hi - col_lo + 1; }
  bool valid() const { return 0 < row_lo && row_lo <= row_hi && 0 < col_lo && col_lo <= col_hi; }

  IndexBox transposed() const { return {col_lo, col_hi, row_lo, row_hi}; }

  static IndexBox of_size(Index m, Index n) { return {1, m, 1, n}; }

  friend bool operator==(const IndexBox&, const IndexBox&) = default;
};

inline std::ostream& operator<<(std::ostream& os, const IndexBox& b) {
  return os << "[" << b.row_lo << "," << b.row_hi << "]x[" << b.col_lo << "," << b.col_hi << "]";
}

/// The four children of a box split at m1 = ceil(m/2), n1 = ceil(n/2),
/// ordered 11, 12, 21, 22. Requires at least two rows and two columns.
inline std::array<IndexBox, 4> midpoint_split(const IndexBox& b) {
  if (b.rows() < 2 || b.cols() < 2) raise(ErrorCode::InvalidArgument, "cannot split a box with a unit dimension");
  const Index rm = b.row_lo + (b.rows() + 1) / 2 - 1;
  const Index cm = b.col_lo + (b.cols() + 1) / 2 - 1;
  return {IndexBox{b.row_lo, rm, b.col_lo, cm}, IndexBox{b.row_lo, rm, cm + 1, b.col_hi},
          IndexBox{rm + 1, b.row_hi, b.col_lo, cm}, IndexBox{rm + 1, b.row_hi, cm + 1, b.col_hi}};
}

enum class NodeKind { Dense, LowRank, Split };

inline const char* to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Dense: return "dense";
    case NodeKind::LowRank: return "lowrank";
    case NodeKind::Split: return "split";
  }
  return "?";
}

/// Immutable quad-tree cluster. Copies share structure.
class QuadTreeCluster {
 public:
  /// Empty handle; only useful as a placeholder before assignment.
  QuadTreeCluster() = default;

  static QuadTreeCluster dense(const IndexBox& box) { return QuadTreeCluster(make_leaf(box, NodeKind::Dense)); }
  static QuadTreeCluster low_rank(const IndexBox& box) { return QuadTreeCluster(make_leaf(box, NodeKind::LowRank)); }

  /// Split node; children ordered 11, 12, 21, 22 and must tile `box` as
  /// two ordered row intervals times two ordered column intervals.
  static QuadTreeCluster split(const IndexBox& box, std::array<QuadTreeCluster, 4> children) {
    if (!box.valid()) raise(ErrorCode::InvalidArgument, "invalid box");
    for (const auto& c : children)
      if (c.empty()) raise(ErrorCode::InvalidArgument, "empty child");
    const IndexBox& b11 = children[0].box();
    const IndexBox& b12 = children[1].box();
    const IndexBox& b21 = children[2].box();
    const IndexBox& b22 = children[3].box();
    const bool ok = b11.row_lo == box.row_lo && b11.col_lo == box.col_lo && b22.row_hi == box.row_hi &&
                    b22.col_hi == box.col_hi && b12.row_lo == b11.row_lo && b12.row_hi == b11.row_hi &&
                    b21.row_lo == b22.row_lo && b21.row_hi == b22.row_hi && b21.col_lo == b11.col_lo &&
                    b21.col_hi == b11.col_hi && b12.col_lo == b22.col_lo && b12.col_hi == b22.col_hi &&
                    b11.row_hi + 1 == b21.row_lo && b11.col_hi + 1 == b12.col_lo;
    if (!ok) raise(ErrorCode::InvalidArgument, "children do not partition the parent box");
    auto node = std::make_shared<Node>();
    node->box = box;
    node->kind = NodeKind::Split;
    node->children.assign(std::make_move_iterator(children.begin()), std::make_move_iterator(children.end()));
    return QuadTreeCluster(std::move(node));
  }

  /// Split at the midpoint with four leaves of the given kinds.
  static QuadTreeCluster split_leaves(const IndexBox& box, std::array<NodeKind, 4> kinds) {
    const auto boxes = midpoint_split(box);
    std::array<QuadTreeCluster, 4> ch;
    for (int i = 0; i < 4; ++i)
      ch[i] = kinds[i] == NodeKind::Dense ? dense(boxes[i]) : low_rank(boxes[i]);
    return split(box, std::move(ch));
  }

  bool empty() const { return node_ == nullptr; }
  const IndexBox& box() const { return node_->box; }
  Index rows() const { return node_->box.rows(); }
  Index cols() const { return node_->box.cols(); }
  NodeKind kind() const { return node_->kind; }
  bool is_leaf() const { return node_->kind != NodeKind::Split; }
  bool is_dense_leaf() const { return node_->kind == NodeKind::Dense; }
  bool is_low_rank_leaf() const { return node_->kind == NodeKind::LowRank; }

  /// Child k in {0,1,2,3} = {11,12,21,22}.
  const QuadTreeCluster& child(int k) const { return node_->children[static_cast<std::size_t>(k)]; }
  const QuadTreeCluster& child(int i, int j) const { return child(2 * i + j); }
  const std::vector<QuadTreeCluster>& children() const { return node_->children; }

  /// Single node has depth 1.
  Index depth() const {
    if (is_leaf()) return 1;
    Index d = 0;
    for (const auto& c : children()) d = std::max(d, c.depth());
    return d + 1;
  }

  Index leaf_count() const {
    if (is_leaf()) return 1;
    Index n = 0;
    for (const auto& c : children()) n += c.leaf_count();
    return n;
  }

  Index node_count() const {
    if (is_leaf()) return 1;
    Index n = 1;
    for (const auto& c : children()) n += c.node_count();
    return n;
  }

  void for_each_leaf(const std::function<void(const QuadTreeCluster&)>& fn) const {
    if (is_leaf()) {
      fn(*this);
      return;
    }
    for (const auto& c : children()) c.for_each_leaf(fn);
  }

  /// Same tree translated so that the root starts at (row_lo, col_lo).
  QuadTreeCluster rebased(Index row_lo, Index col_lo) const {
    const Index dr = row_lo - box().row_lo;
    const Index dc = col_lo - box().col_lo;
    if (dr == 0 && dc == 0) return *this;
    return translate(dr, dc);
  }

  /// Node-by-node equality of boxes and labels.
  friend bool operator==(const QuadTreeCluster& a, const QuadTreeCluster& b) {
    if (a.node_ == b.node_) return true;
    if (a.empty() || b.empty()) return false;
    if (a.kind() != b.kind() || !(a.box() == b.box())) return false;
    if (a.is_leaf()) return true;
    for (int k = 0; k < 4; ++k)
      if (!(a.child(k) == b.child(k))) return false;
    return true;
  }

 private:
  struct Node {
    IndexBox box;
    NodeKind kind = NodeKind::LowRank;
    std::vector<QuadTreeCluster> children;  // empty for leaves, else 11, 12, 21, 22
  };

  explicit QuadTreeCluster(std::shared_ptr<const Node> n) : node_(std::move(n)) {}

  static std::shared_ptr<const Node> make_leaf(const IndexBox& box, NodeKind kind) {
    if (!box.valid()) raise(ErrorCode::InvalidArgument, "invalid box");
    auto node = std::make_shared<Node>();
    node->box = box;
    node->kind = kind;
    return node;
  }

  QuadTreeCluster translate(Index dr, Index dc) const {
    const IndexBox b{box().row_lo + dr, box().row_hi + dr, box().col_lo + dc, box().col_hi + dc};
    if (is_dense_leaf()) return dense(b);
    if (is_low_rank_leaf()) return low_rank(b);
    std::array<QuadTreeCluster, 4> ch;
    for (int k = 0; k < 4; ++k) ch[k] = child(k).translate(dr, dc);
    return split(b, std::move(ch));
  }

  std::shared_ptr<const Node> node_;
};

/// Swap row/column ranges everywhere and exchange the 12/21 subtrees.
inline QuadTreeCluster transpose(const QuadTreeCluster& t) {
  const IndexBox b = t.box().transposed();
  if (t.is_dense_leaf()) return QuadTreeCluster::dense(b);
  if (t.is_low_rank_leaf()) return QuadTreeCluster::low_rank(b);
  return QuadTreeCluster::split(b, {transpose(t.child(0)), transpose(t.child(2)), transpose(t.child(1)),
                                    transpose(t.child(3))});
}

inline bool is_row_compatible(const QuadTreeCluster& a, const QuadTreeCluster& b) {
  if (a.is_leaf() || b.is_leaf()) return a.rows() == b.rows();
  for (int k = 0; k < 4; ++k)
    if (!is_row_compatible(a.child(k), b.child(k))) return false;
  return true;
}

inline bool is_col_compatible(const QuadTreeCluster& a, const QuadTreeCluster& b) {
  if (a.is_leaf() || b.is_leaf()) return a.cols() == b.cols();
  for (int k = 0; k < 4; ++k)
    if (!is_col_compatible(a.child(k), b.child(k))) return false;
  return true;
}

inline bool is_compatible(const QuadTreeCluster& a, const QuadTreeCluster& b) {
  return is_row_compatible(a, b) && is_col_compatible(a, b);
}

namespace detail {

inline bool leq_unchecked(const QuadTreeCluster& a, const QuadTreeCluster& b) {
  if (a.is_low_rank_leaf()) return true;
  if (b.is_dense_leaf()) return true;
  if (a.is_leaf() || b.is_leaf()) return false;
  for (int k = 0; k < 4; ++k)
    if (!leq_unchecked(a.child(k), b.child(k))) return false;
  return true;
}

inline QuadTreeCluster intersect_unchecked(const QuadTreeCluster& a, const QuadTreeCluster& b) {
  if (a.is_low_rank_leaf()) return b.rebased(a.box().row_lo, a.box().col_lo);
  if (b.is_low_rank_leaf()) return a;
  if (a.is_dense_leaf() || b.is_dense_leaf()) return QuadTreeCluster::dense(a.box());
  std::array<QuadTreeCluster, 4> ch;
  for (int k = 0; k < 4; ++k) ch[k] = intersect_unchecked(a.child(k), b.child(k));
  return QuadTreeCluster::split(a.box(), std::move(ch));
}

}  // namespace detail

/// a <= b: every (T_a,k)-HALR matrix is also a (T_b,k)-HALR matrix.
inline bool is_leq(const QuadTreeCluster& a, const QuadTreeCluster& b) {
  if (!is_compatible(a, b)) raise(ErrorCode::IncompatibleClusters, "is_leq on incompatible clusters");
  return detail::leq_unchecked(a, b);
}

/// Coarsest cluster weaker than both operands; the cluster of a sum.
inline QuadTreeCluster intersect(const QuadTreeCluster& a, const QuadTreeCluster& b) {
  if (!is_compatible(a, b)) raise(ErrorCode::IncompatibleClusters, "intersect on incompatible clusters");
  return detail::intersect_unchecked(a, b);
}

/// Collapse every split whose four children are dense leaves, bottom-up.
inline QuadTreeCluster normalize(const QuadTreeCluster& t) {
  if (t.is_leaf()) return t;
  std::array<QuadTreeCluster, 4> ch;
  bool all_dense = true;
  for (int k = 0; k < 4; ++k) {
    ch[k] = normalize(t.child(k));
    all_dense = all_dense && ch[k].is_dense_leaf();
  }
  if (all_dense) return QuadTreeCluster::dense(t.box());
  return QuadTreeCluster::split(t.box(), std::move(ch));
}

/// HODLR cluster of depth p on an n x n box (midpoint splits).
inline QuadTreeCluster hodlr_cluster(const IndexBox& box, Index depth) {
  if (depth <= 1) return QuadTreeCluster::dense(box);
  const auto b = midpoint_split(box);
  return QuadTreeCluster::split(box, {hodlr_cluster(b[0], depth - 1), QuadTreeCluster::low_rank(b[1]),
                                      QuadTreeCluster::low_rank(b[2]), hodlr_cluster(b[3], depth - 1)});
}

}  // namespace halr
