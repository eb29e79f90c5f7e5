#pragma once

// Serialization: the HALR1 binary format, JSON structure dumps, SVG renders
// and a plain binary dense-matrix format for oracle data.
//
// HALR1 layout (all integers int64, all reals float64, little-endian):
//   "HALR1\0\0\0" | m | n | node
//   node := tag(u8) | m | n | payload
//     tag 0 dense:   m*n column-major reals
//     tag 1 lowrank: k | U (m*k col-major) | V (n*k col-major)
//     tag 2 split:   four child nodes in order 11, 12, 21, 22

#include "halr/halr_matrix.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace halr {

namespace detail {

static_assert(std::endian::native == std::endian::little, "HALR1 I/O assumes a little-endian host");

inline constexpr char kHalrMagic[8] = {'H', 'A', 'L', 'R', '1', '\0', '\0', '\0'};
inline constexpr char kDenseMagic[8] = {'H', 'D', 'E', 'N', 'S', '1', '\0', '\0'};

inline void put_i64(std::ostream& os, std::int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }

inline std::int64_t get_i64(std::istream& is) {
  std::int64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) raise(ErrorCode::Io, "truncated HALR stream");
  return v;
}

inline void put_block(std::ostream& os, const Matrix& a) {
  os.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
}

inline Matrix get_block(std::istream& is, Index m, Index n) {
  if (m < 0 || n < 0) raise(ErrorCode::Io, "negative dimension in stream");
  Matrix a(m, n);
  is.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  if (!is) raise(ErrorCode::Io, "truncated HALR stream");
  return a;
}

inline void write_node(std::ostream& os, const HalrMatrix& a) {
  const char tag = a.is_dense_leaf() ? 0 : a.is_low_rank_leaf() ? 1 : 2;
  os.put(tag);
  put_i64(os, a.rows());
  put_i64(os, a.cols());
  if (a.is_dense_leaf()) {
    put_block(os, a.dense_block());
  } else if (a.is_low_rank_leaf()) {
    put_i64(os, a.factors().rank());
    put_block(os, a.factors().U);
    put_block(os, a.factors().V);
  } else {
    for (int c = 0; c < 4; ++c) write_node(os, a.child(c));
  }
}

inline HalrMatrix read_node(std::istream& is, int depth) {
  if (depth > 64) raise(ErrorCode::Io, "HALR tree too deep");
  const int tag = is.get();
  if (!is) raise(ErrorCode::Io, "truncated HALR stream");
  const Index m = get_i64(is);
  const Index n = get_i64(is);
  switch (tag) {
    case 0:
      return HalrMatrix::dense(get_block(is, m, n));
    case 1: {
      const Index k = get_i64(is);
      Matrix u = get_block(is, m, k);
      Matrix v = get_block(is, n, k);
      return HalrMatrix::low_rank(FactoredLowRank(std::move(u), std::move(v)));
    }
    case 2: {
      std::array<HalrMatrix, 4> ch;
      for (auto& c : ch) c = read_node(is, depth + 1);
      HalrMatrix s = HalrMatrix::split(std::move(ch));
      if (s.rows() != m || s.cols() != n) raise(ErrorCode::Io, "split node dims disagree with children");
      return s;
    }
    default:
      raise(ErrorCode::Io, "unknown node tag");
  }
}

}  // namespace detail

inline void write_halr(std::ostream& os, const HalrMatrix& a) {
  os.write(detail::kHalrMagic, 8);
  detail::put_i64(os, a.rows());
  detail::put_i64(os, a.cols());
  detail::write_node(os, a);
  if (!os) raise(ErrorCode::Io, "write failed");
}

inline HalrMatrix read_halr(std::istream& is) {
  char magic[8] = {};
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kHalrMagic, 8) != 0) raise(ErrorCode::Io, "not a HALR1 stream");
  const Index m = detail::get_i64(is);
  const Index n = detail::get_i64(is);
  HalrMatrix a = detail::read_node(is, 0);
  if (a.rows() != m || a.cols() != n) raise(ErrorCode::Io, "header dims disagree with tree");
  return a;
}

inline void save_halr(const std::string& path, const HalrMatrix& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorCode::Io, "cannot open " + path);
  write_halr(os, a);
}

inline HalrMatrix load_halr(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorCode::Io, "cannot open " + path);
  return read_halr(is);
}

/// Dense matrix: "HDENS1\0\0" | m | n | column-major reals.
inline void save_dense(const std::string& path, const Matrix& a) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorCode::Io, "cannot open " + path);
  os.write(detail::kDenseMagic, 8);
  detail::put_i64(os, a.rows());
  detail::put_i64(os, a.cols());
  detail::put_block(os, a);
  if (!os) raise(ErrorCode::Io, "write failed: " + path);
}

inline Matrix load_dense(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) raise(ErrorCode::Io, "cannot open " + path);
  char magic[8] = {};
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kDenseMagic, 8) != 0) raise(ErrorCode::Io, "not a dense matrix file: " + path);
  const Index m = detail::get_i64(is);
  const Index n = detail::get_i64(is);
  return detail::get_block(is, m, n);
}

// ---- JSON ------------------------------------------------------------------

inline nlohmann::json to_json(const QuadTreeCluster& t) {
  const IndexBox& b = t.box();
  nlohmann::json j;
  j["box"] = {b.row_lo, b.row_hi, b.col_lo, b.col_hi};
  if (t.is_dense_leaf()) {
    j["kind"] = "dense";
  } else if (t.is_low_rank_leaf()) {
    j["kind"] = "lowrank";
  } else {
    j["kind"] = "split";
    j["children"] = nlohmann::json::array();
    for (int c = 0; c < 4; ++c) j["children"].push_back(to_json(t.child(c)));
  }
  return j;
}

/// Tree dump with leaf ranks; boxes are 1-based and inclusive.
inline nlohmann::json to_json(const HalrMatrix& a, Index row_lo = 1, Index col_lo = 1) {
  nlohmann::json j;
  j["box"] = {row_lo, row_lo + a.rows() - 1, col_lo, col_lo + a.cols() - 1};
  if (a.is_dense_leaf()) {
    j["kind"] = "dense";
    j["rank"] = std::min(a.rows(), a.cols());
  } else if (a.is_low_rank_leaf()) {
    j["kind"] = "lowrank";
    j["rank"] = a.factors().rank();
  } else {
    j["kind"] = "split";
    const Index r = a.split_row();
    const Index c = a.split_col();
    j["children"] = {to_json(a.child(0), row_lo, col_lo), to_json(a.child(1), row_lo, col_lo + c),
                     to_json(a.child(2), row_lo + r, col_lo), to_json(a.child(3), row_lo + r, col_lo + c)};
  }
  return j;
}

inline QuadTreeCluster cluster_from_json(const nlohmann::json& j) {
  try {
    const auto& b = j.at("box");
    const IndexBox box{b.at(0).get<Index>(), b.at(1).get<Index>(), b.at(2).get<Index>(), b.at(3).get<Index>()};
    if (!box.valid()) raise(ErrorCode::Io, "invalid box in cluster JSON");
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "dense") return QuadTreeCluster::dense(box);
    if (kind == "lowrank") return QuadTreeCluster::low_rank(box);
    if (kind != "split") raise(ErrorCode::Io, "unknown kind in cluster JSON: " + kind);
    const auto& ch = j.at("children");
    if (ch.size() != 4) raise(ErrorCode::Io, "split node needs four children");
    return QuadTreeCluster::split(box, {cluster_from_json(ch[0]), cluster_from_json(ch[1]), cluster_from_json(ch[2]),
                                        cluster_from_json(ch[3])});
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorCode::Io, std::string("malformed cluster JSON: ") + e.what());
  }
}

// ---- SVG -------------------------------------------------------------------

struct SvgOptions {
  double size_px = 800.0;
  bool rank_labels = true;
  double min_label_px = 14.0;  ///< blocks smaller than this get no label
};

/// Blue dense blocks, gray low-rank blocks with rank labels. Output depends
/// only on the structure and ranks, so repeated renders are byte-identical.
inline std::string render_svg(const HalrMatrix& a, const SvgOptions& opt = {}) {
  const double sx = opt.size_px / static_cast<double>(a.cols());
  const double sy = opt.size_px / static_cast<double>(a.rows());
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opt.size_px << "\" height=\"" << opt.size_px
     << "\" viewBox=\"0 0 " << opt.size_px << ' ' << opt.size_px << "\">\n";
  a.for_each_leaf([&](const HalrMatrix& leaf, Index r0, Index c0) {
    const double x = static_cast<double>(c0) * sx;
    const double y = static_cast<double>(r0) * sy;
    const double w = static_cast<double>(leaf.cols()) * sx;
    const double h = static_cast<double>(leaf.rows()) * sy;
    const bool dense = leaf.is_dense_leaf();
    os << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" fill=\""
       << (dense ? "#3060c0" : "#c8c8c8") << "\" stroke=\"#202020\" stroke-width=\"0.5\"/>\n";
    if (!dense && opt.rank_labels && std::min(w, h) >= opt.min_label_px) {
      const double fs = std::min(w, h) * 0.4;
      os << "<text x=\"" << x + w / 2 << "\" y=\"" << y + h / 2 << "\" font-size=\"" << std::min(fs, 48.0)
         << "\" text-anchor=\"middle\" dominant-baseline=\"central\" font-family=\"sans-serif\">"
         << leaf.factors().rank() << "</text>\n";
    }
  });
  os << "</svg>\n";
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) raise(ErrorCode::Io, "cannot open " + path);
  os << text;
  if (!os) raise(ErrorCode::Io, "write failed: " + path);
}

}  // namespace halr
