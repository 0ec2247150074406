#pragma once

// Unstructured quadrilateral meshes (Q4/Q9), boundary side-sets, slit
// notches by node duplication, and the inter-element edge topology used by
// the interior-penalty phase-field scheme.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pfx4/basis.hpp"
#include "pfx4/core.hpp"

namespace pfx4 {

struct FaceRef {
  ElemId elem;
  int face;
  friend bool operator==(const FaceRef&, const FaceRef&) = default;
  friend auto operator<=>(const FaceRef&, const FaceRef&) = default;
};

class Mesh {
 public:
  ElementKind kind = ElementKind::Q4;
  std::vector<Vec2> nodes;
  std::vector<NodeId> conn;  // flat, nodes_per_element() entries per element
  std::map<std::string, std::vector<FaceRef>> side_sets;
  std::map<std::string, std::vector<NodeId>> node_sets;

  int nodes_per_element() const { return nodes_of_kind(kind); }
  std::size_t num_nodes() const { return nodes.size(); }
  std::size_t num_elements() const { return conn.size() / static_cast<std::size_t>(nodes_per_element()); }

  std::span<const NodeId> element(ElemId e) const {
    const auto n = static_cast<std::size_t>(nodes_per_element());
    return {conn.data() + e * n, n};
  }

  template <ElementKind K>
  ElementCoords<K> coords(ElemId e) const {
    ElementCoords<K> X;
    const auto el = element(e);
    for (int a = 0; a < nodes_of<K>; ++a) X.row(a) = nodes[el[a]].transpose();
    return X;
  }

  /// Corner node ids (start, end) of local face f.
  std::pair<NodeId, NodeId> face_corners(ElemId e, int f) const {
    const auto el = element(e);
    return {el[f], el[(f + 1) % 4]};
  }

  /// All node ids on a local face (corners, plus the mid-edge node for Q9).
  std::vector<NodeId> face_nodes(ElemId e, int f) const {
    const auto el = element(e);
    std::vector<NodeId> out{el[f], el[(f + 1) % 4]};
    if (kind == ElementKind::Q9) out.push_back(el[4 + f]);
    return out;
  }

  const std::vector<FaceRef>& side_set(const std::string& name) const {
    auto it = side_sets.find(name);
    if (it == side_sets.end()) throw ConfigError("unknown side-set '" + name + "'");
    return it->second;
  }

  /// Sorted unique node ids touching the faces of a side-set.
  std::vector<NodeId> side_set_nodes(const std::string& name) const {
    std::set<NodeId> s;
    for (const auto& fr : side_set(name))
      for (NodeId n : face_nodes(fr.elem, fr.face)) s.insert(n);
    return {s.begin(), s.end()};
  }

  double element_area(ElemId e) const {
    double a = 0.0;
    if (kind == ElementKind::Q4) {
      for (const auto& p : eval_basis<ElementKind::Q4>(coords<ElementKind::Q4>(e), 2, false)) a += p.weight;
    } else {
      for (const auto& p : eval_basis<ElementKind::Q9>(coords<ElementKind::Q9>(e), 3, false)) a += p.weight;
    }
    return a;
  }

  Vec2 element_center(ElemId e) const {
    Vec2 c = Vec2::Zero();
    const auto el = element(e);
    for (int a = 0; a < 4; ++a) c += nodes[el[a]];
    return c / 4.0;
  }

  /// sqrt(area): isotropic element length scale.
  double element_size(ElemId e) const { return std::sqrt(element_area(e)); }
};

/// Verifies the mesh invariants: valid node references and positive map
/// Jacobian at every volume quadrature point.
inline void validate(const Mesh& m) {
  for (NodeId n : m.conn)
    if (n >= m.num_nodes()) throw MeshError("element references a node out of range");
  for (ElemId e = 0; e < m.num_elements(); ++e) {
    try {
      if (m.kind == ElementKind::Q4)
        (void)eval_basis<ElementKind::Q4>(m.coords<ElementKind::Q4>(e), 2, false);
      else
        (void)eval_basis<ElementKind::Q9>(m.coords<ElementKind::Q9>(e), 3, false);
    } catch (const InversionError&) {
      throw MeshError("element " + std::to_string(e) + " is inverted or degenerate");
    }
  }
}

// ---------------------------------------------------------------------------
// Edge topology

struct InteriorEdge {
  static constexpr ElemId kNone = std::numeric_limits<ElemId>::max();
  ElemId elem_plus = kNone;
  ElemId elem_minus = kNone;  // kNone for one-sided (boundary) edges
  int local_face_plus = -1;
  int local_face_minus = -1;
  Vec2 normal_plus = Vec2::Zero();  // at the face midpoint
  double h_avg = 0.0;
  bool is_boundary_D2 = false;

  bool one_sided() const { return elem_minus == kNone; }
};

namespace detail {

using FaceKey = std::pair<NodeId, NodeId>;

inline FaceKey face_key(NodeId a, NodeId b) { return a < b ? FaceKey{a, b} : FaceKey{b, a}; }

inline std::map<FaceKey, std::vector<FaceRef>> face_map(const Mesh& m) {
  std::map<FaceKey, std::vector<FaceRef>> fm;
  for (ElemId e = 0; e < m.num_elements(); ++e)
    for (int f = 0; f < 4; ++f) {
      auto [a, b] = m.face_corners(e, f);
      fm[face_key(a, b)].push_back({e, f});
    }
  return fm;
}

inline Vec2 face_mid_normal(const Mesh& m, ElemId e, int f) {
  const Vec2 r = face_ref_point(f, 0.0);
  Vec2 t;
  if (m.kind == ElementKind::Q4) {
    const auto X = m.coords<ElementKind::Q4>(e);
    t = (X.transpose() * ref_shape<ElementKind::Q4>(r.x(), r.y()).dN) * face_ref_tangent(f);
  } else {
    const auto X = m.coords<ElementKind::Q9>(e);
    t = (X.transpose() * ref_shape<ElementKind::Q9>(r.x(), r.y()).dN) * face_ref_tangent(f);
  }
  return Vec2(t.y(), -t.x()).normalized();
}

}  // namespace detail

/// Faces that belong to exactly one element.
inline std::vector<FaceRef> boundary_faces(const Mesh& m) {
  std::vector<FaceRef> out;
  for (const auto& [key, refs] : detail::face_map(m))
    if (refs.size() == 1) out.push_back(refs.front());
  std::sort(out.begin(), out.end());
  return out;
}

/// Interior edges plus one-sided edges for every face listed in the given
/// side-sets (the crack-insulated boundary). Edges are ordered by
/// (plus element, plus face) so assembly order is deterministic.
inline std::vector<InteriorEdge> build_edge_topology(const Mesh& m, const std::vector<std::string>& d2_sets) {
  std::vector<double> hsz(m.num_elements());
  for (ElemId e = 0; e < m.num_elements(); ++e) hsz[e] = m.element_size(e);

  std::set<FaceRef> d2;
  for (const auto& name : d2_sets)
    for (const auto& fr : m.side_set(name)) d2.insert(fr);

  std::vector<InteriorEdge> edges;
  for (const auto& [key, refs] : detail::face_map(m)) {
    if (refs.size() > 2)
      throw TopologyError("non-manifold face shared by " + std::to_string(refs.size()) + " elements (nodes " +
                          std::to_string(key.first) + ", " + std::to_string(key.second) + ")");
    if (refs.size() == 2) {
      FaceRef p = refs[0], q = refs[1];
      if (q.elem < p.elem) std::swap(p, q);
      if (p.elem == q.elem) throw TopologyError("element shares a face with itself");
      if (m.kind == ElementKind::Q9 && m.element(p.elem)[4 + p.face] != m.element(q.elem)[4 + q.face])
        throw TopologyError("mismatched mid-edge node ids between neighbouring elements " +
                            std::to_string(p.elem) + " and " + std::to_string(q.elem));
      auto [a0, a1] = m.face_corners(p.elem, p.face);
      auto [b0, b1] = m.face_corners(q.elem, q.face);
      if (!(a0 == b1 && a1 == b0))
        throw TopologyError("orientation mismatch between paired faces of elements " + std::to_string(p.elem) +
                            " and " + std::to_string(q.elem));
      InteriorEdge ed;
      ed.elem_plus = p.elem;
      ed.local_face_plus = p.face;
      ed.elem_minus = q.elem;
      ed.local_face_minus = q.face;
      ed.normal_plus = detail::face_mid_normal(m, p.elem, p.face);
      ed.h_avg = 0.5 * (hsz[p.elem] + hsz[q.elem]);
      edges.push_back(ed);
    } else if (d2.count(refs[0])) {
      InteriorEdge ed;
      ed.elem_plus = refs[0].elem;
      ed.local_face_plus = refs[0].face;
      ed.normal_plus = detail::face_mid_normal(m, refs[0].elem, refs[0].face);
      ed.h_avg = hsz[refs[0].elem];
      ed.is_boundary_D2 = true;
      edges.push_back(ed);
    }
  }
  std::sort(edges.begin(), edges.end(), [](const InteriorEdge& x, const InteriorEdge& y) {
    return std::pair(x.elem_plus, x.local_face_plus) < std::pair(y.elem_plus, y.local_face_plus);
  });
  return edges;
}

// ---------------------------------------------------------------------------
// Generators

/// Graded 1D grid on [a, b]: the local spacing follows the piecewise-linear
/// size function through `anchors` (position, size), clamped at the ends.
struct SizeAnchors {
  std::vector<std::pair<double, double>> pts;

  double at(double x) const {
    if (pts.empty()) throw ConfigError("size function without anchors");
    if (x <= pts.front().first) return pts.front().second;
    if (x >= pts.back().first) return pts.back().second;
    for (std::size_t i = 1; i < pts.size(); ++i)
      if (x <= pts[i].first) {
        const auto [x0, h0] = pts[i - 1];
        const auto [x1, h1] = pts[i];
        const double t = (x - x0) / (x1 - x0);
        return h0 + t * (h1 - h0);
      }
    return pts.back().second;
  }

  static SizeAnchors uniform(double h) { return {{{0.0, h}}}; }
};

/// Grid coordinates on [a, b] with spacing proportional to the size function.
inline std::vector<double> graded_segment(double a, double b, const SizeAnchors& size) {
  constexpr int kSamples = 4000;
  std::vector<double> phi(kSamples + 1, 0.0);
  const double dx = (b - a) / kSamples;
  double hmin = std::numeric_limits<double>::max(), hmax = 0.0;
  for (int i = 0; i < kSamples; ++i) {
    const double h = size.at(a + (i + 0.5) * dx);
    hmin = std::min(hmin, h);
    hmax = std::max(hmax, h);
    phi[i + 1] = phi[i] + dx / h;
  }
  const int n = std::max(1, static_cast<int>(std::ceil(phi.back() - 1e-9)));
  std::vector<double> out{a};
  if (hmax - hmin <= 1e-14 * hmax) {
    for (int k = 1; k < n; ++k) out.push_back(a + (b - a) * k / n);
    out.push_back(b);
    return out;
  }
  int j = 0;
  for (int k = 1; k < n; ++k) {
    const double target = phi.back() * k / n;
    while (phi[j + 1] < target) ++j;
    const double t = (target - phi[j]) / (phi[j + 1] - phi[j]);
    out.push_back(a + (j + t) * dx);
  }
  out.push_back(b);
  return out;
}

/// Grid coordinates covering [a, b] that hit every point in `required`.
inline std::vector<double> graded_axis(double a, double b, std::vector<double> required, const SizeAnchors& size) {
  required.push_back(a);
  required.push_back(b);
  std::sort(required.begin(), required.end());
  required.erase(std::unique(required.begin(), required.end(),
                             [](double x, double y) { return std::abs(x - y) < 1e-12; }),
                 required.end());
  std::vector<double> out{a};
  for (std::size_t i = 1; i < required.size(); ++i) {
    auto seg = graded_segment(required[i - 1], required[i], size);
    out.insert(out.end(), seg.begin() + 1, seg.end());
  }
  return out;
}

/// Tensor-product Q4 grid with side-sets bottom/right/top/left.
inline Mesh structured_rect(const std::vector<double>& xs, const std::vector<double>& ys) {
  Mesh m;
  m.kind = ElementKind::Q4;
  const std::size_t nx = xs.size() - 1, ny = ys.size() - 1;
  for (double y : ys)
    for (double x : xs) m.nodes.emplace_back(x, y);
  auto id = [&](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) {
      const ElemId e = m.num_elements();
      m.conn.insert(m.conn.end(), {id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
      if (j == 0) m.side_sets["bottom"].push_back({e, 0});
      if (i == nx - 1) m.side_sets["right"].push_back({e, 1});
      if (j == ny - 1) m.side_sets["top"].push_back({e, 2});
      if (i == 0) m.side_sets["left"].push_back({e, 3});
    }
  return m;
}

inline Mesh structured_rect(double x0, double x1, std::size_t nx, double y0, double y1, std::size_t ny) {
  std::vector<double> xs(nx + 1), ys(ny + 1);
  for (std::size_t i = 0; i <= nx; ++i) xs[i] = x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(nx);
  for (std::size_t j = 0; j <= ny; ++j) ys[j] = y0 + (y1 - y0) * static_cast<double>(j) / static_cast<double>(ny);
  return structured_rect(xs, ys);
}

struct NotchRefinement {
  SizeAnchors x_size = SizeAnchors::uniform(0.25);
  SizeAnchors y_size = SizeAnchors::uniform(0.25);
};

/// Square [0, side]^2 with a zero-width horizontal slit from the left edge
/// to the tip (notch_length, notch_y). Slit nodes (tip excluded) are
/// duplicated: elements below use the original node, elements above the
/// copy. Side-sets: bottom, right, top, left, slit_upper, slit_lower;
/// node-set "tip".
inline Mesh generate_notched_square(double side, double notch_length, double notch_y,
                                    const NotchRefinement& ref = {}) {
  if (!(notch_length > 0.0 && notch_length < side)) throw MeshError("notch length must lie in (0, side)");
  if (!(notch_y > 0.0 && notch_y < side)) throw MeshError("notch height must lie in (0, side)");
  const auto xs = graded_axis(0.0, side, {notch_length}, ref.x_size);
  const auto ys = graded_axis(0.0, side, {notch_y}, ref.y_size);
  Mesh m = structured_rect(xs, ys);
  const std::size_t nx = xs.size() - 1;
  const auto ix_tip = static_cast<std::size_t>(
      std::min_element(xs.begin(), xs.end(), [&](double a, double b) {
        return std::abs(a - notch_length) < std::abs(b - notch_length);
      }) - xs.begin());
  const auto jy = static_cast<std::size_t>(
      std::min_element(ys.begin(), ys.end(), [&](double a, double b) {
        return std::abs(a - notch_y) < std::abs(b - notch_y);
      }) - ys.begin());
  auto id = [&](std::size_t i, std::size_t j) { return j * (nx + 1) + i; };

  std::vector<NodeId> upper(ix_tip);
  for (std::size_t i = 0; i < ix_tip; ++i) {
    upper[i] = m.nodes.size();
    m.nodes.push_back(m.nodes[id(i, jy)]);
  }
  // Elements in row jy (just above the slit line) left of the tip.
  for (std::size_t i = 0; i < ix_tip; ++i) {
    const ElemId e = jy * nx + i;
    auto* c = m.conn.data() + e * 4;
    for (int a = 0; a < 2; ++a)
      for (std::size_t k = 0; k < ix_tip; ++k)
        if (c[a] == id(k, jy)) c[a] = upper[k];
    m.side_sets["slit_upper"].push_back({e, 0});
    m.side_sets["slit_lower"].push_back({(jy - 1) * nx + i, 2});
  }
  m.node_sets["tip"] = {id(ix_tip, jy)};
  validate(m);
  return m;
}

/// Q9 mesh with identical element geometry. Corner node ids are preserved;
/// mid-edge nodes are shared between elements whose faces share both
/// corners (slit faces therefore get separate mid-edge nodes); the center
/// node sits at the bilinear center.
inline Mesh promote_q4_to_q9(const Mesh& q4) {
  if (q4.kind != ElementKind::Q4) throw MeshError("promote_q4_to_q9 expects a Q4 mesh");
  Mesh m;
  m.kind = ElementKind::Q9;
  m.nodes = q4.nodes;
  m.side_sets = q4.side_sets;
  m.node_sets = q4.node_sets;
  std::map<detail::FaceKey, NodeId> mid;
  m.conn.reserve(q4.num_elements() * 9);
  for (ElemId e = 0; e < q4.num_elements(); ++e) {
    const auto el = q4.element(e);
    std::array<NodeId, 9> c{};
    for (int a = 0; a < 4; ++a) c[a] = el[a];
    for (int f = 0; f < 4; ++f) {
      const auto key = detail::face_key(el[f], el[(f + 1) % 4]);
      auto it = mid.find(key);
      if (it == mid.end()) {
        it = mid.emplace(key, m.nodes.size()).first;
        m.nodes.push_back(0.5 * (q4.nodes[el[f]] + q4.nodes[el[(f + 1) % 4]]));
      }
      c[4 + f] = it->second;
    }
    c[8] = m.nodes.size();
    m.nodes.push_back(0.25 * (q4.nodes[el[0]] + q4.nodes[el[1]] + q4.nodes[el[2]] + q4.nodes[el[3]]));
    m.conn.insert(m.conn.end(), c.begin(), c.end());
  }
  return m;
}

struct BranchingPlateGeometry {
  double width = 100.0;         // x extent
  double height = 40.0;         // y extent, centered on y = 0
  double notch_tip_x = 50.0;    // point C
  double notch_radius = 0.5;    // rounded tip radius (half notch width)
  double fine_h = 0.25;         // element size in the refined box
  double coarse_h = 2.0;        // element size far from the crack region
  double fine_x0 = 49.0;        // refined box [fine_x0, width] x [-fine_y, fine_y]
  double fine_y = 12.0;
  double morph_radius = 2.0;    // node morphing radius around the notch tip
};

/// Rectangular plate [0, width] x [-height/2, height/2] with a horizontal
/// notch of width 2 r0 from the left edge ending in a semicircular tip at C.
/// Built as a graded tensor grid (symmetric about y = 0) with the notch
/// cells removed and nodes near the tip morphed onto the arc.
/// Side-sets: top, bottom, left, right, notch.
inline Mesh generate_branching_plate(const BranchingPlateGeometry& g) {
  const double r0 = g.notch_radius;
  const double xc = g.notch_tip_x - r0;  // arc center
  const double blend = 3.0 * g.coarse_h;
  SizeAnchors xsz{{{0.0, g.coarse_h}, {g.fine_x0 - blend, g.coarse_h}, {g.fine_x0, g.fine_h}, {g.width, g.fine_h}}};
  SizeAnchors ysz{{{0.0, g.fine_h}, {g.fine_y, g.fine_h}, {g.fine_y + blend, g.coarse_h}, {g.height, g.coarse_h}}};
  const auto xs = graded_axis(0.0, g.width, {xc, g.notch_tip_x, g.fine_x0}, xsz);
  const auto yh = graded_axis(0.0, 0.5 * g.height, {r0, g.fine_y}, ysz);
  std::vector<double> ys;
  for (auto it = yh.rbegin(); it != yh.rend(); ++it) ys.push_back(-*it);
  ys.insert(ys.end(), yh.begin() + 1, yh.end());

  const Mesh full = structured_rect(xs, ys);
  Mesh m;
  m.kind = ElementKind::Q4;
  std::vector<NodeId> remap(full.num_nodes(), InteriorEdge::kNone);
  std::vector<ElemId> emap(full.num_elements(), InteriorEdge::kNone);
  for (ElemId e = 0; e < full.num_elements(); ++e) {
    const Vec2 c = full.element_center(e);
    if (c.x() < g.notch_tip_x && std::abs(c.y()) < r0) continue;
    emap[e] = m.num_elements();
    for (NodeId n : full.element(e)) {
      if (remap[n] == InteriorEdge::kNone) {
        remap[n] = m.nodes.size();
        m.nodes.push_back(full.nodes[n]);
      }
      m.conn.push_back(remap[n]);
    }
  }
  for (const auto& [name, faces] : full.side_sets)
    for (const auto& fr : faces)
      if (emap[fr.elem] != InteriorEdge::kNone) m.side_sets[name].push_back({emap[fr.elem], fr.face});
  // Faces exposed by removing the notch cells.
  std::set<FaceRef> outer;
  for (const auto& [name, faces] : m.side_sets)
    for (const auto& fr : faces) outer.insert(fr);
  for (const auto& fr : boundary_faces(m))
    if (!outer.count(fr)) m.side_sets["notch"].push_back(fr);

  // Morph nodes between the square tip cell boundary and the arc.
  for (auto& p : m.nodes) {
    const Vec2 d = p - Vec2(xc, 0.0);
    const double rho = d.norm();
    if (d.x() <= 0.0 || rho >= g.morph_radius || rho < 1e-14) continue;
    const double c = std::abs(d.x()) / rho, s = std::abs(d.y()) / rho;
    const double rho_sq = r0 / std::max(c, s);
    if (rho < rho_sq - 1e-12) continue;
    const double rnew = r0 + (rho - rho_sq) * (g.morph_radius - r0) / (g.morph_radius - rho_sq);
    p = Vec2(xc, 0.0) + d * (rnew / rho);
  }
  validate(m);
  return m;
}

// ---------------------------------------------------------------------------
// Gmsh v2 ASCII

namespace detail {

inline void orient_ccw(Mesh& m) {
  for (ElemId e = 0; e < m.num_elements(); ++e) {
    auto* c = m.conn.data() + e * static_cast<std::size_t>(m.nodes_per_element());
    const Vec2 a = m.nodes[c[0]], b = m.nodes[c[1]], d = m.nodes[c[3]];
    const Vec2 u = b - a, v = d - a;
    if (u.x() * v.y() - u.y() * v.x() < 0.0) {
      std::swap(c[1], c[3]);
      if (m.kind == ElementKind::Q9) {
        // faces become (0,3),(3,2),(2,1),(1,0): mid nodes 7,6,5,4
        std::swap(c[4], c[7]);
        std::swap(c[5], c[6]);
      }
    }
  }
}

}  // namespace detail

/// Reads $PhysicalNames, $Nodes and $Elements. Quad4 (3) / quad9 (10)
/// become elements, line2 (1) / line3 (8) with a physical name become
/// side-sets, points (15) become node-sets. z coordinates are ignored.
inline Mesh read_gmsh(std::istream& in) {
  std::map<int, std::string> phys;
  std::unordered_map<long, NodeId> nid;
  std::vector<Vec2> nodes;
  struct Line {
    std::string name;
    NodeId a, b;
  };
  std::vector<Line> lines;
  std::map<std::string, std::vector<NodeId>> point_sets;
  std::vector<std::vector<long>> quads;
  int quad_type = 0;
  std::string tok;
  while (in >> tok) {
    if (tok == "$MeshFormat") {
      double ver;
      int ft, ds;
      in >> ver >> ft >> ds;
      if (ver >= 3.0 || ft != 0) throw MeshError("only Gmsh v2 ASCII files are supported");
    } else if (tok == "$PhysicalNames") {
      int n;
      in >> n;
      for (int i = 0; i < n; ++i) {
        int dim, tag;
        std::string name;
        in >> dim >> tag;
        std::getline(in >> std::ws, name);
        if (name.size() >= 2 && name.front() == '"') name = name.substr(1, name.find('"', 1) - 1);
        phys[tag] = name;
      }
    } else if (tok == "$Nodes") {
      std::size_t n;
      in >> n;
      nodes.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        long id;
        double x, y, z;
        in >> id >> x >> y >> z;
        nid[id] = nodes.size();
        nodes.emplace_back(x, y);
      }
    } else if (tok == "$Elements") {
      std::size_t n;
      in >> n;
      for (std::size_t i = 0; i < n; ++i) {
        long id;
        int type, ntags;
        in >> id >> type >> ntags;
        std::vector<int> tags(ntags);
        for (auto& t : tags) in >> t;
        int nn = 0;
        switch (type) {
          case 1: nn = 2; break;
          case 3: nn = 4; break;
          case 8: nn = 3; break;
          case 10: nn = 9; break;
          case 15: nn = 1; break;
          default: throw MeshError("unsupported Gmsh element type " + std::to_string(type));
        }
        std::vector<long> v(nn);
        for (auto& x : v) in >> x;
        const std::string name = (ntags > 0 && phys.count(tags[0])) ? phys[tags[0]] : std::string{};
        if (type == 3 || type == 10) {
          if (quad_type && quad_type != type) throw MeshError("mixed quad4/quad9 meshes are not supported");
          quad_type = type;
          quads.push_back(std::move(v));
        } else if ((type == 1 || type == 8) && !name.empty()) {
          lines.push_back({name, static_cast<NodeId>(v[0]), static_cast<NodeId>(v[1])});
        } else if (type == 15 && !name.empty()) {
          point_sets[name].push_back(static_cast<NodeId>(v[0]));
        }
      }
    }
  }
  if (quads.empty()) throw MeshError("Gmsh file contains no quadrilateral elements");
  Mesh m;
  m.kind = quad_type == 3 ? ElementKind::Q4 : ElementKind::Q9;
  m.nodes = std::move(nodes);
  auto map_id = [&](long id) {
    auto it = nid.find(id);
    if (it == nid.end()) throw MeshError("element references unknown node " + std::to_string(id));
    return it->second;
  };
  for (const auto& q : quads)
    for (long id : q) m.conn.push_back(map_id(id));
  detail::orient_ccw(m);
  auto fm = detail::face_map(m);
  for (const auto& l : lines) {
    auto it = fm.find(detail::face_key(map_id(static_cast<long>(l.a)), map_id(static_cast<long>(l.b))));
    if (it == fm.end()) throw MeshError("boundary line of '" + l.name + "' matches no element face");
    m.side_sets[l.name].push_back(it->second.front());
  }
  for (auto& [name, ids] : point_sets)
    for (NodeId id : ids) m.node_sets[name].push_back(map_id(static_cast<long>(id)));
  validate(m);
  return m;
}

inline Mesh read_gmsh_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw MeshError("cannot open mesh file '" + path + "'");
  return read_gmsh(f);
}

inline void write_gmsh(std::ostream& out, const Mesh& m) {
  out << "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n";
  std::vector<std::string> names;
  for (const auto& [n, _] : m.side_sets) names.push_back(n);
  std::vector<std::string> pnames;
  for (const auto& [n, _] : m.node_sets) pnames.push_back(n);
  out << "$PhysicalNames\n" << names.size() + pnames.size() + 1 << "\n";
  int tag = 1;
  for (const auto& n : pnames) out << "0 " << tag++ << " \"" << n << "\"\n";
  for (const auto& n : names) out << "1 " << tag++ << " \"" << n << "\"\n";
  const int surf_tag = tag;
  out << "2 " << surf_tag << " \"domain\"\n$EndPhysicalNames\n";
  out << "$Nodes\n" << m.num_nodes() << "\n";
  out.precision(17);
  for (NodeId i = 0; i < m.num_nodes(); ++i) out << i + 1 << " " << m.nodes[i].x() << " " << m.nodes[i].y() << " 0\n";
  out << "$EndNodes\n";
  std::size_t count = m.num_elements();
  for (const auto& [_, v] : m.node_sets) count += v.size();
  for (const auto& [_, v] : m.side_sets) count += v.size();
  out << "$Elements\n" << count << "\n";
  std::size_t id = 1;
  tag = 1;
  for (const auto& n : pnames) {
    for (NodeId v : m.node_sets.at(n)) out << id++ << " 15 2 " << tag << " " << tag << " " << v + 1 << "\n";
    ++tag;
  }
  const bool q9 = m.kind == ElementKind::Q9;
  for (const auto& n : names) {
    for (const auto& fr : m.side_sets.at(n)) {
      const auto fn = m.face_nodes(fr.elem, fr.face);
      out << id++ << (q9 ? " 8 2 " : " 1 2 ") << tag << " " << tag;
      for (NodeId v : fn) out << " " << v + 1;
      out << "\n";
    }
    ++tag;
  }
  for (ElemId e = 0; e < m.num_elements(); ++e) {
    out << id++ << (q9 ? " 10 2 " : " 3 2 ") << surf_tag << " " << surf_tag;
    for (NodeId v : m.element(e)) out << " " << v + 1;
    out << "\n";
  }
  out << "$EndElements\n";
}

// ---------------------------------------------------------------------------
// Point location

/// Uniform bucket grid over element bounding boxes.
class PointLocator {
 public:
  explicit PointLocator(const Mesh& m) : mesh_(&m) {
    lo_ = hi_ = m.nodes.front();
    for (const auto& p : m.nodes) {
      lo_ = lo_.cwiseMin(p);
      hi_ = hi_.cwiseMax(p);
    }
    const double area = (hi_ - lo_).prod();
    const double cell = std::sqrt(std::max(area, 1e-300) / std::max<std::size_t>(1, m.num_elements()));
    nx_ = std::max<std::size_t>(1, static_cast<std::size_t>((hi_.x() - lo_.x()) / cell));
    ny_ = std::max<std::size_t>(1, static_cast<std::size_t>((hi_.y() - lo_.y()) / cell));
    buckets_.resize(nx_ * ny_);
    for (ElemId e = 0; e < m.num_elements(); ++e) {
      Vec2 a = m.nodes[m.element(e)[0]], b = a;
      for (NodeId n : m.element(e)) {
        a = a.cwiseMin(m.nodes[n]);
        b = b.cwiseMax(m.nodes[n]);
      }
      const auto [i0, j0] = cell_of(a);
      const auto [i1, j1] = cell_of(b);
      for (std::size_t j = j0; j <= j1; ++j)
        for (std::size_t i = i0; i <= i1; ++i) buckets_[j * nx_ + i].push_back(e);
    }
  }

  struct Hit {
    ElemId elem;
    Vec2 ref;
    bool inside;
  };

  /// Element containing x; when none does, the element with the nearest
  /// center is returned with inside = false and a clamped reference point.
  Hit locate(const Vec2& x) const {
    const auto [i, j] = cell_of(x);
    for (ElemId e : buckets_[j * nx_ + i]) {
      Vec2 r;
      if (try_inverse(e, x, r)) return {e, r, true};
    }
    ElemId best = 0;
    double bd = std::numeric_limits<double>::max();
    for (ElemId e = 0; e < mesh_->num_elements(); ++e) {
      const double d = (mesh_->element_center(e) - x).squaredNorm();
      if (d < bd) {
        bd = d;
        best = e;
      }
    }
    Vec2 r;
    try_inverse(best, x, r);
    r = r.cwiseMax(Vec2(-1, -1)).cwiseMin(Vec2(1, 1));
    return {best, r, false};
  }

  /// Like locate() without the nearest-element fallback.
  std::optional<Hit> find(const Vec2& x) const {
    if (x.x() < lo_.x() || x.y() < lo_.y() || x.x() > hi_.x() || x.y() > hi_.y()) return std::nullopt;
    const auto [i, j] = cell_of(x);
    for (ElemId e : buckets_[j * nx_ + i]) {
      Vec2 r;
      if (try_inverse(e, x, r)) return Hit{e, r, true};
    }
    return std::nullopt;
  }

 private:
  std::pair<std::size_t, std::size_t> cell_of(const Vec2& x) const {
    auto clampi = [](double v, std::size_t n) {
      if (!(v > 0.0)) return std::size_t{0};
      return std::min(n - 1, static_cast<std::size_t>(v));
    };
    return {clampi((x.x() - lo_.x()) / (hi_.x() - lo_.x() + 1e-300) * nx_, nx_),
            clampi((x.y() - lo_.y()) / (hi_.y() - lo_.y() + 1e-300) * ny_, ny_)};
  }

  bool try_inverse(ElemId e, const Vec2& x, Vec2& r) const {
    if (mesh_->kind == ElementKind::Q4) return inverse_map<ElementKind::Q4>(mesh_->coords<ElementKind::Q4>(e), x, r, 1e-9);
    return inverse_map<ElementKind::Q9>(mesh_->coords<ElementKind::Q9>(e), x, r, 1e-9);
  }

  const Mesh* mesh_;
  Vec2 lo_, hi_;
  std::size_t nx_ = 1, ny_ = 1;
  std::vector<std::vector<ElemId>> buckets_;
};

}  // namespace pfx4
