#pragma once

// Lagrange bases for Q4/Q9 quadrilaterals, Gauss rules, and the
// isoparametric map with physical first and second derivatives.
//
// Node ordering (both kinds): corners 0..3 counterclockwise starting at
// (-1,-1); Q9 adds mid-edge nodes 4..7 (edge k joins corners k and k+1)
// and the center node 8. Local face k is the edge from corner k to k+1.

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "pfx4/core.hpp"

namespace pfx4 {

enum class ElementKind { Q4, Q9 };

template <ElementKind K>
inline constexpr int nodes_of = (K == ElementKind::Q4) ? 4 : 9;

inline constexpr int nodes_of_kind(ElementKind k) { return k == ElementKind::Q4 ? 4 : 9; }

/// 1D Gauss-Legendre points/weights on [-1, 1].
struct GaussRule1D {
  std::vector<double> x;
  std::vector<double> w;
};

inline GaussRule1D gauss_legendre(int n) {
  switch (n) {
    case 1:
      return {{0.0}, {2.0}};
    case 2: {
      const double a = 1.0 / std::sqrt(3.0);
      return {{-a, a}, {1.0, 1.0}};
    }
    case 3: {
      const double a = std::sqrt(0.6);
      return {{-a, 0.0, a}, {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0}};
    }
    case 4: {
      const double a = std::sqrt(3.0 / 7.0 - 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double b = std::sqrt(3.0 / 7.0 + 2.0 / 7.0 * std::sqrt(6.0 / 5.0));
      const double wa = (18.0 + std::sqrt(30.0)) / 36.0;
      const double wb = (18.0 - std::sqrt(30.0)) / 36.0;
      return {{-b, -a, a, b}, {wb, wa, wa, wb}};
    }
    default:
      throw Error("gauss_legendre: supported orders are 1..4");
  }
}

struct QuadPoint2D {
  double xi, eta, w;
};

inline std::vector<QuadPoint2D> tensor_rule(int n) {
  const auto g = gauss_legendre(n);
  std::vector<QuadPoint2D> pts;
  pts.reserve(static_cast<std::size_t>(n * n));
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) pts.push_back({g.x[i], g.x[j], g.w[i] * g.w[j]});
  return pts;
}

/// Default volume rule: 2x2 for Q4, 3x3 for Q9.
inline int default_volume_order(ElementKind k) { return k == ElementKind::Q4 ? 2 : 3; }
inline constexpr int kFaceQuadOrder = 3;

/// Shape functions and reference derivatives at one point.
/// d2N columns are (xi xi, eta eta, xi eta).
template <ElementKind K>
struct RefShape {
  static constexpr int NN = nodes_of<K>;
  Eigen::Matrix<double, NN, 1> N;
  Eigen::Matrix<double, NN, 2> dN;
  Eigen::Matrix<double, NN, 3> d2N;
};

namespace detail {

// 1D Lagrange polynomials with values, first and second derivatives.
struct L1 {
  double v, d, dd;
};

inline L1 lin(int i, double x) {
  return i == 0 ? L1{0.5 * (1.0 - x), -0.5, 0.0} : L1{0.5 * (1.0 + x), 0.5, 0.0};
}

inline L1 quad(int i, double x) {
  switch (i) {
    case 0:
      return {0.5 * x * (x - 1.0), x - 0.5, 1.0};
    case 1:
      return {1.0 - x * x, -2.0 * x, -2.0};
    default:
      return {0.5 * x * (x + 1.0), x + 0.5, 1.0};
  }
}

inline constexpr std::array<std::array<int, 2>, 4> kQ4Index{{{0, 0}, {1, 0}, {1, 1}, {0, 1}}};
inline constexpr std::array<std::array<int, 2>, 9> kQ9Index{
    {{0, 0}, {2, 0}, {2, 2}, {0, 2}, {1, 0}, {2, 1}, {1, 2}, {0, 1}, {1, 1}}};

}  // namespace detail

template <ElementKind K>
RefShape<K> ref_shape(double xi, double eta) {
  RefShape<K> s;
  for (int a = 0; a < RefShape<K>::NN; ++a) {
    detail::L1 fx, fy;
    if constexpr (K == ElementKind::Q4) {
      fx = detail::lin(detail::kQ4Index[a][0], xi);
      fy = detail::lin(detail::kQ4Index[a][1], eta);
    } else {
      fx = detail::quad(detail::kQ9Index[a][0], xi);
      fy = detail::quad(detail::kQ9Index[a][1], eta);
    }
    s.N(a) = fx.v * fy.v;
    s.dN(a, 0) = fx.d * fy.v;
    s.dN(a, 1) = fx.v * fy.d;
    s.d2N(a, 0) = fx.dd * fy.v;
    s.d2N(a, 1) = fx.v * fy.dd;
    s.d2N(a, 2) = fx.d * fy.d;
  }
  return s;
}

/// Reference coordinates of the element nodes.
template <ElementKind K>
Vec2 ref_node(int a) {
  if constexpr (K == ElementKind::Q4) {
    return {detail::kQ4Index[a][0] == 0 ? -1.0 : 1.0, detail::kQ4Index[a][1] == 0 ? -1.0 : 1.0};
  } else {
    return {detail::kQ9Index[a][0] - 1.0, detail::kQ9Index[a][1] - 1.0};
  }
}

/// Basis evaluated in physical space at one point. d2N columns are
/// (xx, yy, xy). `weight` already includes the map determinant (area
/// measure on volumes, length measure on faces).
template <ElementKind K>
struct MappedPoint {
  static constexpr int NN = nodes_of<K>;
  Eigen::Matrix<double, NN, 1> N;
  Eigen::Matrix<double, NN, 2> dN;
  Eigen::Matrix<double, NN, 3> d2N;
  double weight = 0.0;
  double detJ = 0.0;
  Vec2 x = Vec2::Zero();
  Vec2 normal = Vec2::Zero();
  double xi = 0.0, eta = 0.0;
};

template <ElementKind K>
using ElementCoords = Eigen::Matrix<double, nodes_of<K>, 2>;

/// Maps a reference point into physical space. When `second` is set the
/// physical Hessians are obtained from the full second-order chain rule,
/// including the curvature of the map (non-affine quads).
template <ElementKind K>
MappedPoint<K> map_point(const ElementCoords<K>& X, double xi, double eta, bool second = true) {
  const RefShape<K> s = ref_shape<K>(xi, eta);
  MappedPoint<K> p;
  p.xi = xi;
  p.eta = eta;
  p.N = s.N;
  p.x = X.transpose() * s.N;
  // Jm(i, r) = d x_i / d xi_r
  const Mat2 Jm = X.transpose() * s.dN;
  p.detJ = Jm.determinant();
  if (!(p.detJ > 0.0))
    throw InversionError("non-positive element map Jacobian at (" + std::to_string(xi) + ", " +
                         std::to_string(eta) + ")");
  const Mat2 Jinv = Jm.inverse();
  p.dN = s.dN * Jinv;
  if (second) {
    // rows: (xi xi), (eta eta), (xi eta); cols: x, y
    const Eigen::Matrix<double, 3, 2> Xh = s.d2N.transpose() * X;
    const double xa = Jm(0, 0), ya = Jm(1, 0), xb = Jm(0, 1), yb = Jm(1, 1);
    Mat3 T;
    T << xa * xa, ya * ya, 2.0 * xa * ya,  //
        xb * xb, yb * yb, 2.0 * xb * yb,   //
        xa * xb, ya * yb, xa * yb + xb * ya;
    const Eigen::Matrix<double, nodes_of<K>, 3> rhs = s.d2N - p.dN * Xh.transpose();
    p.d2N = rhs * T.inverse().transpose();
  } else {
    p.d2N.setZero();
  }
  return p;
}

/// Volume quadrature with physical derivatives.
template <ElementKind K>
std::vector<MappedPoint<K>> eval_basis(const ElementCoords<K>& X, int order = -1, bool second = true) {
  const auto rule = tensor_rule(order > 0 ? order : default_volume_order(K));
  std::vector<MappedPoint<K>> out;
  out.reserve(rule.size());
  for (const auto& q : rule) {
    auto p = map_point<K>(X, q.xi, q.eta, second);
    p.weight = q.w * p.detJ;
    out.push_back(std::move(p));
  }
  return out;
}

/// Reference point on local face `face` at face parameter s in [-1, 1]
/// (s = -1 at corner `face`, s = +1 at corner `face+1`).
inline Vec2 face_ref_point(int face, double s) {
  switch (face) {
    case 0:
      return {s, -1.0};
    case 1:
      return {1.0, s};
    case 2:
      return {-s, 1.0};
    case 3:
      return {-1.0, -s};
    default:
      throw TopologyError("local face index out of range");
  }
}

inline Vec2 face_ref_tangent(int face) {
  switch (face) {
    case 0:
      return {1.0, 0.0};
    case 1:
      return {0.0, 1.0};
    case 2:
      return {-1.0, 0.0};
    default:
      return {0.0, -1.0};
  }
}

/// Face quadrature. With `reversed` the face parameter runs backwards so
/// that the two sides of a shared edge produce co-located points.
template <ElementKind K>
std::vector<MappedPoint<K>> eval_face_basis(const ElementCoords<K>& X, int face, bool reversed = false,
                                            int order = kFaceQuadOrder, bool second = true) {
  if (face < 0 || face > 3) throw TopologyError("local face index out of range");
  const auto g = gauss_legendre(order);
  std::vector<MappedPoint<K>> out;
  out.reserve(g.x.size());
  for (std::size_t q = 0; q < g.x.size(); ++q) {
    const double s = reversed ? -g.x[q] : g.x[q];
    const Vec2 r = face_ref_point(face, s);
    auto p = map_point<K>(X, r.x(), r.y(), second);
    const RefShape<K> sh = ref_shape<K>(r.x(), r.y());
    const Vec2 t = (X.transpose() * sh.dN) * face_ref_tangent(face);
    const double len = t.norm();
    p.normal = Vec2(t.y(), -t.x()) / len;
    p.weight = g.w[q] * len;
    out.push_back(std::move(p));
  }
  return out;
}

/// Newton inversion of the isoparametric map; returns false when the
/// iteration fails or the point lies outside the reference square by more
/// than `tol`.
template <ElementKind K>
bool inverse_map(const ElementCoords<K>& X, const Vec2& x, Vec2& ref, double tol = 1e-10) {
  ref.setZero();
  for (int it = 0; it < 30; ++it) {
    const RefShape<K> s = ref_shape<K>(ref.x(), ref.y());
    const Vec2 r = X.transpose() * s.N - x;
    const Mat2 Jm = X.transpose() * s.dN;
    if (std::abs(Jm.determinant()) < 1e-300) return false;
    const Vec2 dr = Jm.inverse() * r;
    ref -= dr;
    if (ref.cwiseAbs().maxCoeff() > 10.0) return false;
    if (dr.norm() < 1e-14) break;
  }
  return ref.cwiseAbs().maxCoeff() <= 1.0 + tol;
}

}  // namespace pfx4
