#pragma once

// Fourth-order phase-field equation on Q9 with C0 Lagrange functions and
// weakly enforced C1 continuity (interior-penalty edge terms).
//
//   (Lap c, a2 Lap d) - a1 (grad c, grad d) + (c, (a0 + 2(1-eta0) H) d)
//   - <[grad c], a2 {Lap d}> - <{Lap c}, a2 [grad d]> + (b/<h>) <[grad c], [grad d]>
//   = (c, 2(1-eta0) H) [+ (c, f)]
//
// Edge terms run over interior edges and the one-sided crack-insulated
// boundary edges, where [v] = v.N and {l} = l.

#include <functional>
#include <string>
#include <vector>

#include "pfx4/basis.hpp"
#include "pfx4/constitutive.hpp"
#include "pfx4/linsys.hpp"
#include "pfx4/mesh.hpp"
#include "pfx4/momentum.hpp"

namespace pfx4 {

struct PFCoefficients {
  double alpha2 = 0.0;
  double alpha1 = 0.0;
  double alpha0 = 0.0;
  double beta_s2 = 0.0;
  double lambda0 = 1.0;

  static PFCoefficients from(const MaterialParams& m, double beta_s2, double lambda0 = 1.0) {
    PFCoefficients c;
    c.alpha2 = 0.5 * m.Gc * m.l0 * m.l0 * m.l0;
    c.alpha1 = -m.Gc * m.l0;
    c.alpha0 = m.Gc / (2.0 * m.l0);
    c.beta_s2 = beta_s2;
    c.lambda0 = lambda0;
    return c;
  }

  void check() const {
    if (!(alpha2 > 0.0 && alpha1 < 0.0 && alpha0 > 0.0)) throw ConfigError("phase-field coefficients out of range");
    if (!(beta_s2 > 0.0)) throw ConfigError("beta_s2 must be positive");
    if (lambda0 == 0.0) throw ConfigError("lambda0 must be nonzero");
  }
};

/// Max tensile energy per element and quadrature point.
struct HistoryField {
  int qp_per_element = 0;
  std::vector<double> values;

  static HistoryField zeros(std::size_t n_elements, int qp) {
    return {qp, std::vector<double>(n_elements * static_cast<std::size_t>(qp), 0.0)};
  }
  double& at(ElemId e, int q) { return values[e * static_cast<std::size_t>(qp_per_element) + static_cast<std::size_t>(q)]; }
  double at(ElemId e, int q) const {
    return values[e * static_cast<std::size_t>(qp_per_element) + static_cast<std::size_t>(q)];
  }
};

using SourceFn = std::function<double(const Vec2&)>;

// Jump and average operators on co-located face data.
inline double jump(const Vec2& v_plus, const Vec2& v_minus, const Vec2& n_plus, const Vec2& n_minus) {
  return v_plus.dot(n_plus) + v_minus.dot(n_minus);
}
inline Vec2 jump(double l_plus, double l_minus, const Vec2& n_plus, const Vec2& n_minus) {
  return l_plus * n_plus + l_minus * n_minus;
}
template <class T>
T average(const T& plus, const T& minus) {
  return 0.5 * (plus + minus);
}

/// Regularized crack length of a Q9 phase field:
/// int 1/(4 l0) (d^2 + 2 l0^2 |grad d|^2 + l0^4 (Lap d)^2).
inline double crack_length_q9(const Mesh& q9, const VecX& d, double l0) {
  double g = 0.0;
  for (ElemId e = 0; e < q9.num_elements(); ++e) {
    const auto el = q9.element(e);
    Eigen::Matrix<double, 9, 1> de;
    for (int a = 0; a < 9; ++a) de(a) = d(static_cast<Eigen::Index>(el[a]));
    for (const auto& p : eval_basis<ElementKind::Q9>(q9.coords<ElementKind::Q9>(e), 4, true)) {
      const double v = p.N.dot(de);
      const Vec2 gr = p.dN.transpose() * de;
      const double lap = (p.d2N.col(0) + p.d2N.col(1)).dot(de);
      g += (v * v + 2 * l0 * l0 * gr.squaredNorm() + l0 * l0 * l0 * l0 * lap * lap) / (4 * l0) * p.weight;
    }
  }
  return g;
}

class CdgSolver {
 public:
  static constexpr int kQuadOrder = 3;
  static constexpr int kQP = kQuadOrder * kQuadOrder;

  CdgSolver(const Mesh& q9, const std::vector<std::string>& d2_sets, PFCoefficients c, double eta0)
      : mesh_(&q9), coef_(c), eta0_(eta0), edges_(build_edge_topology(q9, d2_sets)) {
    if (q9.kind != ElementKind::Q9) throw ConfigError("C/DG scheme requires a Q9 mesh");
    coef_.check();
    const std::size_t ne = q9.num_elements();
    std::vector<std::vector<DofId>> groups;
    groups.reserve(ne + edges_.size());
    for (ElemId e = 0; e < ne; ++e) groups.push_back(element_dofs(e));
    for (const auto& ed : edges_) groups.push_back(edge_dofs(ed));
    K0_ = SparseSystem(build_pattern(static_cast<int>(q9.num_nodes()), groups));

    // H-independent operator and the per-point data for the H terms.
    qN_.resize(ne);
    qx_.resize(ne);
    struct VolLocal {
      Eigen::Matrix<double, 9, 9> k;
      std::array<Eigen::Matrix<double, 10, 1>, kQP> nw;
      std::array<Vec2, kQP> x;
    };
    deterministic_loop<VolLocal>(
        ne, worker_count(),
        [&](std::size_t e, VolLocal& out) {
          out.k.setZero();
          const auto pts = eval_basis<ElementKind::Q9>(q9.coords<ElementKind::Q9>(e), kQuadOrder, true);
          for (int q = 0; q < kQP; ++q) {
            const auto& p = pts[static_cast<std::size_t>(q)];
            const Eigen::Matrix<double, 9, 1> L = p.d2N.col(0) + p.d2N.col(1);
            out.k.noalias() += (coef_.alpha2 * L * L.transpose() - coef_.alpha1 * p.dN * p.dN.transpose() +
                                coef_.alpha0 * p.N * p.N.transpose()) *
                               p.weight;
            out.nw[q].head<9>() = p.N;
            out.nw[q](9) = p.weight;
            out.x[q] = p.x;
          }
        },
        [&](std::size_t e, const VolLocal& out) {
          const auto dd = element_dofs(e);
          K0_.scatter_add(std::span<const DofId>(dd), out.k);
          qN_[e] = out.nw;
          qx_[e] = out.x;
        });
    struct EdgeLocal {
      MatX k;
    };
    deterministic_loop<EdgeLocal>(
        edges_.size(), worker_count(), [&](std::size_t i, EdgeLocal& out) { out.k = edge_matrix(edges_[i]); },
        [&](std::size_t i, const EdgeLocal& out) {
          const auto dd = edge_dofs(edges_[i]);
          K0_.scatter_add(std::span<const DofId>(dd), out.k);
        });
  }

  const Mesh& mesh() const { return *mesh_; }
  const std::vector<InteriorEdge>& edges() const { return edges_; }
  const PFCoefficients& coefficients() const { return coef_; }
  int qp_per_element() const { return kQP; }
  HistoryField zero_history() const { return HistoryField::zeros(mesh_->num_elements(), kQP); }

  /// Reference coordinates of the quadrature points where H lives.
  static std::vector<QuadPoint2D> quadrature() { return tensor_rule(kQuadOrder); }

  /// Full system (before essential conditions) for a given history field.
  SparseSystem assemble(const HistoryField& H, const SourceFn& source = nullptr) const {
    if (H.qp_per_element != kQP || H.values.size() != mesh_->num_elements() * kQP)
      throw ConfigError("history field does not match the C/DG quadrature");
    SparseSystem s = K0_;
    const double c2 = 2.0 * (1.0 - eta0_);
    for (ElemId e = 0; e < mesh_->num_elements(); ++e) {
      const auto dd = element_dofs(e);
      Eigen::Matrix<double, 9, 9> k = Eigen::Matrix<double, 9, 9>::Zero();
      Eigen::Matrix<double, 9, 1> f = Eigen::Matrix<double, 9, 1>::Zero();
      bool any = false;
      for (int q = 0; q < kQP; ++q) {
        const auto N = qN_[e][q].head<9>();
        const double w = qN_[e][q](9);
        const double h = H.at(e, q);
        if (h != 0.0) {
          k.noalias() += c2 * h * w * N * N.transpose();
          f.noalias() += c2 * h * w * N;
          any = true;
        }
        if (source) {
          f.noalias() += source(qx_[e][q]) * w * N;
          any = true;
        }
      }
      if (!any) continue;
      s.scatter_add(std::span<const DofId>(dd), k);
      s.scatter_add_rhs(std::span<const DofId>(dd), f);
    }
    return s;
  }

  VecX solve(const HistoryField& H, const std::vector<DirichletValue>& d_bc = {}, const SourceFn& source = nullptr) {
    SparseSystem s = assemble(H, source);
    for (const auto& bc : d_bc) s.constrain(bc.dof, bc.value);
    s.apply_constraints();
    return solver_.solve(s);
  }

  /// Sum over edges of int [grad d]^2 and, on interior edges, int (Lap+ - Lap-)^2.
  std::pair<double, double> jump_integrals(const VecX& d) const {
    double jg = 0.0, jl = 0.0;
    for (const auto& ed : edges_) {
      const auto Xp = mesh_->coords<ElementKind::Q9>(ed.elem_plus);
      const auto dp = local_values(ed.elem_plus, d);
      const auto fp = eval_face_basis<ElementKind::Q9>(Xp, ed.local_face_plus, false, kFaceQuadOrder, true);
      if (ed.one_sided()) {
        for (const auto& p : fp) {
          const double j = (p.dN.transpose() * dp).dot(p.normal);
          jg += j * j * p.weight;
        }
        continue;
      }
      const auto Xm = mesh_->coords<ElementKind::Q9>(ed.elem_minus);
      const auto dm = local_values(ed.elem_minus, d);
      const auto fm = eval_face_basis<ElementKind::Q9>(Xm, ed.local_face_minus, true, kFaceQuadOrder, true);
      for (std::size_t q = 0; q < fp.size(); ++q) {
        const double j = jump(Vec2(fp[q].dN.transpose() * dp), Vec2(fm[q].dN.transpose() * dm), fp[q].normal,
                              fm[q].normal);
        const double lp = (fp[q].d2N.col(0) + fp[q].d2N.col(1)).dot(dp);
        const double lm = (fm[q].d2N.col(0) + fm[q].d2N.col(1)).dot(dm);
        jg += j * j * fp[q].weight;
        jl += (lp - lm) * (lp - lm) * fp[q].weight;
      }
    }
    return {jg, jl};
  }

  std::vector<DofId> element_dofs(ElemId e) const {
    const auto el = mesh_->element(e);
    return {el.begin(), el.end()};
  }

  /// 18 entries (plus then minus element) for interior edges, 9 for
  /// one-sided edges; shared nodes appear twice.
  std::vector<DofId> edge_dofs(const InteriorEdge& ed) const {
    auto d = element_dofs(ed.elem_plus);
    if (!ed.one_sided()) {
      const auto m = element_dofs(ed.elem_minus);
      d.insert(d.end(), m.begin(), m.end());
    }
    return d;
  }

  MatX edge_matrix(const InteriorEdge& ed) const {
    const double a2 = coef_.alpha2, pen = coef_.beta_s2 / ed.h_avg;
    const auto Xp = mesh_->coords<ElementKind::Q9>(ed.elem_plus);
    const auto fp = eval_face_basis<ElementKind::Q9>(Xp, ed.local_face_plus, false, kFaceQuadOrder, true);
    const int n = ed.one_sided() ? 9 : 18;
    MatX k = MatX::Zero(n, n);
    VecX jg(n), avg(n);
    std::vector<MappedPoint<ElementKind::Q9>> fm;
    if (!ed.one_sided())
      fm = eval_face_basis<ElementKind::Q9>(mesh_->coords<ElementKind::Q9>(ed.elem_minus), ed.local_face_minus, true,
                                            kFaceQuadOrder, true);
    for (std::size_t q = 0; q < fp.size(); ++q) {
      const auto& p = fp[q];
      jg.head<9>() = p.dN * p.normal;
      avg.head<9>() = p.d2N.col(0) + p.d2N.col(1);
      if (!ed.one_sided()) {
        const auto& m = fm[q];
        jg.tail<9>() = m.dN * m.normal;
        avg.tail<9>() = 0.5 * (m.d2N.col(0) + m.d2N.col(1));
        avg.head<9>() *= 0.5;
      }
      k.noalias() += (-a2 * (jg * avg.transpose() + avg * jg.transpose()) + pen * jg * jg.transpose()) * p.weight;
    }
    return k;
  }

 private:
  Eigen::Matrix<double, 9, 1> local_values(ElemId e, const VecX& d) const {
    Eigen::Matrix<double, 9, 1> v;
    const auto el = mesh_->element(e);
    for (int a = 0; a < 9; ++a) v(a) = d(static_cast<Eigen::Index>(el[a]));
    return v;
  }

  const Mesh* mesh_;
  PFCoefficients coef_;
  double eta0_;
  std::vector<InteriorEdge> edges_;
  SparseSystem K0_;
  std::vector<std::array<Eigen::Matrix<double, 10, 1>, kQP>> qN_;
  std::vector<std::array<Vec2, kQP>> qx_;
  LinearSolver solver_{LinearSolverKind::Direct, true};
};

}  // namespace pfx4
