#pragma once

// Mixed (d, psi) split of the fourth-order phase-field equation with equal
// order interpolation (Q9Q9 or Q4Q4), psi = Lap d / lambda0:
//
//   (grad c, grad d) + l0 (c, psi) + (a2/a1) l0 <c, grad psi . N>_R2 = 0
//   -l0 a2 (grad chi, grad psi) + l0 a1 (chi, psi) + (a0 + 2(1-eta0) H)(chi, d)
//       = (chi, 2(1-eta0) H) [+ (chi, f)]
//
// with l0 = lambda0 and psi = 0 on the exterior boundary except on the
// `psi_free` sides. Unknowns: all d first, then all psi.

#include <set>
#include <string>
#include <vector>

#include "pfx4/pf_cdg.hpp"

namespace pfx4 {

struct MixedOptions {
  std::vector<std::string> d2_sets;        // crack-insulated sides (no Robin term)
  std::vector<std::string> psi_free_sets;  // sides without the psi = 0 condition
  bool robin = true;                       // assemble the Robin term on the remaining sides
};

template <ElementKind K>
class MixedSolver {
 public:
  static constexpr int NN = nodes_of<K>;
  static constexpr int kQuadOrder = K == ElementKind::Q4 ? 2 : 3;
  static constexpr int kQP = kQuadOrder * kQuadOrder;
  using ElemMat = Eigen::Matrix<double, 2 * NN, 2 * NN>;

  MixedSolver(const Mesh& m, MixedOptions opt, PFCoefficients c, double eta0)
      : mesh_(&m), opt_(std::move(opt)), coef_(c), eta0_(eta0), n_(static_cast<int>(m.num_nodes())) {
    if (m.kind != K) throw ConfigError("mixed scheme: mesh kind does not match the element");
    coef_.check();
    const std::size_t ne = m.num_elements();
    std::vector<std::vector<DofId>> groups;
    for (ElemId e = 0; e < ne; ++e) groups.push_back(element_dofs(e));
    K0_ = SparseSystem(build_pattern(2 * n_, groups));

    qN_.resize(ne);
    qx_.resize(ne);
    const double l0 = coef_.lambda0;
    for (ElemId e = 0; e < ne; ++e) {
      ElemMat k = ElemMat::Zero();
      const auto pts = eval_basis<K>(m.template coords<K>(e), kQuadOrder, false);
      for (int q = 0; q < kQP; ++q) {
        const auto& p = pts[static_cast<std::size_t>(q)];
        const Eigen::Matrix<double, NN, NN> G = p.dN * p.dN.transpose() * p.weight;
        const Eigen::Matrix<double, NN, NN> M = p.N * p.N.transpose() * p.weight;
        k.template topLeftCorner<NN, NN>() += G;
        k.template topRightCorner<NN, NN>() += l0 * M;
        k.template bottomRightCorner<NN, NN>() += -l0 * coef_.alpha2 * G + l0 * coef_.alpha1 * M;
        k.template bottomLeftCorner<NN, NN>() += coef_.alpha0 * M;
        qN_[e][q].template head<NN>() = p.N;
        qN_[e][q](NN) = p.weight;
        qx_[e][q] = p.x;
      }
      const auto dd = element_dofs(e);
      K0_.scatter_add(std::span<const DofId>(dd), k);
    }

    std::set<FaceRef> d2, free;
    for (const auto& s : opt_.d2_sets)
      for (const auto& f : m.side_set(s)) d2.insert(f);
    for (const auto& s : opt_.psi_free_sets)
      for (const auto& f : m.side_set(s)) free.insert(f);
    std::set<NodeId> fixed;
    for (const auto& fr : boundary_faces(m)) {
      if (opt_.robin && !d2.count(fr)) add_robin(fr);
      if (!free.count(fr))
        for (NodeId v : m.face_nodes(fr.elem, fr.face)) fixed.insert(v);
    }
    psi_fixed_.assign(fixed.begin(), fixed.end());
  }

  const Mesh& mesh() const { return *mesh_; }
  int qp_per_element() const { return kQP; }
  HistoryField zero_history() const { return HistoryField::zeros(mesh_->num_elements(), kQP); }
  static std::vector<QuadPoint2D> quadrature() { return tensor_rule(kQuadOrder); }
  const std::vector<NodeId>& psi_constrained_nodes() const { return psi_fixed_; }
  int num_nodes() const { return n_; }

  SparseSystem assemble(const HistoryField& H, const SourceFn& source = nullptr) const {
    if (H.qp_per_element != kQP || H.values.size() != mesh_->num_elements() * kQP)
      throw ConfigError("history field does not match the mixed quadrature");
    SparseSystem s = K0_;
    const double c2 = 2.0 * (1.0 - eta0_);
    for (ElemId e = 0; e < mesh_->num_elements(); ++e) {
      const auto el = mesh_->element(e);
      for (int q = 0; q < kQP; ++q) {
        const auto N = qN_[e][q].template head<NN>();
        const double w = qN_[e][q](NN);
        const double h = H.at(e, q);
        double load = c2 * h;
        if (source) load += source(qx_[e][q]);
        for (int a = 0; a < NN; ++a) {
          const auto row = static_cast<DofId>(n_ + static_cast<int>(el[a]));
          if (load != 0.0) s.rhs()(row) += load * N(a) * w;
          if (h != 0.0)
            for (int b = 0; b < NN; ++b) s.add(row, static_cast<DofId>(el[b]), c2 * h * N(a) * N(b) * w);
        }
      }
    }
    return s;
  }

  /// Returns the full (d, psi) vector.
  VecX solve(const HistoryField& H, const std::vector<DirichletValue>& d_bc = {}, const SourceFn& source = nullptr) {
    SparseSystem s = assemble(H, source);
    for (NodeId v : psi_fixed_) s.constrain(static_cast<DofId>(n_ + static_cast<int>(v)), 0.0);
    // A prescribed d keeps its own (d, psi) relation and gives up the psi
    // equation of its node instead: the reaction of a clamp is a jump in
    // grad psi, while d itself stays C1 across the clamped line.
    for (const auto& bc : d_bc) {
      const DofId p = bc.dof + n_;
      if (bc.dof < n_ && !s.is_constrained(p)) s.copy_row(p, bc.dof);
    }
    for (const auto& bc : d_bc) s.constrain(bc.dof, bc.value);
    s.apply_constraints();
    return solver_.solve(s);
  }

  VecX extract_d(const VecX& x) const { return x.head(n_); }
  VecX extract_psi(const VecX& x) const { return x.tail(n_); }

  /// Regularized crack length with Lap d taken as lambda0 psi.
  double crack_length(const VecX& x, double l0) const {
    double g = 0.0;
    const double lam = coef_.lambda0;
    for (ElemId e = 0; e < mesh_->num_elements(); ++e) {
      const auto el = mesh_->element(e);
      Eigen::Matrix<double, NN, 1> de, pe;
      for (int a = 0; a < NN; ++a) {
        de(a) = x(static_cast<Eigen::Index>(el[a]));
        pe(a) = x(n_ + static_cast<Eigen::Index>(el[a]));
      }
      for (const auto& p : eval_basis<K>(mesh_->template coords<K>(e), 4, false)) {
        const double v = p.N.dot(de);
        const Vec2 gr = p.dN.transpose() * de;
        const double lap = lam * p.N.dot(pe);
        g += (v * v + 2 * l0 * l0 * gr.squaredNorm() + l0 * l0 * l0 * l0 * lap * lap) / (4 * l0) * p.weight;
      }
    }
    return g;
  }

  std::vector<DofId> element_dofs(ElemId e) const {
    const auto el = mesh_->element(e);
    std::vector<DofId> d(2 * NN);
    for (int a = 0; a < NN; ++a) {
      d[a] = static_cast<DofId>(el[a]);
      d[NN + a] = static_cast<DofId>(n_ + static_cast<int>(el[a]));
    }
    return d;
  }

 private:
  void add_robin(const FaceRef& fr) {
    const double c = coef_.alpha2 / coef_.alpha1 * coef_.lambda0;
    const auto el = mesh_->element(fr.elem);
    for (const auto& p : eval_face_basis<K>(mesh_->template coords<K>(fr.elem), fr.face, false, kFaceQuadOrder, false)) {
      const Eigen::Matrix<double, NN, 1> gn = p.dN * p.normal;
      for (int a = 0; a < NN; ++a)
        for (int b = 0; b < NN; ++b)
          if (p.N(a) * gn(b) != 0.0)
            K0_.add(static_cast<DofId>(el[a]), static_cast<DofId>(n_ + static_cast<int>(el[b])),
                    c * p.N(a) * gn(b) * p.weight);
    }
  }

  const Mesh* mesh_;
  MixedOptions opt_;
  PFCoefficients coef_;
  double eta0_;
  int n_;
  SparseSystem K0_;
  std::vector<std::array<Eigen::Matrix<double, NN + 1, 1>, kQP>> qN_;
  std::vector<std::array<Vec2, kQP>> qx_;
  std::vector<NodeId> psi_fixed_;
  LinearSolver solver_{LinearSolverKind::Direct, false};
};

}  // namespace pfx4
