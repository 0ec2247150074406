#pragma once

// Total-Lagrangian Q4 discretization of the finite-strain momentum balance,
// Newmark time discretization and the Newton loop around it.
//
// Dof layout: 2 * node + component.

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "pfx4/basis.hpp"
#include "pfx4/constitutive.hpp"
#include "pfx4/linsys.hpp"
#include "pfx4/mesh.hpp"

namespace pfx4 {

struct MomentumState {
  VecX u, v, a;
  VecX residual;  // unconstrained residual of the last converged solve

  static MomentumState zeros(std::size_t n_nodes) {
    const auto n = static_cast<Eigen::Index>(2 * n_nodes);
    return {VecX::Zero(n), VecX::Zero(n), VecX::Zero(n), VecX::Zero(n)};
  }
};

struct NewmarkParams {
  double beta = 0.25;
  double gamma = 0.5;
  double dt = 0.0;
  bool dynamic = true;  // false: quasi-static (no inertia, v and a untouched)

  void check() const {
    if (!(beta > 0.0 && beta <= 0.5)) throw ConfigError("newmark: beta must lie in (0, 0.5]");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("newmark: gamma must lie in (0, 1]");
    if (dynamic && !(dt > 0.0)) throw ConfigError("newmark: dt must be positive");
  }
};

/// Acceleration at t+dt from the displacement there.
inline VecX newmark_acceleration(const VecX& u1, const MomentumState& s0, const NewmarkParams& p) {
  const double b = p.beta, dt = p.dt;
  return (u1 - s0.u) / (b * dt * dt) - s0.v / (b * dt) - (1.0 - 2.0 * b) / (2.0 * b) * s0.a;
}

inline VecX newmark_velocity(const VecX& a1, const MomentumState& s0, const NewmarkParams& p) {
  return s0.v + p.dt * ((1.0 - p.gamma) * s0.a + p.gamma * a1);
}

struct DirichletValue {
  DofId dof;
  double value;
};

/// Boundary traction s* on a side-set, entering the residual as (w, F s*).
/// s* = magnitude * N (reference outward normal) or magnitude * direction.
struct TractionLoad {
  std::string side_set;
  double magnitude = 0.0;
  bool along_normal = true;
  Vec2 direction = Vec2::Zero();
};

struct MomentumLoads {
  std::vector<DirichletValue> dirichlet;
  std::vector<TractionLoad> tractions;
  Vec2 body_force = Vec2::Zero();  // per unit reference volume
};

struct NewtonControls {
  double tol_rel = 1e-8;
  double tol_abs = -1.0;  // negative: 1e-10 * E * sqrt(domain area)
  int max_iter = 25;
};

struct NewtonReport {
  int iterations = 0;
  double residual0 = 0.0;
  double residual = 0.0;
};

/// Displacement gradient of a Q4 element at a reference point.
inline Mat2 displacement_gradient_q4(const Mesh& m, ElemId e, const VecX& u, double xi, double eta) {
  const auto p = map_point<ElementKind::Q4>(m.coords<ElementKind::Q4>(e), xi, eta, false);
  const auto el = m.element(e);
  Mat2 G = Mat2::Zero();
  for (int a = 0; a < 4; ++a) {
    const Vec2 ua(u(2 * static_cast<Eigen::Index>(el[a])), u(2 * static_cast<Eigen::Index>(el[a]) + 1));
    G += ua * p.dN.row(a);
  }
  return G;
}

class MomentumModel {
 public:
  using Elem8 = Eigen::Matrix<double, 8, 8>;
  using Vec8 = Eigen::Matrix<double, 8, 1>;

  MomentumModel(const Mesh& q4, MaterialParams mat) : mesh_(&q4), mat_(mat) {
    if (q4.kind != ElementKind::Q4) throw ConfigError("momentum requires a Q4 mesh");
    mat_.check();
    const std::size_t ne = q4.num_elements();
    quad_.resize(ne);
    std::vector<std::vector<DofId>> groups(ne);
    area_ = 0.0;
    for (ElemId e = 0; e < ne; ++e) {
      quad_[e] = eval_basis<ElementKind::Q4>(q4.coords<ElementKind::Q4>(e), 2, false);
      for (const auto& q : quad_[e]) area_ += q.weight;
      const auto d = dofs(e);
      groups[e].assign(d.begin(), d.end());
    }
    pattern_ = build_pattern(num_dofs(), groups);
    SparseSystem M(pattern_);
    for (ElemId e = 0; e < ne; ++e) {
      Elem8 Me = Elem8::Zero();
      for (const auto& q : quad_[e])
        for (int a = 0; a < 4; ++a)
          for (int b = 0; b < 4; ++b) {
            const double m = mat_.rho0 * q.N(a) * q.N(b) * q.weight;
            Me(2 * a, 2 * b) += m;
            Me(2 * a + 1, 2 * b + 1) += m;
          }
      const auto d = dofs(e);
      M.scatter_add(std::span<const DofId>(d), Me);
    }
    mass_ = M.matrix();
  }

  const Mesh& mesh() const { return *mesh_; }
  const MaterialParams& material() const { return mat_; }
  int num_dofs() const { return static_cast<int>(2 * mesh_->num_nodes()); }
  double domain_area() const { return area_; }
  const SpMat& mass() const { return mass_; }
  SparseSystem make_system() const { return SparseSystem(pattern_); }

  std::array<DofId, 8> dofs(ElemId e) const {
    const auto el = mesh_->element(e);
    std::array<DofId, 8> d{};
    for (int a = 0; a < 4; ++a) {
      d[2 * a] = static_cast<DofId>(2 * el[a]);
      d[2 * a + 1] = static_cast<DofId>(2 * el[a] + 1);
    }
    return d;
  }

  /// Internal force (dE, S) and, when K is given, the tangent
  /// (grad w, S grad du) + (dE, C : dE) scattered into K. `d` holds nodal
  /// phase-field values on this mesh's nodes.
  void internal_force(const VecX& u, const VecX& d, VecX& f, SparseSystem* K) const {
    struct Local {
      Vec8 f;
      Elem8 k;
    };
    f = VecX::Zero(num_dofs());
    const bool tangent = K != nullptr;
    deterministic_loop<Local>(
        mesh_->num_elements(), worker_count(),
        [&](std::size_t e, Local& out) { element(e, u, d, tangent, out.f, out.k); },
        [&](std::size_t e, const Local& out) {
          const auto dd = dofs(e);
          for (int i = 0; i < 8; ++i) f(dd[i]) += out.f(i);
          if (tangent) K->scatter_add(std::span<const DofId>(dd), out.k);
        });
  }

  /// (w, b*) + (w, F s*) on the traction side-sets.
  VecX external_force(const VecX& u, const MomentumLoads& loads) const {
    VecX f = VecX::Zero(num_dofs());
    if (loads.body_force.squaredNorm() > 0.0) {
      for (ElemId e = 0; e < mesh_->num_elements(); ++e) {
        const auto dd = dofs(e);
        for (const auto& q : quad_[e])
          for (int a = 0; a < 4; ++a) {
            f(dd[2 * a]) += q.N(a) * loads.body_force.x() * q.weight;
            f(dd[2 * a + 1]) += q.N(a) * loads.body_force.y() * q.weight;
          }
      }
    }
    for (const auto& t : loads.tractions) {
      if (t.magnitude == 0.0) continue;
      for (const auto& fr : mesh_->side_set(t.side_set)) {
        const auto X = mesh_->coords<ElementKind::Q4>(fr.elem);
        const auto dd = dofs(fr.elem);
        for (const auto& q : eval_face_basis<ElementKind::Q4>(X, fr.face, false, 2, false)) {
          Mat2 F = Mat2::Identity();
          for (int a = 0; a < 4; ++a) F += Vec2(u(dd[2 * a]), u(dd[2 * a + 1])) * q.dN.row(a);
          const Vec2 s = t.magnitude * (t.along_normal ? q.normal : t.direction);
          const Vec2 tr = F * s;
          for (int a = 0; a < 4; ++a) {
            f(dd[2 * a]) += q.N(a) * tr.x() * q.weight;
            f(dd[2 * a + 1]) += q.N(a) * tr.y() * q.weight;
          }
        }
      }
    }
    return f;
  }

  /// Unconstrained residual M a + f_int - f_ext at trial u1, and optionally
  /// the Jacobian M/(beta dt^2) + K_t (traction linearization omitted).
  void residual_and_jacobian(const MomentumState& prev, const VecX& u1, const VecX& d, const NewmarkParams& nm,
                             const MomentumLoads& loads, VecX& R, SparseSystem* J) const {
    if (J) J->zero();
    VecX fint;
    internal_force(u1, d, fint, J);
    R = fint - external_force(u1, loads);
    if (nm.dynamic) {
      R += mass_ * newmark_acceleration(u1, prev, nm);
      if (J) {
        const double c = 1.0 / (nm.beta * nm.dt * nm.dt);
        double* v = J->matrix().valuePtr();
        const double* mv = mass_.valuePtr();
        for (Eigen::Index k = 0; k < mass_.nonZeros(); ++k) v[k] += c * mv[k];
      }
    }
  }

  double default_tol_abs() const { return 1e-10 * mat_.E_young * std::sqrt(area_); }

  /// Newton iteration for the state at the end of the step. Throws
  /// NonConvergence or InversionError; `next` is only written on success.
  NewtonReport newton_solve(const MomentumState& prev, MomentumState& next, const VecX& d, const NewmarkParams& nm,
                            const MomentumLoads& loads, LinearSolver& solver,
                            const NewtonControls& ctl = NewtonControls{}) const {
    nm.check();
    const double tol_abs = ctl.tol_abs >= 0.0 ? ctl.tol_abs : default_tol_abs();
    VecX u = prev.u;
    for (const auto& bc : loads.dirichlet) u(bc.dof) = bc.value;
    SparseSystem J = make_system();
    VecX R;
    NewtonReport rep;
    for (int it = 0; it <= ctl.max_iter; ++it) {
      residual_and_jacobian(prev, u, d, nm, loads, R, &J);
      VecX Rf = R;
      for (const auto& bc : loads.dirichlet) Rf(bc.dof) = 0.0;
      const double r = Rf.norm();
      if (!std::isfinite(r)) throw NonConvergence("momentum residual is not finite");
      if (it == 0) rep.residual0 = r;
      rep.residual = r;
      rep.iterations = it;
      if (r <= tol_abs || r <= ctl.tol_rel * rep.residual0) {
        next.u = u;
        if (nm.dynamic) {
          next.a = newmark_acceleration(u, prev, nm);
          next.v = newmark_velocity(next.a, prev, nm);
        } else {
          next.a = prev.a;
          next.v = prev.v;
        }
        next.residual = R;
        return rep;
      }
      if (it == ctl.max_iter) break;
      J.rhs() = -Rf;
      J.clear_constraints();
      for (const auto& bc : loads.dirichlet) J.constrain(bc.dof, 0.0);
      J.apply_constraints();
      u += solver.solve(J);
    }
    throw NonConvergence("Newton did not converge in " + std::to_string(ctl.max_iter) + " iterations (residual " +
                         std::to_string(rep.residual) + ", initial " + std::to_string(rep.residual0) + ")");
  }

  /// Solves M a0 = f_ext - f_int for the free dofs; constrained entries of
  /// a0 are set to the given values.
  VecX initial_acceleration(const VecX& u0, const VecX& d, const MomentumLoads& loads,
                            const std::vector<DirichletValue>& accel_bc, LinearSolver& solver) const {
    VecX fint;
    internal_force(u0, d, fint, nullptr);
    SparseSystem S(mass_);
    S.rhs() = external_force(u0, loads) - fint;
    for (const auto& bc : loads.dirichlet) S.constrain(bc.dof, 0.0);
    for (const auto& bc : accel_bc) S.constrain(bc.dof, bc.value);
    if (mat_.rho0 == 0.0) return VecX::Zero(num_dofs());
    S.apply_constraints();
    return solver.solve(S);
  }

  /// Support force on the nodes of a side-set: the sum of the unconstrained
  /// residual over those nodes (force the support exerts on the body).
  Vec2 reaction_force(const MomentumState& s, const std::string& side_set) const {
    Vec2 r = Vec2::Zero();
    for (NodeId n : mesh_->side_set_nodes(side_set)) {
      r.x() += s.residual(static_cast<Eigen::Index>(2 * n));
      r.y() += s.residual(static_cast<Eigen::Index>(2 * n + 1));
    }
    return r;
  }

  double strain_energy(const VecX& u, const VecX& d) const {
    double w = 0.0;
    for (ElemId e = 0; e < mesh_->num_elements(); ++e) {
      const auto el = mesh_->element(e);
      for (const auto& q : quad_[e]) {
        Mat2 G = Mat2::Zero();
        double dq = 0.0;
        for (int a = 0; a < 4; ++a) {
          const auto n = static_cast<Eigen::Index>(el[a]);
          G += Vec2(u(2 * n), u(2 * n + 1)) * q.dN.row(a);
          dq += q.N(a) * d(n);
        }
        const auto kin = KinematicState::plane_strain(Mat2::Identity() + G);
        if (!(kin.J > 0.0)) throw InversionError("material point with J <= 0");
        w += stored_energy(mat_, kin.C, dq) * q.weight;
      }
    }
    return w;
  }

  double kinetic_energy(const VecX& v) const { return 0.5 * v.dot(mass_ * v); }

 private:
  void element(ElemId e, const VecX& u, const VecX& d, bool tangent, Vec8& fe, Elem8& ke) const {
    fe.setZero();
    ke.setZero();
    const auto el = mesh_->element(e);
    Eigen::Matrix<double, 4, 2> ue;
    Eigen::Vector4d de;
    for (int a = 0; a < 4; ++a) {
      const auto n = static_cast<Eigen::Index>(el[a]);
      ue(a, 0) = u(2 * n);
      ue(a, 1) = u(2 * n + 1);
      de(a) = d(n);
    }
    for (const auto& q : quad_[e]) {
      const Mat2 F2 = Mat2::Identity() + ue.transpose() * q.dN;
      const auto kin = KinematicState::plane_strain(F2);
      const double dq = q.N.dot(de);
      const auto st = evaluate_stress_tangent(mat_, kin, dq, tangent);
      const Mat2 S2 = st.S.topLeftCorner<2, 2>();
      const Mat2 P = F2 * S2;
      for (int a = 0; a < 4; ++a) {
        const Vec2 g = P * q.dN.row(a).transpose();
        fe(2 * a) += g.x() * q.weight;
        fe(2 * a + 1) += g.y() * q.weight;
      }
      if (!tangent) continue;
      // Engineering-strain B (rows 11, 22, 33, 2*12) against tensor components.
      Eigen::Matrix<double, 4, 8> B = Eigen::Matrix<double, 4, 8>::Zero();
      for (int a = 0; a < 4; ++a) {
        const double nx = q.dN(a, 0), ny = q.dN(a, 1);
        for (int i = 0; i < 2; ++i) {
          B(0, 2 * a + i) = F2(i, 0) * nx;
          B(1, 2 * a + i) = F2(i, 1) * ny;
          B(3, 2 * a + i) = F2(i, 0) * ny + F2(i, 1) * nx;
        }
      }
      ke.noalias() += B.transpose() * st.C_tensor * B * q.weight;
      const Eigen::Matrix<double, 4, 4> G = q.dN * S2 * q.dN.transpose() * q.weight;
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          ke(2 * a, 2 * b) += G(a, b);
          ke(2 * a + 1, 2 * b + 1) += G(a, b);
        }
    }
  }

  const Mesh* mesh_;
  MaterialParams mat_;
  std::vector<std::vector<MappedPoint<ElementKind::Q4>>> quad_;
  SpMat pattern_;
  SpMat mass_;
  double area_ = 0.0;
};

}  // namespace pfx4
