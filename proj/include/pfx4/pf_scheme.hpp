#pragma once

// Uniform front end over the three phase-field discretizations. The
// phase-field mesh is the displacement (Q4) mesh itself for MIXED_Q4Q4 and
// its Q9 promotion otherwise; corner node ids coincide in both cases.

#include <memory>
#include <string>
#include <variant>

#include "pfx4/pf_cdg.hpp"
#include "pfx4/pf_mixed.hpp"

namespace pfx4 {

enum class Scheme { CDG_Q9, MIXED_Q9Q9, MIXED_Q4Q4 };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::CDG_Q9:
      return "CDG_Q9";
    case Scheme::MIXED_Q9Q9:
      return "MIXED_Q9Q9";
    default:
      return "MIXED_Q4Q4";
  }
}

inline Scheme scheme_from_string(const std::string& s) {
  if (s == "CDG_Q9") return Scheme::CDG_Q9;
  if (s == "MIXED_Q9Q9") return Scheme::MIXED_Q9Q9;
  if (s == "MIXED_Q4Q4") return Scheme::MIXED_Q4Q4;
  throw ConfigError("unknown scheme '" + s + "' (expected CDG_Q9, MIXED_Q9Q9 or MIXED_Q4Q4)");
}

struct PhaseFieldSetup {
  Scheme scheme = Scheme::CDG_Q9;
  PFCoefficients coef;
  double eta0 = 1e-6;
  std::vector<std::string> d2_sets;
  std::vector<std::string> psi_free_sets;
};

class PhaseField {
 public:
  PhaseField(const Mesh& q4, PhaseFieldSetup setup) : setup_(std::move(setup)), q4_(&q4) {
    if (q4.kind != ElementKind::Q4) throw ConfigError("phase field expects the Q4 base mesh");
    if (setup_.scheme == Scheme::MIXED_Q4Q4) {
      pf_mesh_ = &q4;
      impl_ = std::make_unique<MixedSolver<ElementKind::Q4>>(
          q4, MixedOptions{setup_.d2_sets, setup_.psi_free_sets, true}, setup_.coef, setup_.eta0);
    } else {
      owned_ = std::make_unique<Mesh>(promote_q4_to_q9(q4));
      pf_mesh_ = owned_.get();
      if (setup_.scheme == Scheme::CDG_Q9)
        impl_ = std::make_unique<CdgSolver>(*owned_, setup_.d2_sets, setup_.coef, setup_.eta0);
      else
        impl_ = std::make_unique<MixedSolver<ElementKind::Q9>>(
            *owned_, MixedOptions{setup_.d2_sets, setup_.psi_free_sets, true}, setup_.coef, setup_.eta0);
    }
    x_ = VecX::Zero(unknowns());
  }

  Scheme scheme() const { return setup_.scheme; }
  const PhaseFieldSetup& setup() const { return setup_; }
  const Mesh& mesh() const { return *pf_mesh_; }
  bool mixed() const { return setup_.scheme != Scheme::CDG_Q9; }
  int unknowns() const { return static_cast<int>(mixed() ? 2 * pf_mesh_->num_nodes() : pf_mesh_->num_nodes()); }

  std::vector<QuadPoint2D> quadrature() const {
    return setup_.scheme == Scheme::MIXED_Q4Q4 ? tensor_rule(2) : tensor_rule(3);
  }
  HistoryField zero_history() const {
    return HistoryField::zeros(pf_mesh_->num_elements(), static_cast<int>(quadrature().size()));
  }

  /// Solves for the given history; d_bc indexes phase-field mesh nodes.
  const VecX& solve(const HistoryField& H, const std::vector<DirichletValue>& d_bc = {},
                    const SourceFn& source = nullptr) {
    std::visit([&](auto& s) { x_ = s->solve(H, d_bc, source); }, impl_);
    return x_;
  }

  const VecX& raw() const { return x_; }
  void set_raw(const VecX& x) { x_ = x; }
  VecX d() const { return x_.head(static_cast<Eigen::Index>(pf_mesh_->num_nodes())); }
  VecX psi() const {
    if (!mixed()) return VecX();
    return x_.tail(static_cast<Eigen::Index>(pf_mesh_->num_nodes()));
  }

  /// Nodal d on the Q4 base mesh (corner values).
  VecX d_on_q4() const { return x_.head(static_cast<Eigen::Index>(q4_->num_nodes())); }

  /// d at a reference point of an element of the phase-field mesh.
  double d_at(ElemId e, double xi, double eta) const {
    const auto el = pf_mesh_->element(e);
    double v = 0.0;
    if (pf_mesh_->kind == ElementKind::Q4) {
      const auto s = ref_shape<ElementKind::Q4>(xi, eta);
      for (int a = 0; a < 4; ++a) v += s.N(a) * x_(static_cast<Eigen::Index>(el[a]));
    } else {
      const auto s = ref_shape<ElementKind::Q9>(xi, eta);
      for (int a = 0; a < 9; ++a) v += s.N(a) * x_(static_cast<Eigen::Index>(el[a]));
    }
    return v;
  }

  double crack_length(double l0) const {
    return std::visit(
        [&](const auto& s) -> double {
          using T = std::decay_t<decltype(*s)>;
          if constexpr (std::is_same_v<T, CdgSolver>)
            return crack_length_q9(*pf_mesh_, x_, l0);
          else
            return s->crack_length(x_, l0);
        },
        impl_);
  }

  /// Dirichlet list clamping d on every phase-field node matching `pred`.
  std::vector<DirichletValue> clamp(const std::function<bool(const Vec2&)>& pred, double value) const {
    std::vector<DirichletValue> out;
    for (NodeId n = 0; n < pf_mesh_->num_nodes(); ++n)
      if (pred(pf_mesh_->nodes[n])) out.push_back({static_cast<DofId>(n), value});
    return out;
  }

 private:
  PhaseFieldSetup setup_;
  const Mesh* q4_;
  const Mesh* pf_mesh_ = nullptr;
  std::unique_ptr<Mesh> owned_;
  std::variant<std::unique_ptr<CdgSolver>, std::unique_ptr<MixedSolver<ElementKind::Q9>>,
               std::unique_ptr<MixedSolver<ElementKind::Q4>>>
      impl_;
  VecX x_;
};

}  // namespace pfx4
