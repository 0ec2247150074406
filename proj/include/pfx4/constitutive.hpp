#pragma once

// Volumetric/deviatoric hyperelasticity with tension-only degradation of
// the volumetric part, quadratic degradation, second Piola-Kirchhoff
// stress, consistent elasticity tensor, and the history variable.
//
// Plane strain is handled by carrying full 3x3 tensors with F33 = 1.

#include <algorithm>
#include <array>
#include <cmath>

#include "pfx4/core.hpp"

namespace pfx4 {

struct MaterialParams {
  double E_young = 210.0e3;  // MPa
  double nu = 0.3;
  double rho0 = 8.0e-9;      // Mg/mm^3
  double Gc = 2.7;           // mJ/mm^2
  double l0 = 3.75e-3;       // mm
  double eta0 = 1.0e-6;
  double rho_mu = 0.0;       // micro-inertia, always 0 here
  double zeta_mu = 0.0;      // micro-damping, always 0 here

  double kappa() const { return E_young / (3.0 * (1.0 - 2.0 * nu)); }
  double mu() const { return E_young / (2.0 * (1.0 + nu)); }

  void check() const {
    if (!(E_young > 0.0)) throw ConfigError("material: E must be positive");
    if (!(nu >= 0.0 && nu < 0.5)) throw ConfigError("material: nu must lie in [0, 0.5)");
    if (!(Gc > 0.0)) throw ConfigError("material: Gc must be positive");
    if (!(l0 > 0.0)) throw ConfigError("material: l0 must be positive");
    if (!(eta0 > 0.0 && eta0 < 1.0)) throw ConfigError("material: eta0 must lie in (0, 1)");
    if (!(rho0 >= 0.0)) throw ConfigError("material: rho0 must be non-negative");
  }
};

struct KinematicState {
  Mat3 F = Mat3::Identity();
  double J = 1.0;
  Mat3 C = Mat3::Identity();
  Mat3 Cbar = Mat3::Identity();
  Mat3 E_strain = Mat3::Zero();

  static KinematicState from_F(const Mat3& F) {
    KinematicState k;
    k.F = F;
    k.J = F.determinant();
    k.C = F.transpose() * F;
    k.Cbar = std::pow(std::abs(k.J), -2.0 / 3.0) * k.C;
    k.E_strain = 0.5 * (k.C - Mat3::Identity());
    return k;
  }

  /// State known only through C (F left as the identity).
  static KinematicState from_C(const Mat3& C) {
    KinematicState k;
    k.C = C;
    k.J = std::sqrt(C.determinant());
    k.Cbar = std::pow(k.J, -2.0 / 3.0) * C;
    k.E_strain = 0.5 * (C - Mat3::Identity());
    return k;
  }

  /// In-plane deformation gradient, F33 = 1.
  static KinematicState plane_strain(const Mat2& F2) {
    Mat3 F = Mat3::Identity();
    F.topLeftCorner<2, 2>() = F2;
    return from_F(F);
  }
};

/// Full 4th-order tensor, index (i, j, k, l) -> ((i*3 + j)*3 + k)*3 + l.
struct Tensor4 {
  std::array<double, 81> v{};
  double& operator()(int i, int j, int k, int l) { return v[((i * 3 + j) * 3 + k) * 3 + l]; }
  double operator()(int i, int j, int k, int l) const { return v[((i * 3 + j) * 3 + k) * 3 + l]; }
};

/// Voigt-like index pairs for the plane-strain layout: 11, 22, 33, 12.
inline constexpr std::array<std::array<int, 2>, 4> kVoigtPairs{{{0, 0}, {1, 1}, {2, 2}, {0, 1}}};

using Voigt4 = Eigen::Matrix4d;

inline Voigt4 to_voigt(const Tensor4& t) {
  Voigt4 m;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b)
      m(a, b) = t(kVoigtPairs[a][0], kVoigtPairs[a][1], kVoigtPairs[b][0], kVoigtPairs[b][1]);
  return m;
}

struct StressTangent {
  Mat3 S = Mat3::Zero();
  Voigt4 C_tensor = Voigt4::Zero();  // components, not engineering-scaled
  double psi_plus = 0.0;             // U+(J) + Wbar(Cbar), undegraded
  double energy = 0.0;               // degraded stored energy density
};

struct Degradation {
  double g;
  double g_prime;
};

inline Degradation degradation(double d, double eta0) {
  return {(1.0 - eta0) * (1.0 - d) * (1.0 - d) + eta0, -2.0 * (1.0 - eta0) * (1.0 - d)};
}

inline double volumetric_energy(double kappa, double J) { return 0.5 * kappa * (0.5 * (J * J - 1.0) - std::log(J)); }

/// Degraded stored energy as a function of C alone (used by oracles and the
/// stress routine alike).
inline double stored_energy(const MaterialParams& p, const Mat3& C, double d) {
  const double J = std::sqrt(C.determinant());
  const double U = volumetric_energy(p.kappa(), J);
  const double Wbar = 0.5 * p.mu() * (std::pow(J, -2.0 / 3.0) * C.trace() - 3.0);
  // U + Wbar + (g - 1)(U+ + Wbar), written without the cancellation at g ~ 0
  const double g = degradation(d, p.eta0).g;
  return (J >= 1.0 ? g : 1.0) * U + g * Wbar;
}

/// S, degraded elasticity tensor and tensile energy at one point. Set
/// `with_tangent` false to skip the 4th-order tensor.
inline StressTangent evaluate_stress_tangent(const MaterialParams& p, const KinematicState& kin, double d,
                                             bool with_tangent = true) {
  if (!(kin.J > 0.0)) throw InversionError("material point with J <= 0");
  const double kappa = p.kappa(), mu = p.mu();
  const double J = kin.J, J2 = J * J;
  const Mat3 Ci = kin.C.inverse();
  const double trC = kin.C.trace();
  const double Jm23 = std::pow(J, -2.0 / 3.0);
  const bool tension = J >= 1.0;
  const double gm1 = degradation(d, p.eta0).g - 1.0;

  const Mat3 I = Mat3::Identity();
  const Mat3 S_circ = 0.5 * kappa * (J2 - 1.0) * Ci;
  const Mat3 S_bar = mu * Jm23 * (I - (trC / 3.0) * Ci);
  // S = S_circ + S_bar + (g - 1)(H(J-1) S_circ + S_bar)
  const double w_circ = 1.0 + (tension ? gm1 : 0.0);
  const double w_bar = 1.0 + gm1;

  StressTangent out;
  out.S = w_circ * S_circ + w_bar * S_bar;
  const double U = volumetric_energy(kappa, J);
  const double Wbar = 0.5 * mu * (Jm23 * trC - 3.0);
  out.psi_plus = (tension ? U : 0.0) + Wbar;
  out.energy = w_circ * U + w_bar * Wbar;

  if (with_tangent) {
    // C_circ = kappa J^2 Ci (x) Ci - kappa (J^2 - 1) I_Ci
    // C_bar  = -2/3 (Ci (x) Sbar + Sbar (x) Ci) - 2/3 mu J^-2/3 trC (1/3 Ci (x) Ci - I_Ci)
    // C      = C_circ + C_bar + (g - 1) (H(J-1) C_circ + C_bar)
    const double cbar_coef = -2.0 / 3.0 * mu * Jm23 * trC;
    Tensor4 t;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k)
          for (int l = 0; l < 3; ++l) {
            const double cc = Ci(i, j) * Ci(k, l);
            const double ici = 0.5 * (Ci(i, k) * Ci(j, l) + Ci(i, l) * Ci(j, k));
            const double c_circ = kappa * J2 * cc - kappa * (J2 - 1.0) * ici;
            const double c_bar = -2.0 / 3.0 * (Ci(i, j) * S_bar(k, l) + S_bar(i, j) * Ci(k, l)) +
                                 cbar_coef * (cc / 3.0 - ici);
            t(i, j, k, l) = w_circ * c_circ + w_bar * c_bar;
          }
    out.C_tensor = to_voigt(t);
  }
  return out;
}

/// Irreversibility: H never decreases.
inline double update_history(double H_old, double psi_plus) { return std::max(H_old, psi_plus); }

}  // namespace pfx4
