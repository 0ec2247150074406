#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "pfx4/constitutive.hpp"

using namespace pfx4;

namespace {

double rel(const auto& a, const auto& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

// J values away from 1 by more than the FD step (the tangent jumps at J = 1
// when d > 0), with some on each side.
const double kJs[] = {0.8, 0.85, 0.9, 0.95, 0.99, 1.01, 1.05, 1.1, 1.2, 1.3};

}  // namespace

TEST(Constitutive, DerivedModuli) {
  MaterialParams p;
  p.E_young = 210e3;
  p.nu = 0.3;
  EXPECT_NEAR(p.kappa(), 175e3, 1e-9);
  EXPECT_NEAR(p.mu(), 80769.230769230766, 1e-8);
}

TEST(Constitutive, Degradation) {
  EXPECT_DOUBLE_EQ(degradation(0.0, 1e-6).g, 1.0);
  EXPECT_DOUBLE_EQ(degradation(0.0, 1e-6).g_prime, -2.0 * (1.0 - 1e-6));
  EXPECT_DOUBLE_EQ(degradation(1.0, 1e-6).g, 1e-6);
  EXPECT_DOUBLE_EQ(degradation(1.0, 1e-6).g_prime, 0.0);
  EXPECT_NEAR(degradation(0.5, 1e-6).g, 0.25000075, 1e-15);
}

TEST(Constitutive, UndeformedStateIsStressFree) {
  MaterialParams p;
  for (double d : {0.0, 0.3, 1.0}) {
    const auto st = evaluate_stress_tangent(p, KinematicState::plane_strain(Mat2::Identity()), d);
    EXPECT_NEAR(st.S.norm(), 0.0, 1e-9);
    EXPECT_NEAR(st.psi_plus, 0.0, 1e-9);
  }
}

TEST(Constitutive, ContractionKeepsVolumetricStress) {
  MaterialParams p;
  p.eta0 = 1e-12;
  Mat3 F = 0.9 * Mat3::Identity();
  const auto kin = KinematicState::from_F(F);
  const auto broken = evaluate_stress_tangent(p, kin, 1.0);
  const Mat3 Ci = kin.C.inverse();
  const Mat3 S_circ = 0.5 * p.kappa() * (kin.J * kin.J - 1.0) * Ci;
  // deviatoric part vanishes under pure dilation; compare whole stress too
  EXPECT_LT(rel(broken.S, S_circ), 1e-10);
  // FD of the degraded energy agrees
  EXPECT_LT(rel(broken.S, oracle::fd_stress(p, kin.C, 1.0)), 1e-6);
}

TEST(Constitutive, DeviatoricStressIsOrthogonalToC) {
  MaterialParams p;
  std::mt19937 rng(3);
  for (double J : kJs) {
    const auto kin = KinematicState::plane_strain(oracle::random_F_with_J(rng, J));
    EXPECT_NEAR(kin.Cbar.determinant(), 1.0, 1e-10);
    const Mat3 Ci = kin.C.inverse();
    const Mat3 Sbar = p.mu() * std::pow(kin.J, -2.0 / 3.0) * (Mat3::Identity() - kin.C.trace() / 3.0 * Ci);
    EXPECT_LT(std::abs((Sbar.cwiseProduct(kin.C)).sum()) / (Sbar.norm() * kin.C.norm()), 1e-10);
  }
}

TEST(Constitutive, StressMatchesEnergyFiniteDifferences) {
  MaterialParams p;
  std::mt19937 rng(11);
  for (double d : {0.0, 0.5, 1.0})
    for (double J : kJs) {
      const auto kin = KinematicState::plane_strain(oracle::random_F_with_J(rng, J));
      const auto st = evaluate_stress_tangent(p, kin, d);
      EXPECT_LT(rel(st.S, oracle::fd_stress(p, kin.C, d)), 1e-6) << "J=" << J << " d=" << d;
      EXPECT_NEAR(st.energy, stored_energy(p, kin.C, d), 1e-9 * std::max(1.0, std::abs(st.energy)));
    }
}

TEST(Constitutive, TangentMatchesStressFiniteDifferences) {
  MaterialParams p;
  std::mt19937 rng(12);
  for (double d : {0.0, 0.5, 1.0})
    for (double J : kJs) {
      const auto kin = KinematicState::plane_strain(oracle::random_F_with_J(rng, J));
      const auto st = evaluate_stress_tangent(p, kin, d);
      EXPECT_LT(rel(st.C_tensor, oracle::fd_tangent(p, kin.C, d)), 1e-5) << "J=" << J << " d=" << d;
      EXPECT_LT(rel(st.C_tensor, Eigen::Matrix4d(st.C_tensor.transpose())), 1e-14);
    }
}

TEST(Constitutive, ContinuityAcrossJEqualsOne) {
  MaterialParams p;
  std::mt19937 rng(5);
  const Mat2 F0 = oracle::random_F_with_J(rng, 1.0);
  for (double d : {0.0, 0.5}) {
    const auto below = evaluate_stress_tangent(p, KinematicState::plane_strain(F0 * std::sqrt(1.0 - 1e-9)), d);
    const auto above = evaluate_stress_tangent(p, KinematicState::plane_strain(F0 * std::sqrt(1.0 + 1e-9)), d);
    EXPECT_LT((below.S - above.S).norm(), 1e-3);  // S ~ 1e5 scale
    EXPECT_NEAR(below.psi_plus, above.psi_plus, 1e-3);
    // The tangent is continuous for d = 0. For d > 0 it jumps by
    // (g - 1) kappa Ci (x) Ci, since the second derivative of U+ does.
    const Mat3 Ci = KinematicState::plane_strain(F0).C.inverse();
    Eigen::Matrix4d jump;
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        jump(a, b) = (degradation(d, p.eta0).g - 1.0) * p.kappa() * Ci(kVoigtPairs[a][0], kVoigtPairs[a][1]) *
                     Ci(kVoigtPairs[b][0], kVoigtPairs[b][1]);
    EXPECT_LT((above.C_tensor - below.C_tensor - jump).norm(), 1e-5 * p.kappa());
  }
}

TEST(Constitutive, Objectivity) {
  MaterialParams p;
  std::mt19937 rng(9);
  std::uniform_real_distribution<double> U(0, 6.283185307179586);
  for (double J : kJs) {
    const Mat2 F = oracle::random_F_with_J(rng, J);
    const double th = U(rng);
    Mat2 Q;
    Q << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    for (double d : {0.0, 0.5, 1.0}) {
      const double w1 = stored_energy(p, KinematicState::plane_strain(F).C, d);
      const double w2 = stored_energy(p, KinematicState::plane_strain(Q * F).C, d);
      EXPECT_NEAR(w1, w2, 1e-12 * std::max(1.0, std::abs(w1)));
    }
  }
}

TEST(Constitutive, InversionThrows) {
  MaterialParams p;
  Mat2 F;
  F << -1.0, 0.0, 0.0, 1.0;
  EXPECT_THROW(evaluate_stress_tangent(p, KinematicState::plane_strain(F), 0.0), InversionError);
}

TEST(Constitutive, HistoryIsRunningMax) {
  EXPECT_EQ(update_history(2.0, 1.0), 2.0);
  EXPECT_EQ(update_history(0.0, 3.0), 3.0);
  const double seq[] = {0.1, 0.5, 0.3, 0.0, 0.7, 0.2};
  double H = 0.0, m = 0.0;
  for (double s : seq) {
    const double Hn = update_history(H, s);
    EXPECT_GE(Hn, H);
    m = std::max(m, s);
    EXPECT_EQ(Hn, m);
    H = Hn;
  }
}

TEST(Constitutive, ParameterChecks) {
  MaterialParams p;
  p.nu = 0.5;
  EXPECT_THROW(p.check(), ConfigError);
  p = MaterialParams{};
  p.Gc = 0.0;
  EXPECT_THROW(p.check(), ConfigError);
}
