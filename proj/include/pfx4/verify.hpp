#pragma once

// Reference computations and small verification problems shared by the
// unit tests, the acceptance binary and `pfx4 verify`.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "pfx4/constitutive.hpp"
#include "pfx4/momentum.hpp"
#include "pfx4/pf_scheme.hpp"

namespace pfx4::verify {

/// 2 dW/dC by central differences of the scalar energy, symmetric
/// perturbation of off-diagonal pairs.
inline Mat3 fd_stress(const MaterialParams& p, const Mat3& C, double d, double h = 1e-6) {
  Mat3 S;
  for (int i = 0; i < 3; ++i)
    for (int j = i; j < 3; ++j) {
      Mat3 E = Mat3::Zero();
      E(i, j) = E(j, i) = h;
      const double dW = stored_energy(p, C + E, d) - stored_energy(p, C - E, d);
      S(i, j) = S(j, i) = (i == j ? 2.0 : 1.0) * dW / (2.0 * h);
    }
  return S;
}

/// 2 dS/dC by central differences of the analytic stress, Voigt layout.
inline Eigen::Matrix4d fd_tangent(const MaterialParams& p, const Mat3& C, double d, double h = 1e-6) {
  Eigen::Matrix4d T;
  for (int b = 0; b < 4; ++b) {
    const int k = kVoigtPairs[b][0], l = kVoigtPairs[b][1];
    Mat3 E = Mat3::Zero();
    E(k, l) = E(l, k) = h;
    const Mat3 Sp = evaluate_stress_tangent(p, KinematicState::from_C(C + E), d, false).S;
    const Mat3 Sm = evaluate_stress_tangent(p, KinematicState::from_C(C - E), d, false).S;
    const Mat3 dS = (Sp - Sm) / (2.0 * h) * (k == l ? 2.0 : 1.0);
    for (int a = 0; a < 4; ++a) T(a, b) = dS(kVoigtPairs[a][0], kVoigtPairs[a][1]);
  }
  return T;
}

/// Random in-plane deformation gradient with prescribed J (plane strain).
inline Mat2 random_F_with_J(std::mt19937& rng, double J) {
  std::uniform_real_distribution<double> U(-0.25, 0.25);
  Mat2 F;
  do {
    F << 1.0 + U(rng), U(rng), U(rng), 1.0 + U(rng);
  } while (F.determinant() <= 0.2);
  return F * std::sqrt(J / F.determinant());
}

/// Closed-form 1D fourth-order profile and its second derivative.
inline double profile(double X, double l0) {
  const double t = std::abs(X) / l0;
  return (1.0 + t) * std::exp(-t);
}
inline double profile_d2(double X, double l0) {
  const double t = std::abs(X) / l0;
  return (t - 1.0) / (l0 * l0) * std::exp(-t);
}

/// Golden-section minimization of a unimodal scalar function on [a, b].
inline double golden_min(const std::function<double(double)>& f, double a, double b, double tol = 1e-12) {
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = f(c), fd = f(d);
  while (std::abs(b - a) > tol * (1.0 + std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - r * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + r * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

/// Least-squares slope of log(err) against log(h).
inline double fitted_rate(const std::vector<double>& h, const std::vector<double>& err) {
  const std::size_t n = h.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::log(h[i]), y = std::log(err[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

/// Integral of (d_h - exact)^2 over the phase-field mesh, 4x4 Gauss.
inline double l2_error(const PhaseField& pf, const std::function<double(const Vec2&)>& exact) {
  const Mesh& m = pf.mesh();
  const VecX& x = pf.raw();
  double s = 0.0;
  auto accumulate = [&]<ElementKind K>(ElemId e) {
    const auto el = m.element(e);
    for (const auto& p : eval_basis<K>(m.template coords<K>(e), 4, false)) {
      double v = 0.0;
      for (int a = 0; a < nodes_of<K>; ++a) v += p.N(a) * x(static_cast<Eigen::Index>(el[a]));
      const double r = v - exact(p.x);
      s += r * r * p.weight;
    }
  };
  for (ElemId e = 0; e < m.num_elements(); ++e) {
    if (m.kind == ElementKind::Q4)
      accumulate.template operator()<ElementKind::Q4>(e);
    else
      accumulate.template operator()<ElementKind::Q9>(e);
  }
  return std::sqrt(s);
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// Thin strip [-L, L] x [0, h] with d = 1 clamped on X = 0 and H = 0.

struct StripOptions {
  Scheme scheme = Scheme::CDG_Q9;
  double l0 = 1.0;
  double half_length = 12.0;  // in units of l0
  int elems_per_l0 = 4;
  double beta_factor = 20.0;  // beta_s2 = beta_factor * alpha2
  double lambda0 = 1.0;
  bool insulated_ends = false;  // ends in the crack-insulated set
};

struct StripResult {
  std::shared_ptr<Mesh> q4;
  std::shared_ptr<PhaseField> pf;
  double linf = 0.0;             // nodal and sampled max |d_h - d|
  double gamma = 0.0;            // crack length per unit strip height
  double psi_at_l0 = 0.0;        // interpolated psi at X = l0 (mixed only)
  double max_end_laplacian = 0.0;  // max |Lap d_h| on the end faces
  double seconds = 0.0;
};

inline PhaseFieldSetup strip_setup(const StripOptions& o) {
  MaterialParams mp;
  mp.Gc = 1.0;
  mp.l0 = o.l0;
  PhaseFieldSetup s;
  s.scheme = o.scheme;
  s.coef = PFCoefficients::from(mp, 1.0, o.lambda0);
  s.coef.beta_s2 = o.beta_factor * s.coef.alpha2;
  s.eta0 = mp.eta0;
  s.d2_sets = {"bottom", "top"};
  if (o.insulated_ends) s.d2_sets.insert(s.d2_sets.end(), {"left", "right"});
  s.psi_free_sets = {"bottom", "top"};
  return s;
}

inline StripResult run_strip(const StripOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  const double L = o.half_length * o.l0, h = o.l0 / o.elems_per_l0;
  const auto nx = static_cast<std::size_t>(std::lround(2.0 * L / h));
  StripResult r;
  r.q4 = std::make_shared<Mesh>(structured_rect(-L, L, nx, 0.0, h, 1));
  r.pf = std::make_shared<PhaseField>(*r.q4, strip_setup(o));
  const double tol = 1e-9 * h;
  const auto bc = r.pf->clamp([&](const Vec2& x) { return std::abs(x.x()) < tol; }, 1.0);
  r.pf->solve(r.pf->zero_history(), bc);

  const Mesh& m = r.pf->mesh();
  const VecX d = r.pf->d();
  for (NodeId n = 0; n < m.num_nodes(); ++n)
    r.linf = std::max(r.linf, std::abs(d(static_cast<Eigen::Index>(n)) - profile(m.nodes[n].x(), o.l0)));
  for (ElemId e = 0; e < m.num_elements(); ++e)
    for (int i = 0; i <= 8; ++i) {
      const double xi = -1.0 + 0.25 * i;
      const double X = m.element_center(e).x() + 0.5 * h * xi;
      r.linf = std::max(r.linf, std::abs(r.pf->d_at(e, xi, 0.0) - profile(X, o.l0)));
    }
  r.gamma = r.pf->crack_length(o.l0) / h;

  if (r.pf->mixed()) {
    PointLocator loc(m);
    const auto hit = loc.locate(Vec2(o.l0, 0.5 * h));
    const VecX psi = r.pf->psi();
    const auto el = m.element(hit.elem);
    if (m.kind == ElementKind::Q4) {
      const auto s = ref_shape<ElementKind::Q4>(hit.ref.x(), hit.ref.y());
      for (int a = 0; a < 4; ++a) r.psi_at_l0 += s.N(a) * psi(static_cast<Eigen::Index>(el[a]));
    } else {
      const auto s = ref_shape<ElementKind::Q9>(hit.ref.x(), hit.ref.y());
      for (int a = 0; a < 9; ++a) r.psi_at_l0 += s.N(a) * psi(static_cast<Eigen::Index>(el[a]));
    }
  } else {
    for (const std::string side : {"left", "right"})
      for (const auto& fr : m.side_set(side)) {
        const auto el = m.element(fr.elem);
        for (const auto& p : eval_face_basis<ElementKind::Q9>(m.coords<ElementKind::Q9>(fr.elem), fr.face)) {
          double lap = 0.0;
          for (int a = 0; a < 9; ++a) lap += (p.d2N(a, 0) + p.d2N(a, 1)) * d(static_cast<Eigen::Index>(el[a]));
          r.max_end_laplacian = std::max(r.max_end_laplacian, std::abs(lap));
        }
      }
  }
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Manufactured solution d* = cos(pi x) cos(pi y) on the unit square. Its
// normal derivative vanishes on every side, so all sides are crack
// insulated and psi is left free.

struct ManufacturedOptions {
  Scheme scheme = Scheme::CDG_Q9;
  double l0 = 0.1;
  double beta_factor = 20.0;
  std::vector<int> levels{8, 16, 32};
};

struct ManufacturedResult {
  std::vector<double> h, err;
  std::vector<double> solution_norm;
  double rate = 0.0;
  double seconds = 0.0;
};

inline double manufactured_exact(const Vec2& x) { return std::cos(M_PI * x.x()) * std::cos(M_PI * x.y()); }

inline ManufacturedResult run_manufactured(const ManufacturedOptions& o) {
  const auto t0 = std::chrono::steady_clock::now();
  MaterialParams mp;
  mp.Gc = 1.0;
  mp.l0 = o.l0;
  PhaseFieldSetup s;
  s.scheme = o.scheme;
  s.coef = PFCoefficients::from(mp, 1.0);
  s.coef.beta_s2 = o.beta_factor * s.coef.alpha2;
  s.eta0 = mp.eta0;
  s.d2_sets = {"bottom", "right", "top", "left"};
  s.psi_free_sets = s.d2_sets;
  const double k2 = M_PI * M_PI;
  const double amp = 4.0 * k2 * k2 * s.coef.alpha2 - 2.0 * k2 * s.coef.alpha1 + s.coef.alpha0;
  const SourceFn f = [amp](const Vec2& x) { return amp * manufactured_exact(x); };

  ManufacturedResult r;
  for (int n : o.levels) {
    const Mesh q4 = structured_rect(0.0, 1.0, static_cast<std::size_t>(n), 0.0, 1.0, static_cast<std::size_t>(n));
    PhaseField pf(q4, s);
    pf.solve(pf.zero_history(), {}, f);
    r.h.push_back(1.0 / n);
    r.err.push_back(l2_error(pf, manufactured_exact));
    r.solution_norm.push_back(l2_error(pf, [](const Vec2&) { return 0.0; }));
  }
  r.rate = fitted_rate(r.h, r.err);
  r.seconds = seconds_since(t0);
  return r;
}

// ---------------------------------------------------------------------------
// Oracle suite: named checks with pass/fail, used by `pfx4 verify` and the
// acceptance binary.

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

namespace detail {

inline std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

inline double rel(const auto& a, const auto& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace detail

inline constexpr Scheme kAllSchemes[] = {Scheme::CDG_Q9, Scheme::MIXED_Q9Q9, Scheme::MIXED_Q4Q4};

/// Strip profile error at l0/h = 4 for every scheme.
inline Check check_strip_profile(double tol = 1e-2, double time_limit = 10.0) {
  Check c{"strip profile", true, "", 0.0};
  for (Scheme s : kAllSchemes) {
    StripOptions o;
    o.scheme = s;
    const auto r = run_strip(o);
    const bool ok = r.linf < tol && r.seconds < time_limit;
    c.pass = c.pass && ok;
    c.seconds += r.seconds;
    c.detail += to_string(s) + detail::fmt(" Linf=%.3e (%.2fs) ", r.linf, r.seconds);
  }
  return c;
}

/// Regularized crack length per unit height on the strip, every scheme.
inline Check check_crack_length(double tol = 0.01, double time_limit = 5.0) {
  Check c{"crack length", true, "", 0.0};
  for (Scheme s : kAllSchemes) {
    StripOptions o;
    o.scheme = s;
    const auto r = run_strip(o);
    c.pass = c.pass && std::abs(r.gamma - 1.0) <= tol;
    c.seconds += r.seconds;
    c.detail += to_string(s) + detail::fmt(" Gamma=%.5f ", r.gamma);
  }
  c.pass = c.pass && c.seconds < time_limit;
  return c;
}

/// Stress against energy differences and tangent against stress
/// differences on 20 states, J in [0.8, 1.3] with pairs close to J = 1 on
/// both sides, d cycling through {0, 0.5, 1}.
inline Check check_constitutive(double tol_stress = 1e-6, double tol_tangent = 1e-5, double time_limit = 1.0) {
  const auto t0 = std::chrono::steady_clock::now();
  static constexpr double Js[20] = {0.8,   0.83, 0.86, 0.9,  0.93, 0.96, 0.98, 0.99, 0.995, 0.999,
                                    1.001, 1.005, 1.01, 1.02, 1.05, 1.1,  1.15, 1.2,  1.25,  1.3};
  static constexpr double ds[3] = {0.0, 0.5, 1.0};
  MaterialParams p;
  std::mt19937 rng(2024);
  double es = 0.0, et = 0.0;
  for (int i = 0; i < 20; ++i) {
    const double d = ds[i % 3];
    const auto kin = KinematicState::plane_strain(random_F_with_J(rng, Js[i]));
    const auto st = evaluate_stress_tangent(p, kin, d);
    es = std::max(es, detail::rel(st.S, fd_stress(p, kin.C, d)));
    et = std::max(et, detail::rel(st.C_tensor, fd_tangent(p, kin.C, d)));
  }
  Check c;
  c.name = "constitutive differences";
  c.seconds = seconds_since(t0);
  c.pass = es < tol_stress && et < tol_tangent && c.seconds < time_limit;
  c.detail = detail::fmt("20 states: stress %.2e, tangent %.2e", es, et);
  return c;
}

/// Jacobian times direction against central differences of the residual
/// on a 2 x 2 distorted grid with random displacement, rates and damage.
inline Check check_momentum_jacobian(double tol = 1e-6, double time_limit = 1.0) {
  const auto t0 = std::chrono::steady_clock::now();
  Mesh m = structured_rect(0, 1, 2, 0, 1, 2);
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> U(-1, 1), P(0, 1);
  for (auto& x : m.nodes)
    if (x.x() > 1e-12 && x.x() < 1 - 1e-12 && x.y() > 1e-12 && x.y() < 1 - 1e-12) x += 0.1 * Vec2(U(rng), U(rng));
  MomentumModel model(m, MaterialParams{});
  MomentumState prev = MomentumState::zeros(m.num_nodes());
  for (Eigen::Index i = 0; i < prev.u.size(); ++i) {
    prev.u(i) = 0.02 * U(rng);
    prev.v(i) = 1e3 * U(rng);
    prev.a(i) = 1e9 * U(rng);
  }
  VecX u1 = prev.u;
  for (Eigen::Index i = 0; i < u1.size(); ++i) u1(i) += 0.03 * U(rng);
  VecX d(m.num_nodes());
  for (Eigen::Index i = 0; i < d.size(); ++i) d(i) = P(rng);
  const NewmarkParams nm{0.3025, 0.6, 2e-7, true};
  MomentumLoads loads;
  loads.body_force = Vec2(3.0, -1.0);
  VecX R;
  SparseSystem J = model.make_system();
  model.residual_and_jacobian(prev, u1, d, nm, loads, R, &J);
  double worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    VecX dir(u1.size());
    for (Eigen::Index i = 0; i < dir.size(); ++i) dir(i) = U(rng);
    const double h = 1e-7;
    VecX Rp, Rm;
    model.residual_and_jacobian(prev, u1 + h * dir, d, nm, loads, Rp, nullptr);
    model.residual_and_jacobian(prev, u1 - h * dir, d, nm, loads, Rm, nullptr);
    const VecX an = J.matrix() * dir;
    worst = std::max(worst, detail::rel(VecX((Rp - Rm) / (2 * h)), an));
  }
  Check c;
  c.name = "momentum jacobian";
  c.seconds = seconds_since(t0);
  c.pass = worst < tol && c.seconds < time_limit;
  c.detail = detail::fmt("4 elements, 10 directions: %.2e", worst);
  return c;
}

/// Manufactured-solution L2 rates over meshes 8, 16, 32, 64. A rate passes
/// when its value rounded to two decimals reaches the target.
inline Check check_rates(double time_limit = 60.0) {
  Check c{"manufactured rates", true, "", 0.0};
  for (Scheme s : kAllSchemes) {
    ManufacturedOptions o;
    o.scheme = s;
    o.levels = {8, 16, 32, 64};
    const auto r = run_manufactured(o);
    const double target = s == Scheme::MIXED_Q4Q4 ? 2.0 : 3.0;
    const bool ok = std::round(100.0 * r.rate) / 100.0 >= target;
    c.pass = c.pass && ok;
    c.seconds += r.seconds;
    c.detail += to_string(s) + detail::fmt(" %.4f (>= %.0f) ", r.rate, target);
  }
  c.pass = c.pass && c.seconds < time_limit;
  return c;
}

/// Mixed-scheme d for lambda0 = 1 and 2 on the strip.
inline Check check_lambda_invariance(double tol = 1e-10, double time_limit = 10.0) {
  Check c{"lambda0 invariance", true, "", 0.0};
  for (Scheme s : {Scheme::MIXED_Q9Q9, Scheme::MIXED_Q4Q4}) {
    StripOptions o;
    o.scheme = s;
    const auto a = run_strip(o);
    o.lambda0 = 2.0;
    const auto b = run_strip(o);
    const double diff = (a.pf->d() - b.pf->d()).lpNorm<Eigen::Infinity>();
    c.pass = c.pass && diff < tol;
    c.seconds += a.seconds + b.seconds;
    c.detail += to_string(s) + detail::fmt(" max|dd|=%.2e ", diff);
  }
  c.pass = c.pass && c.seconds < time_limit;
  return c;
}

inline std::vector<Check> oracle_suite() {
  return {check_strip_profile(), check_crack_length(), check_constitutive(), check_momentum_jacobian(),
          check_rates(), check_lambda_invariance()};
}

}  // namespace pfx4::verify
