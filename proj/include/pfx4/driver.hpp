#pragma once

// Staggered time stepper: momentum Newton solve with frozen d, history
// update at the phase-field quadrature points, linear phase-field solve
// with frozen H.

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pfx4/momentum.hpp"
#include "pfx4/pf_scheme.hpp"

namespace pfx4 {

struct SchemeConfig {
  Scheme scheme = Scheme::CDG_Q9;
  double beta_s2 = 20e-5;
  double lambda0 = 1.0;
  double newmark_beta = 0.3025;
  double newmark_gamma = 0.6;
  double dt_initial = 1e-7;
  double dt_min = 1e-12;
  double dt_max = 1e-7;
  bool adaptive = true;
  double t_final = 65e-6;
  int output_every = 0;         // steps between field outputs, 0 disables
  int stagger_iterations = 1;   // > 1 turns on fixed-point sub-iterations
  bool quasi_static = false;

  void check() const {
    if (!(dt_min > 0.0 && dt_min <= dt_initial && dt_initial <= dt_max))
      throw ConfigError("time: need 0 < dt_min <= dt_initial <= dt_max");
    if (!(t_final >= 0.0)) throw ConfigError("time: t_final must be non-negative");
    if (!(beta_s2 > 0.0)) throw ConfigError("scheme: beta_s2 must be positive");
    if (!(lambda0 > 0.0)) throw ConfigError("scheme: lambda0 must be positive");
    if (stagger_iterations < 1) throw ConfigError("scheme: stagger_iterations must be >= 1");
    if (output_every < 0) throw ConfigError("output: output_every must be >= 0");
    newmark().check();
  }

  NewmarkParams newmark(double dt = 1.0) const { return {newmark_beta, newmark_gamma, dt, !quasi_static}; }
};

/// Boundary-value problem handed to the driver. `loads(t)` returns the
/// Dirichlet values and tractions at time t.
struct ProblemDefinition {
  std::string name = "custom";
  std::shared_ptr<const Mesh> mesh;  // Q4
  MaterialParams material;
  std::vector<std::string> d2_sets;
  std::vector<std::string> psi_free_sets;
  std::function<MomentumLoads(double)> loads;
  // load-displacement record: reaction on `reaction_set`, component
  // `reaction_component`, against `load_displacement(t)`
  std::string reaction_set;
  int reaction_component = 0;
  std::function<double(double)> load_displacement;
  std::vector<std::pair<std::string, Vec2>> probe_points;
};

/// One row per accepted step (plus the initial state).
struct ProbeTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::size_t column(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return i;
    throw ConfigError("no probe column '" + name + "'");
  }
  std::vector<double> series(const std::string& name) const {
    const std::size_t c = column(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
};

struct SimulationState {
  double time = 0.0;
  int step = 0;
  double dt = 0.0;  // step size to try next
  MomentumState momentum;
  VecX pf;  // raw phase-field vector (d, or d then psi)
  HistoryField H;
  ProbeTable probes;
};

struct StepStats {
  int newton_iterations = 0;
  int rejections = 0;
  double dt_used = 0.0;
};

struct SimulationAborted : Error {
  using Error::Error;
};

class Simulation {
 public:
  Simulation(ProblemDefinition prob, SchemeConfig cfg)
      : prob_(std::move(prob)), cfg_(cfg), model_(*prob_.mesh, prob_.material) {
    cfg_.check();
    prob_.material.check();
    if (!prob_.loads) throw ConfigError("problem without a load function");
    PhaseFieldSetup s;
    s.scheme = cfg_.scheme;
    s.coef = PFCoefficients::from(prob_.material, cfg_.beta_s2, cfg_.lambda0);
    s.eta0 = prob_.material.eta0;
    s.d2_sets = prob_.d2_sets;
    s.psi_free_sets = prob_.psi_free_sets;
    pf_ = std::make_unique<PhaseField>(*prob_.mesh, s);
    build_history_map();
    locate_probes();

    state_.momentum = MomentumState::zeros(prob_.mesh->num_nodes());
    state_.pf = VecX::Zero(pf_->unknowns());
    state_.H = pf_->zero_history();
    state_.dt = cfg_.dt_initial;
    state_.probes.columns = {"time", "step", "dt", "newton_iterations", "displacement", "reaction_x", "reaction_y",
                             "strain_energy", "kinetic_energy", "crack_length", "d_max", "d_max_x", "d_max_y"};
    for (const auto& [name, x] : prob_.probe_points) state_.probes.columns.push_back("d_" + name);
    for (const auto& [name, x] : prob_.probe_points) state_.probes.columns.push_back("u_" + name);
    record(state_, 0);
  }

  const ProblemDefinition& problem() const { return prob_; }
  const SchemeConfig& config() const { return cfg_; }
  const SimulationState& state() const { return state_; }
  const MomentumModel& momentum() const { return model_; }
  const PhaseField& phase_field() const { return *pf_; }
  int monotonicity_violations() const { return mono_violations_; }
  const StepStats& last_step() const { return last_; }

  void set_log(std::function<void(const std::string&)> f) { log_ = std::move(f); }
  void set_dump_path(std::string p) { dump_path_ = std::move(p); }

  /// One staggered step of size dt from `s`. Returns nothing when the
  /// momentum solve fails; `s` is never modified.
  std::optional<SimulationState> try_step(const SimulationState& s, double dt, int* newton_its = nullptr) {
    SimulationState n;
    n.momentum = s.momentum;
    n.H = s.H;
    n.pf = s.pf;
    const double t1 = s.time + dt;
    const MomentumLoads loads = prob_.loads(t1);
    const NewmarkParams nm = cfg_.newmark(dt);
    VecX pf_x = s.pf;
    int its = 0;
    for (int k = 0; k < cfg_.stagger_iterations; ++k) {
      const VecX d = pf_x.head(static_cast<Eigen::Index>(prob_.mesh->num_nodes()));
      try {
        its += model_.newton_solve(s.momentum, n.momentum, d, nm, loads, solver_).iterations;
      } catch (const NonConvergence& e) {
        note(std::string("step rejected: ") + e.what());
        return std::nullopt;
      } catch (const InversionError& e) {
        note(std::string("step rejected: ") + e.what());
        return std::nullopt;
      }
      HistoryField H = s.H;
      try {
        update_history(n.momentum.u, H);
      } catch (const InversionError& e) {
        note(std::string("step rejected: ") + e.what());
        return std::nullopt;
      }
      pf_->set_raw(pf_x);
      const VecX next = pf_->solve(H);
      const double change = (next - pf_x).lpNorm<Eigen::Infinity>();
      pf_x = next;
      n.H = std::move(H);
      if (k + 1 < cfg_.stagger_iterations && change < 1e-8) break;
    }
    n.pf = pf_x;
    n.time = t1;
    n.step = s.step + 1;
    n.dt = s.dt;
    if (newton_its) *newton_its = its;
    return n;
  }

  /// Advances by one accepted step, halving dt on failure.
  const StepStats& step() {
    last_ = {};
    double dt = std::min(state_.dt, cfg_.t_final - state_.time);
    const bool clipped = dt < state_.dt;
    for (;;) {
      int its = 0;
      auto next = try_step(state_, dt, &its);
      if (next) {
        next->probes = std::move(state_.probes);
        double dt_next = clipped ? state_.dt : dt;
        if (cfg_.adaptive) dt_next = std::min(1.2 * dt_next, cfg_.dt_max);
        next->dt = dt_next;
        state_ = std::move(*next);
        last_.newton_iterations = its;
        last_.dt_used = dt;
        record(state_, its);
        pf_->set_raw(state_.pf);
        return last_;
      }
      ++last_.rejections;
      dt *= 0.5;
      if (dt < cfg_.dt_min) {
        pf_->set_raw(state_.pf);
        const std::string where = dump_state();
        throw SimulationAborted("time step fell below dt_min at t = " + format(state_.time) +
                                (where.empty() ? "" : "; state written to " + where));
      }
    }
  }

  bool finished() const { return state_.time >= cfg_.t_final * (1.0 - 1e-12); }

  /// Time loop to t_final. `on_output` is called for the initial state and
  /// every `output_every` steps (and at the end).
  void run(const std::function<void(const Simulation&)>& on_output = nullptr) {
    if (on_output) on_output(*this);
    while (!finished()) {
      step();
      const bool out = cfg_.output_every > 0 && state_.step % cfg_.output_every == 0;
      if (on_output && (out || finished())) on_output(*this);
    }
  }

  /// Kinematics at every phase-field quadrature point, H := max(H, psi+).
  void update_history(const VecX& u, HistoryField& H) const {
    const MaterialParams& mp = prob_.material;
    const Mesh& m = *prob_.mesh;
    const int nq = H.qp_per_element;
    for (ElemId e = 0; e < m.num_elements(); ++e) {
      const auto el = m.element(e);
      Eigen::Matrix<double, 4, 2> ue;
      for (int a = 0; a < 4; ++a) {
        const auto i = 2 * static_cast<Eigen::Index>(el[a]);
        ue(a, 0) = u(i);
        ue(a, 1) = u(i + 1);
      }
      for (int q = 0; q < nq; ++q) {
        const Mat2 G = ue.transpose() * hdN_[e * static_cast<std::size_t>(nq) + static_cast<std::size_t>(q)];
        const auto kin = KinematicState::plane_strain(Mat2::Identity() + G);
        const double pp = evaluate_stress_tangent(mp, kin, 0.0, false).psi_plus;
        double& h = H.values[e * static_cast<std::size_t>(nq) + static_cast<std::size_t>(q)];
        h = pfx4::update_history(h, pp);
      }
    }
  }

  /// d at a physical point of the current state.
  double d_at(const Vec2& x) const {
    const auto hit = locator().locate(x);
    return pf_->d_at(hit.elem, hit.ref.x(), hit.ref.y());
  }

  const PointLocator& locator() const {
    if (!loc_) loc_ = std::make_unique<PointLocator>(pf_->mesh());
    return *loc_;
  }

  /// Writes time, dt and the nodal vectors as plain text. Returns the path
  /// or an empty string when no dump path is set.
  std::string dump_state() const {
    if (dump_path_.empty()) return {};
    std::ofstream f(dump_path_);
    if (!f) return {};
    f << std::setprecision(17) << std::scientific;
    f << "time " << state_.time << "\nstep " << state_.step << "\ndt " << state_.dt << "\n";
    auto vec = [&](const char* name, const VecX& v) {
      f << name << ' ' << v.size() << '\n';
      for (Eigen::Index i = 0; i < v.size(); ++i) f << v(i) << '\n';
    };
    vec("u", state_.momentum.u);
    vec("v", state_.momentum.v);
    vec("a", state_.momentum.a);
    vec("pf", state_.pf);
    f << "H " << state_.H.values.size() << '\n';
    for (double h : state_.H.values) f << h << '\n';
    return dump_path_;
  }

 private:
  static std::string format(double x) {
    std::ostringstream s;
    s << std::setprecision(6) << x;
    return s.str();
  }

  void note(const std::string& msg) const {
    if (log_) log_(msg);
  }

  // Q4 and phase-field meshes share element ids and geometry (the Q9 map of
  // a promoted element is the bilinear one), so a phase-field quadrature
  // point keeps its reference coordinates in the Q4 element.
  void build_history_map() {
    const Mesh& m = *prob_.mesh;
    const auto qr = pf_->quadrature();
    hdN_.reserve(m.num_elements() * qr.size());
    for (ElemId e = 0; e < m.num_elements(); ++e) {
      const auto X = m.coords<ElementKind::Q4>(e);
      for (const auto& q : qr) hdN_.push_back(map_point<ElementKind::Q4>(X, q.xi, q.eta, false).dN);
    }
  }

  void locate_probes() {
    for (const auto& [name, x] : prob_.probe_points) {
      const auto hit = locator().locate(x);
      if (!hit.inside) note("probe " + name + " lies outside the mesh; using the nearest element");
      probe_hits_.push_back(hit);
    }
    probe_max_.assign(prob_.probe_points.size(), 0.0);
  }

  void record(SimulationState& s, int its) {
    pf_->set_raw(s.pf);
    Vec2 r = Vec2::Zero();
    if (!prob_.reaction_set.empty() && s.momentum.residual.size() > 0) r = model_.reaction_force(s.momentum, prob_.reaction_set);
    const VecX d = pf_->d_on_q4();
    const VecX dall = pf_->d();
    Eigen::Index imax = 0;
    const double dmax = dall.size() ? dall.maxCoeff(&imax) : 0.0;
    const Vec2 xmax = dall.size() ? pf_->mesh().nodes[static_cast<std::size_t>(imax)] : Vec2::Zero();
    std::vector<double> row{s.time,
                            static_cast<double>(s.step),
                            s.step == 0 ? 0.0 : last_.dt_used,
                            static_cast<double>(its),
                            prob_.load_displacement ? prob_.load_displacement(s.time) : 0.0,
                            r.x(),
                            r.y(),
                            model_.strain_energy(s.momentum.u, d),
                            model_.kinetic_energy(s.momentum.v),
                            pf_->crack_length(prob_.material.l0),
                            dmax,
                            xmax.x(),
                            xmax.y()};
    for (std::size_t i = 0; i < probe_hits_.size(); ++i) {
      const double v = pf_->d_at(probe_hits_[i].elem, probe_hits_[i].ref.x(), probe_hits_[i].ref.y());
      if (v < probe_max_[i] - 1e-8) {
        if (++mono_violations_ <= 10)
          note("d decreased at probe " + prob_.probe_points[i].first + " (" + format(probe_max_[i]) + " -> " +
               format(v) + ") at t = " + format(s.time) + (mono_violations_ == 10 ? "; further decreases not logged" : ""));
      }
      probe_max_[i] = std::max(probe_max_[i], v);
      row.push_back(v);
    }
    for (const auto& hit : probe_hits_) {
      const auto el = prob_.mesh->element(hit.elem);
      const auto sh = ref_shape<ElementKind::Q4>(hit.ref.x(), hit.ref.y());
      Vec2 u = Vec2::Zero();
      for (int a = 0; a < 4; ++a) {
        const auto k = 2 * static_cast<Eigen::Index>(el[a]);
        u += sh.N(a) * Vec2(s.momentum.u(k), s.momentum.u(k + 1));
      }
      row.push_back(u.norm());
    }
    s.probes.rows.push_back(std::move(row));
  }

  ProblemDefinition prob_;
  SchemeConfig cfg_;
  MomentumModel model_;
  std::unique_ptr<PhaseField> pf_;
  LinearSolver solver_{LinearSolverKind::Direct, true};
  std::vector<Eigen::Matrix<double, 4, 2>> hdN_;
  mutable std::unique_ptr<PointLocator> loc_;
  std::vector<PointLocator::Hit> probe_hits_;
  std::vector<double> probe_max_;
  int mono_violations_ = 0;
  SimulationState state_;
  StepStats last_;
  std::function<void(const std::string&)> log_;
  std::string dump_path_;
};

}  // namespace pfx4
