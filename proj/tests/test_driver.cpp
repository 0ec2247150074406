#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

#include "pfx4/bench.hpp"

using namespace pfx4;

namespace {

/// Shear plate with a mesh coarse enough for unit tests.
BenchmarkSpec small_shear() {
  auto b = BenchmarkSpec::shear_plate();
  b.fine_h = 0.05;
  b.coarse_h = 0.1;
  return b;
}

ProblemDefinition small_problem(const BenchmarkSpec& b) {
  return make_problem(b, std::make_shared<const Mesh>(build_mesh(b)));
}

SchemeConfig fixed_dt(const BenchmarkSpec& b, Scheme s, double dt, double t_final) {
  auto c = default_scheme_config(b, s);
  c.dt_initial = c.dt_max = dt;
  c.dt_min = std::min(c.dt_min, dt);
  c.adaptive = false;
  c.t_final = t_final;
  return c;
}

/// Unit square, bottom clamped, top pushed down by `rate * t`.
ProblemDefinition squeeze(double rate, bool constant = false) {
  ProblemDefinition p;
  p.mesh = std::make_shared<const Mesh>(structured_rect(0, 1, 3, 0, 1, 3));
  p.material = BenchmarkSpec::shear_plate().material;
  const Mesh* m = p.mesh.get();
  p.loads = [m, rate, constant](double t) {
    MomentumLoads l;
    for (NodeId n : m->side_set_nodes("bottom")) {
      l.dirichlet.push_back({static_cast<DofId>(2 * n), 0.0});
      l.dirichlet.push_back({static_cast<DofId>(2 * n + 1), 0.0});
    }
    for (NodeId n : m->side_set_nodes("top")) l.dirichlet.push_back({static_cast<DofId>(2 * n + 1), -rate * (constant ? 1.0 : t)});
    return l;
  };
  return p;
}

}  // namespace

TEST(Driver, ZeroLoadLeavesStateAtRest) {
  auto b = small_shear();
  b.load.amplitude = 0.0;
  Simulation sim(small_problem(b), fixed_dt(b, Scheme::CDG_Q9, 1e-7, 3e-7));
  sim.run();
  EXPECT_EQ(sim.state().step, 3);
  EXPECT_NEAR(sim.state().time, 3e-7, 1e-20);
  EXPECT_EQ(sim.state().momentum.u.lpNorm<Eigen::Infinity>(), 0.0);
  EXPECT_EQ(sim.state().pf.lpNorm<Eigen::Infinity>(), 0.0);
  for (double h : sim.state().H.values) EXPECT_EQ(h, 0.0);
}

TEST(Driver, FirstStepMomentumIsSchemeIndependent) {
  const auto b = small_shear();
  std::vector<VecX> u;
  for (Scheme s : {Scheme::CDG_Q9, Scheme::MIXED_Q9Q9, Scheme::MIXED_Q4Q4}) {
    Simulation sim(small_problem(b), fixed_dt(b, s, 1e-7, 1e-6));
    sim.step();
    u.push_back(sim.state().momentum.u);
  }
  ASSERT_GT(u[0].norm(), 0.0);
  EXPECT_LT((u[0] - u[1]).lpNorm<Eigen::Infinity>(), 1e-10 * u[0].lpNorm<Eigen::Infinity>());
  EXPECT_LT((u[0] - u[2]).lpNorm<Eigen::Infinity>(), 1e-10 * u[0].lpNorm<Eigen::Infinity>());
}

TEST(Driver, DrivenEdgeFollowsIntegratedVelocity) {
  const auto b = small_shear();
  Simulation sim(small_problem(b), fixed_dt(b, Scheme::CDG_Q9, 1e-7, 1e-6));
  for (int i = 0; i < 4; ++i) sim.step();
  const Mesh& m = *sim.problem().mesh;
  const double t = sim.state().time;
  for (NodeId n : m.side_set_nodes("top")) EXPECT_DOUBLE_EQ(sim.state().momentum.u(2 * static_cast<Eigen::Index>(n)), b.load.integral(t));
  EXPECT_DOUBLE_EQ(sim.state().probes.series("displacement").back(), 0.5 * 260.0 * t * t / 25e-6);
}

TEST(Driver, FailedStepIsHalvedAndRetried) {
  auto cfg = SchemeConfig{};
  cfg.dt_initial = cfg.dt_max = 1e-4;
  cfg.dt_min = 1e-9;
  cfg.adaptive = false;
  cfg.t_final = 1e-4;
  // rate * dt = 1 squeezes the square flat
  Simulation sim(squeeze(1e4), cfg);
  std::vector<std::string> log;
  sim.set_log([&](const std::string& s) { log.push_back(s); });
  sim.step();
  EXPECT_GE(sim.last_step().rejections, 1);
  EXPECT_LT(sim.last_step().dt_used, 1e-4);
  EXPECT_DOUBLE_EQ(sim.state().time, sim.last_step().dt_used);
  ASSERT_FALSE(log.empty());
  EXPECT_NE(log.front().find("step rejected"), std::string::npos);
}

TEST(Driver, AbortsBelowMinimumStepAndDumpsState) {
  auto cfg = SchemeConfig{};
  cfg.dt_initial = cfg.dt_max = 1e-7;
  cfg.dt_min = 1e-9;
  Simulation sim(squeeze(2.0, true), cfg);
  const auto path = (std::filesystem::temp_directory_path() / "pfx4_abort_state.txt").string();
  std::filesystem::remove(path);
  sim.set_dump_path(path);
  EXPECT_THROW(sim.step(), SimulationAborted);
  EXPECT_EQ(sim.state().step, 0);
  std::ifstream f(path);
  std::string key;
  double t = -1;
  f >> key >> t;
  EXPECT_EQ(key, "time");
  EXPECT_EQ(t, 0.0);
}

TEST(Driver, RepeatedRunsAreBitwiseIdentical) {
  const auto b = small_shear();
  std::vector<ProbeTable> tables;
  std::vector<VecX> pf;
  for (int k = 0; k < 2; ++k) {
    auto cfg = default_scheme_config(b, Scheme::MIXED_Q9Q9);
    cfg.t_final = 2e-6;
    Simulation sim(small_problem(b), cfg);
    sim.run();
    tables.push_back(sim.state().probes);
    pf.push_back(sim.state().pf);
  }
  ASSERT_EQ(tables[0].rows.size(), tables[1].rows.size());
  for (std::size_t i = 0; i < tables[0].rows.size(); ++i)
    EXPECT_EQ(std::memcmp(tables[0].rows[i].data(), tables[1].rows[i].data(), sizeof(double) * tables[0].rows[i].size()), 0);
  EXPECT_EQ(std::memcmp(pf[0].data(), pf[1].data(), sizeof(double) * static_cast<std::size_t>(pf[0].size())), 0);
}

TEST(Driver, HistoryNeverDecreases) {
  auto b = small_shear();
  // load and unload: the drive reverses after 2 us
  b.load = {2e-6, 400.0};
  auto prob = small_problem(b);
  prob.loads = [inner = prob.loads](double t) { return inner(t < 2e-6 ? t : std::max(0.0, 4e-6 - t)); };
  Simulation sim(prob, fixed_dt(b, Scheme::CDG_Q9, 2e-7, 4e-6));
  std::vector<double> prev = sim.state().H.values;
  double peak = 0.0;
  while (!sim.finished()) {
    sim.step();
    const auto& h = sim.state().H.values;
    for (std::size_t i = 0; i < h.size(); ++i) ASSERT_GE(h[i], prev[i]);
    prev = h;
    peak = std::max(peak, *std::max_element(h.begin(), h.end()));
  }
  EXPECT_GT(peak, 0.0);
  EXPECT_EQ(sim.monotonicity_violations(), 0);
}

TEST(Driver, AdaptiveStepGrowsToMaximum) {
  const auto b = small_shear();
  auto cfg = default_scheme_config(b, Scheme::MIXED_Q4Q4);
  cfg.t_final = 1.5e-6;
  Simulation sim(small_problem(b), cfg);
  sim.run();
  const auto dt = sim.state().probes.series("dt");
  EXPECT_DOUBLE_EQ(dt[1], cfg.dt_initial);
  EXPECT_NEAR(dt[2], 1.2 * cfg.dt_initial, 1e-20);
  EXPECT_NEAR(sim.state().time, cfg.t_final, 1e-18);
  EXPECT_LE(*std::max_element(dt.begin(), dt.end()), cfg.dt_max);
}

TEST(Driver, ZeroFinalTimeGivesInitialOutputOnly) {
  const auto b = small_shear();
  auto cfg = default_scheme_config(b, Scheme::CDG_Q9);
  cfg.t_final = 0.0;
  Simulation sim(small_problem(b), cfg);
  int calls = 0;
  sim.run([&](const Simulation&) { ++calls; });
  EXPECT_EQ(calls, 1);
  EXPECT_TRUE(sim.finished());
  EXPECT_EQ(sim.state().probes.rows.size(), 1u);
}

TEST(Driver, OutputCadence) {
  const auto b = small_shear();
  auto cfg = fixed_dt(b, Scheme::MIXED_Q4Q4, 1e-7, 5e-7);
  cfg.output_every = 2;
  Simulation sim(small_problem(b), cfg);
  std::vector<int> steps;
  sim.run([&](const Simulation& s) { steps.push_back(s.state().step); });
  EXPECT_EQ(steps, (std::vector<int>{0, 2, 4, 5}));
}

TEST(Driver, ProbeColumns) {
  const auto b = small_shear();
  Simulation sim(small_problem(b), default_scheme_config(b, Scheme::CDG_Q9));
  const auto& t = sim.state().probes;
  EXPECT_EQ(t.columns.front(), "time");
  EXPECT_EQ(t.columns.back(), "u_P");
  EXPECT_EQ(t.column("d_P") + 1, t.columns.size() - 1);
  EXPECT_EQ(t.columns[t.column("d_max") + 1], "d_max_x");
  EXPECT_EQ(t.rows.size(), 1u);
  EXPECT_EQ(t.rows[0].size(), t.columns.size());
  EXPECT_THROW(t.column("nope"), ConfigError);
}

TEST(Driver, ConfigChecks) {
  SchemeConfig c;
  EXPECT_NO_THROW(c.check());
  c.dt_min = 1.0;
  EXPECT_THROW(c.check(), ConfigError);
  c = {};
  c.beta_s2 = 0.0;
  EXPECT_THROW(c.check(), ConfigError);
  c = {};
  c.t_final = -1.0;
  EXPECT_THROW(c.check(), ConfigError);
  c = {};
  c.stagger_iterations = 0;
  EXPECT_THROW(c.check(), ConfigError);
  auto p = small_problem(small_shear());
  p.loads = nullptr;
  EXPECT_THROW(Simulation(p, SchemeConfig{}), ConfigError);
}

TEST(Driver, StaggerIterationsReachFixedPoint) {
  const auto b = small_shear();
  auto cfg = fixed_dt(b, Scheme::CDG_Q9, 1e-7, 1e-6);
  cfg.stagger_iterations = 5;
  Simulation sim(small_problem(b), cfg);
  for (int i = 0; i < 3; ++i) sim.step();
  EXPECT_EQ(sim.state().step, 3);
  EXPECT_GT(sim.state().pf.maxCoeff(), 0.0);
}
