#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "pfx4/bench.hpp"

using namespace pfx4;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / "pfx4_test_bench" / name;
  fs::create_directories(p.parent_path());
  return p;
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream f(p);
  std::vector<std::string> out;
  for (std::string s; std::getline(f, s);) out.push_back(s);
  return out;
}

PhaseFieldSetup cdg_setup() {
  PhaseFieldSetup s;
  s.coef = PFCoefficients::from(MaterialParams{}, 20e-5);
  return s;
}

/// Band mask on a unit grid from a predicate on (column, row).
CrackBand synthetic_band(std::size_t nx, std::size_t ny, const std::function<bool(int, int)>& on) {
  CrackBand c;
  c.spacing = 1.0;
  c.lo = Vec2(0, 0);
  c.hi = Vec2(static_cast<double>(nx - 1), static_cast<double>(ny - 1));
  c.mask.assign(nx, std::vector<char>(ny, 0));
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) c.mask[i][j] = on(static_cast<int>(i), static_cast<int>(j));
  return c;
}

}  // namespace

TEST(Bench, LoadHistoryIsContinuous) {
  const LoadHistory l{25e-6, 260.0};
  EXPECT_EQ(l.value(-1.0), 0.0);
  EXPECT_DOUBLE_EQ(l.value(12.5e-6), 130.0);
  EXPECT_DOUBLE_EQ(l.value(40e-6), 260.0);
  EXPECT_DOUBLE_EQ(l.integral(25e-6), 0.5 * 260.0 * 25e-6);
  const double e = 1e-12;
  EXPECT_NEAR(l.integral(25e-6 + e) - l.integral(25e-6 - e), 2 * e * 260.0, 1e-15);
  EXPECT_DOUBLE_EQ(l.integral(65e-6), 260.0 * (65e-6 - 12.5e-6));
}

TEST(Bench, ShearPlateLoads) {
  const auto b = BenchmarkSpec::shear_plate();
  const Mesh m = build_mesh(b);
  const double t = 30e-6;
  const auto l = benchmark_loads(m, b, t);
  EXPECT_TRUE(l.tractions.empty());
  std::map<DofId, double> dir;
  for (const auto& d : l.dirichlet) dir[d.dof] = d.value;
  for (NodeId n : m.side_set_nodes("top")) {
    EXPECT_EQ(dir.at(static_cast<DofId>(2 * n)), b.load.integral(t));
    EXPECT_EQ(dir.at(static_cast<DofId>(2 * n + 1)), 0.0);
  }
  for (NodeId n : m.side_set_nodes("bottom")) {
    // the top driven value wins only on top nodes
    EXPECT_EQ(dir.at(static_cast<DofId>(2 * n)), 0.0);
    EXPECT_EQ(dir.at(static_cast<DofId>(2 * n + 1)), 0.0);
  }
  for (NodeId n : m.side_set_nodes("left")) EXPECT_EQ(dir.count(static_cast<DofId>(2 * n + 1)), 1u);
  // the problem's cached loads agree with the direct construction
  const auto p = make_problem(b, std::make_shared<const Mesh>(m));
  const auto l2 = p.loads(t);
  ASSERT_EQ(l2.dirichlet.size(), l.dirichlet.size());
  for (std::size_t i = 0; i < l.dirichlet.size(); ++i) {
    EXPECT_EQ(l2.dirichlet[i].dof, l.dirichlet[i].dof);
    EXPECT_EQ(l2.dirichlet[i].value, l.dirichlet[i].value);
  }
  EXPECT_EQ(p.load_displacement(t), b.load.integral(t));
}

TEST(Bench, BranchingPlateLoads) {
  auto b = BenchmarkSpec::branching_plate();
  b.fine_h = 2.0;
  b.coarse_h = 4.0;
  const Mesh m = build_mesh(b);
  const auto l = benchmark_loads(m, b, 0.5e-6);
  EXPECT_TRUE(l.dirichlet.empty());
  ASSERT_EQ(l.tractions.size(), 2u);
  for (const auto& tr : l.tractions) {
    EXPECT_TRUE(tr.along_normal);
    EXPECT_DOUBLE_EQ(tr.magnitude, 0.5);
  }
  EXPECT_DOUBLE_EQ(make_problem(b, std::make_shared<const Mesh>(m)).loads(5e-6).tractions[0].magnitude, 1.0);
}

TEST(Bench, MeshLevelsHalveTheFineSize) {
  const auto b = BenchmarkSpec::shear_plate();
  EXPECT_DOUBLE_EQ(b.level_h(2), 0.0025);
  EXPECT_THROW(build_mesh(b, -1), ConfigError);
  EXPECT_THROW(build_mesh(b, 7), ConfigError);
  auto c = b;
  c.fine_h = 0.1;
  c.coarse_h = 0.2;
  EXPECT_GT(build_mesh(c, 1).num_elements(), 3 * build_mesh(c, 0).num_elements());
  EXPECT_THROW(BenchmarkSpec::from_name("cube"), ConfigError);
}

TEST(Bench, ConfigRoundTrip) {
  RunConfig c;
  c.bench = BenchmarkSpec::branching_plate();
  c.scheme = default_scheme_config(c.bench, Scheme::MIXED_Q4Q4);
  c.scheme.beta_s2 = 0.1 + 0.2;  // not exactly representable in short decimal
  c.bench.beta_s2 = c.scheme.beta_s2;
  c.scheme.lambda0 = 3.0;
  c.mesh_level = 2;
  c.output.every = 7;
  c.output.dir = "some/dir";
  c.bench.lines.push_back({"extra", Vec2(1.0 / 3.0, 0), Vec2(2, 1), 11});
  const auto path = scratch("round.ini").string();
  write_config(c, path);
  const RunConfig r = read_config(path);
  EXPECT_TRUE(same_config(c, r));
  EXPECT_EQ(r.scheme.beta_s2, 0.1 + 0.2);
  EXPECT_EQ(r.scheme.scheme, Scheme::MIXED_Q4Q4);
  EXPECT_EQ(r.bench.lines.back().a.x(), 1.0 / 3.0);
  EXPECT_EQ(r.output.dir, "some/dir");
  EXPECT_EQ(r.scheme.output_every, 7);
}

TEST(Bench, ConfigOverridesAndErrors) {
  const auto path = scratch("over.ini");
  {
    std::ofstream f(path);
    f << "[problem]\nbenchmark = shear_plate\n[scheme]\nname = MIXED_Q9Q9\nbeta_s2 = 35e-5\n[time]\nt_final = 1e-6\n";
  }
  const RunConfig c = read_config(path.string());
  EXPECT_EQ(c.scheme.scheme, Scheme::MIXED_Q9Q9);
  EXPECT_EQ(c.scheme.beta_s2, 35e-5);
  EXPECT_EQ(c.scheme.t_final, 1e-6);
  EXPECT_EQ(c.bench.material.E_young, 210.0e3);
  auto bad = [&](const std::string& text) {
    {
      std::ofstream f(path);
      f << text;
    }
    EXPECT_THROW(read_config(path.string()), ConfigError) << text;
  };
  bad("[solver]\nx = 1\n");
  bad("[scheme]\nbeta_s2 = abc\n");
  bad("[scheme]\nbeta_s2 = -1\n");
  bad("[scheme]\nname = FEM\n");
  bad("[time]\nadaptive = maybe\n");
  bad("[problem]\nbenchmark = cube\n");
  bad("[problem]\nmesh_level = 1.5\n");
  bad("[problem]\nlines = AB:0:0:1\n");
  bad("[material]\nnu = 0.5\n");
  EXPECT_THROW(read_config(scratch("missing.ini").string() + ".none"), ConfigError);
}

TEST(Bench, VtkOfOneElementAtRest) {
  for (Scheme s : {Scheme::CDG_Q9, Scheme::MIXED_Q4Q4}) {
    ProblemDefinition p;
    p.mesh = std::make_shared<const Mesh>(structured_rect(0, 1, 1, 0, 1, 1));
    p.loads = [](double) { return MomentumLoads{}; };
    SchemeConfig c;
    c.scheme = s;
    Simulation sim(p, c);
    const auto path = scratch("one_" + to_string(s) + ".vtk").string();
    write_vtk(sim, path);
    const auto v = read_vtk_summary(path);
    EXPECT_EQ(v.cells, 1u);
    EXPECT_EQ(v.points, s == Scheme::CDG_Q9 ? 9u : 4u);
    ASSERT_EQ(v.point_scalars.count("d"), 1u);
    for (double d : v.point_scalars.at("d")) EXPECT_EQ(d, 0.0);
    EXPECT_EQ(v.point_scalars.count("psi"), s == Scheme::CDG_Q9 ? 0u : 1u);
    const auto lines = read_lines(path);
    EXPECT_EQ(lines[0], "# vtk DataFile Version 3.0");
    EXPECT_NE(std::find(lines.begin(), lines.end(), s == Scheme::CDG_Q9 ? "28" : "9"), lines.end());
  }
}

TEST(Bench, VtkPointAndCellCounts) {
  const Mesh q4 = structured_rect(0, 1, 3, 0, 1, 2);
  ProblemDefinition p;
  p.mesh = std::make_shared<const Mesh>(q4);
  p.loads = [](double) { return MomentumLoads{}; };
  Simulation sim(p, SchemeConfig{});
  const auto path = scratch("grid.vtk").string();
  write_vtk(sim, path);
  const auto v = read_vtk_summary(path);
  EXPECT_EQ(v.points, sim.phase_field().mesh().num_nodes());
  EXPECT_EQ(v.cells, q4.num_elements());
}

TEST(Bench, SampleLineOnConstantField) {
  const Mesh q4 = structured_rect(0, 2, 4, 0, 1, 2);
  PhaseField pf(q4, cdg_setup());
  pf.set_raw(VecX::Constant(pf.unknowns(), 0.25));
  PointLocator loc(pf.mesh());
  const auto l = sample_line(pf, loc, Vec2(0, 0.5), Vec2(2, 0.5), 21);
  ASSERT_EQ(l.value.size(), 21u);
  EXPECT_EQ(l.outside, 0);
  for (double v : l.value) EXPECT_NEAR(v, 0.25, 1e-15);
  EXPECT_DOUBLE_EQ(l.s.back(), 2.0);
  int warned = 0;
  const auto o = sample_line(pf, loc, Vec2(-1, 0.5), Vec2(2, 0.5), 4, [&](const std::string&) { ++warned; });
  EXPECT_EQ(o.outside, 1);
  EXPECT_EQ(warned, 1);
  EXPECT_THROW(sample_line(pf, loc, Vec2(0, 0), Vec2(1, 0), 1), ConfigError);
}

TEST(Bench, SampleLineFollowsStripProfile) {
  verify::StripOptions o;
  const auto r = verify::run_strip(o);
  PointLocator loc(r.pf->mesh());
  const double h = 1.0 / o.elems_per_l0;
  const auto l = sample_line(*r.pf, loc, Vec2(-6, 0.5 * h), Vec2(6, 0.5 * h), 241);
  for (std::size_t i = 0; i < l.x.size(); ++i) EXPECT_NEAR(l.value[i], verify::profile(l.x[i].x(), 1.0), 1e-2);
}

TEST(Bench, ProbeCsvSchemaAndPrecision) {
  ProbeTable t;
  t.columns = {"time", "d_P"};
  t.rows = {{0.0, 0.0}, {1e-7, 1.0 / 3.0}};
  const auto path = scratch("probes.csv");
  write_probe_csv(t, path.string());
  const auto lines = read_lines(path);
  ASSERT_EQ(lines.size(), 3u);
  EXPECT_EQ(lines[0], "time,d_P");
  const auto comma = lines[2].find(',');
  EXPECT_EQ(std::stod(lines[2].substr(comma + 1)), 1.0 / 3.0);
  EXPECT_EQ(lines[1], "0.00000000000000000e+00,0.00000000000000000e+00");

  LineSample s;
  s.s = {0.0, 1.0};
  s.x = {Vec2(0, 0), Vec2(1, 0)};
  s.value = {0.5, 1.0};
  const auto lp = scratch("line.csv");
  write_line_csv(s, 2e-6, lp.string());
  const auto ll = read_lines(lp);
  ASSERT_EQ(ll.size(), 3u);
  EXPECT_EQ(ll[0], "time,arclength,x,y,d");
  EXPECT_THROW(write_probe_csv(t, "/nonexistent_dir/x.csv"), Error);
}

TEST(Bench, HausdorffOnKnownSets) {
  const std::vector<Vec2> a{{0, 0}, {1, 0}, {2, 0}}, b{{0, 1}, {1, 1}, {2, 1}}, c{{0, 0}, {2, 0}, {5, 0}};
  EXPECT_DOUBLE_EQ(hausdorff(a, b), 1.0);
  EXPECT_DOUBLE_EQ(hausdorff(a, a), 0.0);
  EXPECT_DOUBLE_EQ(hausdorff(a, c), 3.0);
  EXPECT_DOUBLE_EQ(hausdorff(c, a), 3.0);
  EXPECT_EQ(hausdorff({}, {}), 0.0);
  EXPECT_TRUE(std::isinf(hausdorff(a, {})));
}

TEST(Bench, CrackBandOfHorizontalStripe) {
  const Mesh q4 = structured_rect(0, 1, 20, 0, 1, 20);
  PhaseField pf(q4, cdg_setup());
  VecX x(pf.unknowns());
  const Mesh& m = pf.mesh();
  for (NodeId n = 0; n < m.num_nodes(); ++n)
    x(static_cast<Eigen::Index>(n)) = std::max(0.0, 1.0 - std::abs(m.nodes[n].y() - 0.5) / 0.1);
  pf.set_raw(x);
  PointLocator loc(m);
  const auto band = extract_crack_band(pf, loc, Vec2(0, 0), Vec2(1, 1), 0.01);
  ASSERT_FALSE(band.empty());
  std::vector<Vec2> ideal;
  for (int i = 0; i <= 100; ++i) ideal.push_back(Vec2(0.01 * i, 0.5));
  // the row scan adds run midpoints inside the band (half width 0.005)
  EXPECT_LE(hausdorff(band.centerline, ideal), 0.0051);
  const auto none = extract_crack_band(pf, loc, Vec2(0, 0), Vec2(1, 0.3), 0.01);
  EXPECT_TRUE(none.empty());
}

TEST(Bench, BranchDetectionOnSyntheticBands) {
  // stem along row 20 up to column 30, then two arms diverging by one row
  // per two columns
  const auto y = synthetic_band(61, 41, [](int i, int j) {
    if (i <= 30) return j == 20;
    const int off = (i - 30) / 2;
    return j == 20 + off || j == 20 - off;
  });
  const auto b = detect_branching(y, 0.0, 20.0, 1.5);
  EXPECT_TRUE(b.branched);
  // at column 32 the arms sit two rows apart, more than min_gap
  EXPECT_DOUBLE_EQ(b.branch_x, 32.0);
  EXPECT_DOUBLE_EQ(b.tip_x, 60.0);
  EXPECT_DOUBLE_EQ(b.upper_tip.x(), 60.0);
  EXPECT_DOUBLE_EQ(b.lower_tip.x(), 60.0);
  EXPECT_DOUBLE_EQ(b.upper_tip.y() - 20.0, 20.0 - b.lower_tip.y());

  const auto straight = synthetic_band(61, 41, [](int, int j) { return j == 20 || j == 21; });
  EXPECT_FALSE(detect_branching(straight, 0.0, 20.5, 1.5).branched);
  // a short double segment is not a branch
  const auto blip = synthetic_band(61, 41, [](int i, int j) { return j == 20 || (i >= 10 && i < 12 && j == 25); });
  EXPECT_FALSE(detect_branching(blip, 0.0, 20.0, 1.5).branched);
  EXPECT_FALSE(detect_branching(synthetic_band(5, 5, [](int, int) { return false; }), 0, 2, 1).branched);
}

TEST(Bench, RunBenchmarkWritesOutputs) {
  RunConfig c;
  c.bench = BenchmarkSpec::shear_plate();
  c.bench.fine_h = 0.1;
  c.bench.coarse_h = 0.2;
  c.scheme = default_scheme_config(c.bench, Scheme::MIXED_Q4Q4);
  c.scheme.t_final = 3e-8;
  c.output.dir = scratch("run").string();
  fs::remove_all(c.output.dir);
  c.output.every = 2;
  const auto r = run_benchmark(c);
  EXPECT_EQ(r.steps, 3);
  EXPECT_EQ(r.vtk_files.size(), 3u);  // steps 0, 2 and 3
  EXPECT_EQ(r.line_files.size(), 3u);
  const auto rows = read_lines(r.probe_csv);
  EXPECT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0].substr(0, 15), "time,step,dt,ne");
  EXPECT_TRUE(fs::exists(fs::path(c.output.dir) / "line_AB_3.csv"));
}

TEST(Bench, ShippedBranchingMeshMatchesGenerator) {
  auto b = BenchmarkSpec::branching_plate();
  const Mesh gen = build_mesh(b);
  b.mesh_path = std::string(PFX4_DATA_DIR) + "/branching_plate_coarse.msh";
  const Mesh file = build_mesh(b);
  ASSERT_EQ(file.num_nodes(), gen.num_nodes());
  ASSERT_EQ(file.num_elements(), gen.num_elements());
  for (NodeId i = 0; i < gen.num_nodes(); ++i) ASSERT_EQ(file.nodes[i], gen.nodes[i]);
  EXPECT_EQ(file.conn, gen.conn);
  for (const auto& [name, faces] : gen.side_sets) EXPECT_EQ(file.side_sets.at(name).size(), faces.size()) << name;
}
