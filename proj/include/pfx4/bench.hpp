#pragma once

// Benchmark definitions (shear plate, branching plate), run configuration
// files, field and probe output, and crack-path post-processing.

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "pfx4/driver.hpp"
#include "pfx4/verify.hpp"

namespace pfx4 {

struct LineProbe {
  std::string name;
  Vec2 a = Vec2::Zero(), b = Vec2::Zero();
  int samples = 201;
};

/// Ramp to `amplitude` over [0, t_ramp], then hold. For a driven edge the
/// amplitude is a velocity and the prescribed displacement is its integral.
struct LoadHistory {
  double t_ramp = 25e-6;
  double amplitude = 260.0;

  double value(double t) const { return amplitude * std::clamp(t / t_ramp, 0.0, 1.0); }
  double integral(double t) const {
    if (t <= 0.0) return 0.0;
    if (t <= t_ramp) return 0.5 * amplitude * t * t / t_ramp;
    return amplitude * (t - 0.5 * t_ramp);
  }
};

/// Boundary conditions by side-set name.
struct BoundaryTables {
  std::vector<std::string> fix_x, fix_y;  // homogeneous displacement components
  std::vector<std::string> drive_x;       // u_x = integral of the load history
  std::vector<std::string> traction;      // normal traction = load history
  std::vector<std::string> d2_sets;       // crack-insulated sides
  std::vector<std::string> psi_free_sets;
  std::string reaction_set;               // load-displacement force
};

struct BenchmarkSpec {
  std::string name = "shear_plate";  // shear_plate | branching_plate | custom
  MaterialParams material;
  LoadHistory load;
  double t_final = 65e-6;
  BoundaryTables bc;
  // geometry
  double width = 1.0, height = 1.0;
  double notch_length = 0.5, notch_y = 0.5;  // shear plate slit
  double notch_radius = 0.5;                 // branching plate tip radius
  // level-0 element sizes: inside the refined region / elsewhere
  double fine_h = 0.01, coarse_h = 0.04;
  // refined region [fine_x0, fine_x1] x [fine_y0, fine_y1]
  double fine_x0 = 0.45, fine_x1 = 1.0, fine_y0 = 0.0, fine_y1 = 0.55;
  std::string mesh_path;  // Gmsh file instead of the generator when set
  // scheme defaults
  double beta_s2 = 20e-5;
  double newmark_beta = 0.3025, newmark_gamma = 0.6;
  double dt_initial = 1e-8, dt_min = 1e-13, dt_max = 1e-7;
  bool adaptive = true;
  // probes (coordinates of named points and segments)
  std::vector<std::pair<std::string, Vec2>> points;
  std::vector<LineProbe> lines;

  /// Shear plate: 1 mm square, slit from the left edge to P at the center,
  /// bottom clamped, u_y = 0 on the other sides, top driven in x. Probe
  /// points and segment AB are read off the geometry sketch.
  static BenchmarkSpec shear_plate() {
    BenchmarkSpec s;
    s.name = "shear_plate";
    s.material = MaterialParams{210.0e3, 0.3, 8.0e-9, 2.7, 3.75e-3, 1.0e-6};
    s.load = {25e-6, 260.0};
    s.t_final = 65e-6;
    s.bc.fix_x = {"bottom"};
    s.bc.fix_y = {"bottom", "left", "right", "top"};
    s.bc.drive_x = {"top"};
    s.bc.d2_sets = {"bottom", "right", "top", "left"};
    s.bc.psi_free_sets = s.bc.d2_sets;
    s.bc.reaction_set = "top";
    s.beta_s2 = 20e-5;
    s.points = {{"P", Vec2(0.5, 0.5)}};
    s.lines = {{"AB", Vec2(0.0, 0.25), Vec2(1.0, 0.25), 401}};
    return s;
  }

  /// Branching plate: 100 x 40 mm (x by y, centered on y = 0), rounded
  /// notch from the left edge to C = (50, 0), normal traction on top and
  /// bottom, constant time step. D = (100, 0); Q is the upper right corner.
  static BenchmarkSpec branching_plate() {
    BenchmarkSpec s;
    s.name = "branching_plate";
    s.material = MaterialParams{32.0e3, 0.2, 2.45e-9, 3.0e-3, 0.125, 1.0e-6};
    s.load = {1e-6, 1.0};
    s.t_final = 95e-6;
    s.bc.traction = {"top", "bottom"};
    s.bc.d2_sets = {"bottom", "right", "top", "left"};
    s.bc.psi_free_sets = s.bc.d2_sets;
    s.width = 100.0;
    s.height = 40.0;
    s.notch_length = 50.0;
    s.notch_y = 0.0;
    s.notch_radius = 0.5;
    s.fine_h = 0.25;
    s.coarse_h = 2.0;
    s.fine_x0 = 49.0;
    s.fine_x1 = 100.0;
    s.fine_y0 = -12.0;
    s.fine_y1 = 12.0;
    s.beta_s2 = 5e-2;
    s.dt_initial = s.dt_max = 1e-7;
    s.adaptive = false;
    s.points = {{"C", Vec2(50.0, 0.0)}, {"Q", Vec2(100.0, 20.0)}};
    s.lines = {{"CD", Vec2(50.0, 0.0), Vec2(100.0, 0.0), 501}};
    return s;
  }

  static BenchmarkSpec from_name(const std::string& n) {
    if (n == "shear_plate") return shear_plate();
    if (n == "branching_plate") return branching_plate();
    throw ConfigError("unknown benchmark '" + n + "' (expected shear_plate or branching_plate)");
  }

  /// Refined-region element size at a mesh level (halved per level).
  double level_h(int level) const { return fine_h / static_cast<double>(1 << level); }
};

/// Q4 mesh for a benchmark at a refinement level.
inline Mesh build_mesh(const BenchmarkSpec& s, int level = 0) {
  if (level < 0 || level > 6) throw ConfigError("mesh level must lie in [0, 6]");
  if (!s.mesh_path.empty()) return read_gmsh_file(s.mesh_path);
  const double f = 1.0 / static_cast<double>(1 << level);
  const double hf = s.fine_h * f, hc = s.coarse_h * f;
  if (s.name == "branching_plate") {
    BranchingPlateGeometry g;
    g.width = s.width;
    g.height = s.height;
    g.notch_tip_x = s.notch_length;
    g.notch_radius = s.notch_radius;
    g.fine_h = hf;
    g.coarse_h = hc;
    g.fine_x0 = s.fine_x0;
    g.fine_y = s.fine_y1;
    return generate_branching_plate(g);
  }
  if (s.name == "shear_plate") {
    const double blend = 3.0 * hc;
    NotchRefinement r;
    r.x_size = SizeAnchors{{{0.0, hc}, {s.fine_x0 - blend, hc}, {s.fine_x0, hf}, {s.fine_x1, hf}}};
    r.y_size = SizeAnchors{{{s.fine_y0, hf}, {s.fine_y1, hf}, {s.fine_y1 + blend, hc}, {s.height, hc}}};
    return generate_notched_square(s.width, s.notch_length, s.notch_y, r);
  }
  throw ConfigError("benchmark '" + s.name + "' has no generator; set a mesh path");
}

/// Dirichlet and traction data at time t.
inline MomentumLoads benchmark_loads(const Mesh& m, const BenchmarkSpec& s, double t) {
  std::map<DofId, double> dir;
  for (const auto& set : s.bc.fix_x)
    for (NodeId n : m.side_set_nodes(set)) dir[static_cast<DofId>(2 * n)] = 0.0;
  for (const auto& set : s.bc.fix_y)
    for (NodeId n : m.side_set_nodes(set)) dir[static_cast<DofId>(2 * n + 1)] = 0.0;
  const double ux = s.load.integral(t);
  for (const auto& set : s.bc.drive_x)
    for (NodeId n : m.side_set_nodes(set)) dir[static_cast<DofId>(2 * n)] = ux;
  MomentumLoads l;
  for (const auto& [dof, v] : dir) l.dirichlet.push_back({dof, v});
  const double p = s.load.value(t);
  for (const auto& set : s.bc.traction) l.tractions.push_back({set, p, true, Vec2::Zero()});
  return l;
}

inline ProblemDefinition make_problem(const BenchmarkSpec& s, std::shared_ptr<const Mesh> mesh) {
  ProblemDefinition p;
  p.name = s.name;
  p.mesh = mesh;
  p.material = s.material;
  p.d2_sets = s.bc.d2_sets;
  p.psi_free_sets = s.bc.psi_free_sets;
  const Mesh* m = mesh.get();
  // Dirichlet dof lists do not change in time: build them once.
  const MomentumLoads base = benchmark_loads(*m, s, 0.0);
  std::vector<char> driven(2 * m->num_nodes(), 0);
  for (const auto& set : s.bc.drive_x)
    for (NodeId n : m->side_set_nodes(set)) driven[2 * n] = 1;
  p.loads = [base, driven, s](double t) {
    MomentumLoads l = base;
    const double ux = s.load.integral(t);
    for (auto& bc : l.dirichlet)
      if (driven[static_cast<std::size_t>(bc.dof)]) bc.value = ux;
    for (auto& tr : l.tractions) tr.magnitude = s.load.value(t);
    return l;
  };
  p.reaction_set = s.bc.reaction_set;
  p.reaction_component = 0;
  if (!s.bc.drive_x.empty()) p.load_displacement = [s](double t) { return s.load.integral(t); };
  else p.load_displacement = [s](double t) { return s.load.value(t); };
  p.probe_points = s.points;
  return p;
}

inline SchemeConfig default_scheme_config(const BenchmarkSpec& s, Scheme scheme) {
  SchemeConfig c;
  c.scheme = scheme;
  c.beta_s2 = s.beta_s2;
  c.newmark_beta = s.newmark_beta;
  c.newmark_gamma = s.newmark_gamma;
  c.dt_initial = s.dt_initial;
  c.dt_min = s.dt_min;
  c.dt_max = s.dt_max;
  c.adaptive = s.adaptive;
  c.t_final = s.t_final;
  return c;
}

// ---------------------------------------------------------------------------
// Run configuration (INI)

struct OutputOptions {
  std::string dir = "out";
  int every = 0;        // field / line output cadence in steps, 0: first and last only
  bool vtk = true;
  bool lines = true;
};

struct RunConfig {
  BenchmarkSpec bench;
  SchemeConfig scheme;
  int mesh_level = 0;
  OutputOptions output;
};

namespace detail {

inline std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + v[i];
  return s;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else if (c != ' ' && c != '\t') {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline double to_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + s + "'");
  }
}

}  // namespace detail

inline boost::property_tree::ptree to_ptree(const RunConfig& c) {
  using detail::fmt17;
  using detail::join;
  boost::property_tree::ptree t;
  const auto& b = c.bench;
  t.put("problem.benchmark", b.name);
  t.put("problem.mesh", b.mesh_path);
  t.put("problem.mesh_level", c.mesh_level);
  t.put("problem.width", fmt17(b.width));
  t.put("problem.height", fmt17(b.height));
  t.put("problem.notch_length", fmt17(b.notch_length));
  t.put("problem.notch_y", fmt17(b.notch_y));
  t.put("problem.notch_radius", fmt17(b.notch_radius));
  t.put("problem.fine_h", fmt17(b.fine_h));
  t.put("problem.coarse_h", fmt17(b.coarse_h));
  t.put("problem.fine_box", fmt17(b.fine_x0) + "," + fmt17(b.fine_x1) + "," + fmt17(b.fine_y0) + "," + fmt17(b.fine_y1));
  t.put("problem.fix_x", join(b.bc.fix_x));
  t.put("problem.fix_y", join(b.bc.fix_y));
  t.put("problem.drive_x", join(b.bc.drive_x));
  t.put("problem.traction", join(b.bc.traction));
  t.put("problem.d2_sets", join(b.bc.d2_sets));
  t.put("problem.psi_free_sets", join(b.bc.psi_free_sets));
  t.put("problem.reaction_set", b.bc.reaction_set);
  std::vector<std::string> pts, lines;
  for (const auto& [n, x] : b.points) pts.push_back(n + ":" + fmt17(x.x()) + ":" + fmt17(x.y()));
  for (const auto& l : b.lines)
    lines.push_back(l.name + ":" + fmt17(l.a.x()) + ":" + fmt17(l.a.y()) + ":" + fmt17(l.b.x()) + ":" +
                    fmt17(l.b.y()) + ":" + std::to_string(l.samples));
  t.put("problem.points", join(pts));
  t.put("problem.lines", join(lines));
  t.put("problem.load_ramp", fmt17(b.load.t_ramp));
  t.put("problem.load_amplitude", fmt17(b.load.amplitude));

  const auto& m = b.material;
  t.put("material.E", fmt17(m.E_young));
  t.put("material.nu", fmt17(m.nu));
  t.put("material.rho", fmt17(m.rho0));
  t.put("material.Gc", fmt17(m.Gc));
  t.put("material.l0", fmt17(m.l0));
  t.put("material.eta0", fmt17(m.eta0));

  const auto& s = c.scheme;
  t.put("scheme.name", to_string(s.scheme));
  t.put("scheme.beta_s2", fmt17(s.beta_s2));
  t.put("scheme.lambda0", fmt17(s.lambda0));
  t.put("scheme.stagger_iterations", s.stagger_iterations);
  t.put("newmark.beta", fmt17(s.newmark_beta));
  t.put("newmark.gamma", fmt17(s.newmark_gamma));
  t.put("newmark.quasi_static", s.quasi_static);
  t.put("time.dt_initial", fmt17(s.dt_initial));
  t.put("time.dt_min", fmt17(s.dt_min));
  t.put("time.dt_max", fmt17(s.dt_max));
  t.put("time.adaptive", s.adaptive);
  t.put("time.t_final", fmt17(s.t_final));
  t.put("output.dir", c.output.dir);
  t.put("output.every", c.output.every);
  t.put("output.vtk", c.output.vtk);
  t.put("output.lines", c.output.lines);
  return t;
}

/// Reads a configuration tree. `problem.benchmark` selects the defaults;
/// every other key overrides one value.
inline RunConfig from_ptree(const boost::property_tree::ptree& t) {
  using detail::split;
  using detail::to_double;
  for (const auto& [section, sub] : t) {
    static const std::set<std::string> known{"problem", "material", "scheme", "newmark", "time", "output"};
    if (!known.count(section)) throw ConfigError("unknown config section '" + section + "'");
  }
  RunConfig c;
  const std::string name = t.get<std::string>("problem.benchmark", "shear_plate");
  c.bench = name == "custom" ? BenchmarkSpec{} : BenchmarkSpec::from_name(name);
  c.bench.name = name;
  if (name == "custom") c.bench.points.clear(), c.bench.lines.clear();
  auto& b = c.bench;
  auto num = [&](const std::string& key, double& v) {
    if (auto o = t.get_optional<std::string>(key)) v = to_double(*o, key);
  };
  auto list = [&](const std::string& key, std::vector<std::string>& v) {
    if (auto o = t.get_optional<std::string>(key)) v = split(*o, ',');
  };
  auto flag = [&](const std::string& key, bool& v) {
    if (auto o = t.get_optional<std::string>(key)) {
      if (*o == "true" || *o == "1") v = true;
      else if (*o == "false" || *o == "0") v = false;
      else throw ConfigError("config key '" + key + "': expected true or false");
    }
  };
  auto integer = [&](const std::string& key, int& v) {
    if (auto o = t.get_optional<std::string>(key)) {
      const double x = to_double(*o, key);
      if (x != std::floor(x)) throw ConfigError("config key '" + key + "': expected an integer");
      v = static_cast<int>(x);
    }
  };
  if (auto o = t.get_optional<std::string>("problem.mesh")) b.mesh_path = *o;
  integer("problem.mesh_level", c.mesh_level);
  num("problem.width", b.width);
  num("problem.height", b.height);
  num("problem.notch_length", b.notch_length);
  num("problem.notch_y", b.notch_y);
  num("problem.notch_radius", b.notch_radius);
  num("problem.fine_h", b.fine_h);
  num("problem.coarse_h", b.coarse_h);
  if (auto o = t.get_optional<std::string>("problem.fine_box")) {
    const auto v = split(*o, ',');
    if (v.size() != 4) throw ConfigError("problem.fine_box needs x0,x1,y0,y1");
    b.fine_x0 = to_double(v[0], "problem.fine_box");
    b.fine_x1 = to_double(v[1], "problem.fine_box");
    b.fine_y0 = to_double(v[2], "problem.fine_box");
    b.fine_y1 = to_double(v[3], "problem.fine_box");
  }
  list("problem.fix_x", b.bc.fix_x);
  list("problem.fix_y", b.bc.fix_y);
  list("problem.drive_x", b.bc.drive_x);
  list("problem.traction", b.bc.traction);
  list("problem.d2_sets", b.bc.d2_sets);
  list("problem.psi_free_sets", b.bc.psi_free_sets);
  if (auto o = t.get_optional<std::string>("problem.reaction_set")) b.bc.reaction_set = *o;
  if (auto o = t.get_optional<std::string>("problem.points")) {
    b.points.clear();
    for (const auto& item : split(*o, ',')) {
      const auto f = split(item, ':');
      if (f.size() != 3) throw ConfigError("problem.points entries are name:x:y");
      b.points.push_back({f[0], Vec2(to_double(f[1], "problem.points"), to_double(f[2], "problem.points"))});
    }
  }
  if (auto o = t.get_optional<std::string>("problem.lines")) {
    b.lines.clear();
    for (const auto& item : split(*o, ',')) {
      const auto f = split(item, ':');
      if (f.size() != 6) throw ConfigError("problem.lines entries are name:x0:y0:x1:y1:samples");
      LineProbe l{f[0], Vec2(to_double(f[1], "problem.lines"), to_double(f[2], "problem.lines")),
                  Vec2(to_double(f[3], "problem.lines"), to_double(f[4], "problem.lines")),
                  static_cast<int>(to_double(f[5], "problem.lines"))};
      if (l.samples < 2) throw ConfigError("problem.lines: need at least 2 samples");
      b.lines.push_back(l);
    }
  }
  num("problem.load_ramp", b.load.t_ramp);
  num("problem.load_amplitude", b.load.amplitude);
  num("material.E", b.material.E_young);
  num("material.nu", b.material.nu);
  num("material.rho", b.material.rho0);
  num("material.Gc", b.material.Gc);
  num("material.l0", b.material.l0);
  num("material.eta0", b.material.eta0);

  c.scheme = default_scheme_config(b, Scheme::CDG_Q9);
  auto& s = c.scheme;
  if (auto o = t.get_optional<std::string>("scheme.name")) s.scheme = scheme_from_string(*o);
  num("scheme.beta_s2", s.beta_s2);
  num("scheme.lambda0", s.lambda0);
  integer("scheme.stagger_iterations", s.stagger_iterations);
  num("newmark.beta", s.newmark_beta);
  num("newmark.gamma", s.newmark_gamma);
  flag("newmark.quasi_static", s.quasi_static);
  num("time.dt_initial", s.dt_initial);
  num("time.dt_min", s.dt_min);
  num("time.dt_max", s.dt_max);
  flag("time.adaptive", s.adaptive);
  num("time.t_final", s.t_final);
  // keep the benchmark record in step with the scheme section
  b.beta_s2 = s.beta_s2;
  b.newmark_beta = s.newmark_beta;
  b.newmark_gamma = s.newmark_gamma;
  b.dt_initial = s.dt_initial;
  b.dt_min = s.dt_min;
  b.dt_max = s.dt_max;
  b.adaptive = s.adaptive;
  b.t_final = s.t_final;
  if (auto o = t.get_optional<std::string>("output.dir")) c.output.dir = *o;
  integer("output.every", c.output.every);
  flag("output.vtk", c.output.vtk);
  flag("output.lines", c.output.lines);
  s.output_every = c.output.every;
  b.material.check();
  s.check();
  if (c.mesh_level < 0 || c.mesh_level > 6) throw ConfigError("problem.mesh_level must lie in [0, 6]");
  return c;
}

inline RunConfig read_config(const std::string& path) {
  boost::property_tree::ptree t;
  try {
    boost::property_tree::read_ini(path, t);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return from_ptree(t);
}

inline void write_config(const RunConfig& c, const std::string& path) {
  try {
    boost::property_tree::write_ini(path, to_ptree(c));
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("cannot write config: ") + e.what());
  }
}

/// Field-by-field equality (exact).
inline bool same_config(const RunConfig& x, const RunConfig& y) {
  return to_ptree(x) == to_ptree(y);
}

// ---------------------------------------------------------------------------
// Probes and lines

struct LineSample {
  std::vector<double> s;  // arclength from the start point
  std::vector<Vec2> x;
  std::vector<double> value;
  int outside = 0;        // samples evaluated by nearest-element fallback
};

/// d sampled at n equally spaced points of segment [a, b].
inline LineSample sample_line(const PhaseField& pf, const PointLocator& loc, const Vec2& a, const Vec2& b, int n,
                              const std::function<void(const std::string&)>& warn = nullptr) {
  if (n < 2) throw ConfigError("sample_line needs at least 2 samples");
  LineSample r;
  const double L = (b - a).norm();
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / (n - 1);
    const Vec2 x = a + t * (b - a);
    const auto hit = loc.locate(x);
    if (!hit.inside) ++r.outside;
    r.s.push_back(t * L);
    r.x.push_back(x);
    r.value.push_back(pf.d_at(hit.elem, hit.ref.x(), hit.ref.y()));
  }
  if (r.outside && warn) warn(std::to_string(r.outside) + " line samples outside the mesh; nearest element used");
  return r;
}

namespace detail {

inline void check_stream(const std::ofstream& f, const std::string& path) {
  if (!f) throw Error("cannot write '" + path + "'");
}

inline std::string sci(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17e", x);
  return buf;
}

}  // namespace detail

/// Header row, then one row per record, %.17e.
inline void write_probe_csv(const ProbeTable& t, const std::string& path) {
  std::ofstream f(path);
  detail::check_stream(f, path);
  for (std::size_t i = 0; i < t.columns.size(); ++i) f << (i ? "," : "") << t.columns[i];
  f << '\n';
  for (const auto& r : t.rows) {
    for (std::size_t i = 0; i < r.size(); ++i) f << (i ? "," : "") << detail::sci(r[i]);
    f << '\n';
  }
  detail::check_stream(f, path);
}

inline void write_line_csv(const LineSample& l, double time, const std::string& path) {
  std::ofstream f(path);
  detail::check_stream(f, path);
  f << "time,arclength,x,y,d\n";
  for (std::size_t i = 0; i < l.s.size(); ++i)
    f << detail::sci(time) << ',' << detail::sci(l.s[i]) << ',' << detail::sci(l.x[i].x()) << ','
      << detail::sci(l.x[i].y()) << ',' << detail::sci(l.value[i]) << '\n';
  detail::check_stream(f, path);
}

// ---------------------------------------------------------------------------
// VTK legacy ASCII

/// Writes the phase-field mesh with point data d, displacement (z = 0) and
/// psi (mixed schemes), and cell data H_max. Q9 meshes use cell type 28.
inline void write_vtk(const Simulation& sim, const std::string& path) {
  const PhaseField& pf = sim.phase_field();
  const Mesh& m = pf.mesh();
  const Mesh& q4 = *sim.problem().mesh;
  const SimulationState& st = sim.state();
  const auto nn = m.num_nodes();
  std::vector<Vec2> disp(nn, Vec2::Zero());
  std::vector<char> set(nn, 0);
  for (ElemId e = 0; e < m.num_elements(); ++e) {
    const auto el = m.element(e);
    const auto e4 = q4.element(e);
    std::array<Vec2, 4> uc;
    for (int a = 0; a < 4; ++a) {
      const auto i = 2 * static_cast<Eigen::Index>(e4[a]);
      uc[a] = Vec2(st.momentum.u(i), st.momentum.u(i + 1));
    }
    for (int a = 0; a < m.nodes_per_element(); ++a) {
      if (set[el[a]]) continue;
      Vec2 v;
      if (a < 4) v = uc[a];
      else if (a < 8) v = 0.5 * (uc[a - 4] + uc[(a - 3) % 4]);
      else v = 0.25 * (uc[0] + uc[1] + uc[2] + uc[3]);
      disp[el[a]] = v;
      set[el[a]] = 1;
    }
  }
  std::ofstream f(path);
  detail::check_stream(f, path);
  f << "# vtk DataFile Version 3.0\npfx4 t=" << detail::sci(st.time) << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  f << "POINTS " << nn << " double\n";
  f << std::setprecision(17);
  for (const auto& p : m.nodes) f << p.x() << ' ' << p.y() << " 0\n";
  const int npe = m.nodes_per_element();
  f << "CELLS " << m.num_elements() << ' ' << m.num_elements() * static_cast<std::size_t>(npe + 1) << '\n';
  for (ElemId e = 0; e < m.num_elements(); ++e) {
    f << npe;
    for (NodeId n : m.element(e)) f << ' ' << n;
    f << '\n';
  }
  f << "CELL_TYPES " << m.num_elements() << '\n';
  for (ElemId e = 0; e < m.num_elements(); ++e) f << (npe == 9 ? 28 : 9) << '\n';
  f << "POINT_DATA " << nn << "\nSCALARS d double 1\nLOOKUP_TABLE default\n";
  const VecX& x = st.pf;
  for (std::size_t i = 0; i < nn; ++i) f << x(static_cast<Eigen::Index>(i)) << '\n';
  f << "VECTORS displacement double\n";
  for (const auto& v : disp) f << v.x() << ' ' << v.y() << " 0\n";
  if (pf.mixed()) {
    f << "SCALARS psi double 1\nLOOKUP_TABLE default\n";
    for (std::size_t i = 0; i < nn; ++i) f << x(static_cast<Eigen::Index>(nn + i)) << '\n';
  }
  f << "CELL_DATA " << m.num_elements() << "\nSCALARS H_max double 1\nLOOKUP_TABLE default\n";
  const int nq = st.H.qp_per_element;
  for (ElemId e = 0; e < m.num_elements(); ++e) {
    double h = 0.0;
    for (int q = 0; q < nq; ++q) h = std::max(h, st.H.at(e, q));
    f << h << '\n';
  }
  detail::check_stream(f, path);
}

/// Minimal reader for files written by write_vtk: point and cell counts and
/// the scalar point arrays.
struct VtkSummary {
  std::size_t points = 0, cells = 0;
  std::map<std::string, std::vector<double>> point_scalars;
};

inline VtkSummary read_vtk_summary(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw Error("cannot open '" + path + "'");
  VtkSummary s;
  std::string tok;
  bool point_data = false;
  while (f >> tok) {
    if (tok == "POINTS") {
      f >> s.points >> tok;
    } else if (tok == "CELLS") {
      f >> s.cells;
    } else if (tok == "POINT_DATA") {
      point_data = true;
      f >> tok;
    } else if (tok == "CELL_DATA") {
      point_data = false;
    } else if (tok == "SCALARS" && point_data) {
      std::string name, type, lut, table;
      int comps = 1;
      f >> name >> type >> comps >> lut >> table;
      auto& v = s.point_scalars[name];
      v.resize(s.points);
      for (auto& x : v) f >> x;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Crack paths

/// Points of the d >= threshold band on a regular grid of spacing `h` over
/// the box [lo, hi]. The centerline is the union of run midpoints along grid
/// rows and columns (a point from every cross-section of the band).
struct CrackBand {
  std::vector<Vec2> centerline;
  double spacing = 0.0;
  Vec2 lo = Vec2::Zero(), hi = Vec2::Zero();
  std::vector<std::vector<char>> mask;  // [column][row]
  bool empty() const { return centerline.empty(); }
};

inline CrackBand extract_crack_band(const PhaseField& pf, const PointLocator& loc, const Vec2& lo, const Vec2& hi,
                                    double h, double threshold = 0.95) {
  CrackBand c;
  c.spacing = h;
  c.lo = lo;
  c.hi = hi;
  const auto nx = static_cast<std::size_t>(std::floor((hi.x() - lo.x()) / h)) + 1;
  const auto ny = static_cast<std::size_t>(std::floor((hi.y() - lo.y()) / h)) + 1;
  c.mask.assign(nx, std::vector<char>(ny, 0));
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      const Vec2 x(lo.x() + h * static_cast<double>(i), lo.y() + h * static_cast<double>(j));
      if (auto hit = loc.find(x)) c.mask[i][j] = pf.d_at(hit->elem, hit->ref.x(), hit->ref.y()) >= threshold;
    }
  auto point = [&](double i, double j) { return Vec2(lo.x() + h * i, lo.y() + h * j); };
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny;) {
      if (!c.mask[i][j]) {
        ++j;
        continue;
      }
      std::size_t k = j;
      while (k < ny && c.mask[i][k]) ++k;
      c.centerline.push_back(point(static_cast<double>(i), 0.5 * static_cast<double>(j + k - 1)));
      j = k;
    }
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx;) {
      if (!c.mask[i][j]) {
        ++i;
        continue;
      }
      std::size_t k = i;
      while (k < nx && c.mask[k][j]) ++k;
      c.centerline.push_back(point(0.5 * static_cast<double>(i + k - 1), static_cast<double>(j)));
      i = k;
    }
  return c;
}

/// Symmetric Hausdorff distance; infinity when exactly one set is empty.
inline double hausdorff(const std::vector<Vec2>& a, const std::vector<Vec2>& b) {
  if (a.empty() && b.empty()) return 0.0;
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  auto directed = [](const std::vector<Vec2>& p, const std::vector<Vec2>& q) {
    double worst = 0.0;
    for (const auto& x : p) {
      double best = std::numeric_limits<double>::max();
      for (const auto& y : q) best = std::min(best, (x - y).squaredNorm());
      worst = std::max(worst, best);
    }
    return std::sqrt(worst);
  };
  return std::max(directed(a, b), directed(b, a));
}

struct BranchInfo {
  bool branched = false;
  double branch_x = 0.0;  // first column with two separated band runs
  Vec2 upper_tip = Vec2::Zero(), lower_tip = Vec2::Zero();
  double tip_x = 0.0;     // rightmost band point
};

/// Scans grid columns from left to right, counting band runs separated by
/// more than `min_gap`. A branch is reported at the first column from
/// which every later column holding band points has two or more runs, for
/// at least `persist` consecutive columns.
inline BranchInfo detect_branching(const CrackBand& c, double x_start, double y_mid, double min_gap, int persist = 4) {
  BranchInfo b;
  const std::size_t nx = c.mask.size();
  if (nx == 0) return b;
  const std::size_t ny = c.mask[0].size();
  std::vector<int> runs(nx, 0);
  bool any = false;
  for (std::size_t i = 0; i < nx; ++i) {
    const double x = c.lo.x() + c.spacing * static_cast<double>(i);
    if (x < x_start) continue;
    int count = 0;
    std::ptrdiff_t last_end = -1000000;
    for (std::size_t j = 0; j < ny;) {
      if (!c.mask[i][j]) {
        ++j;
        continue;
      }
      std::size_t k = j;
      while (k < ny && c.mask[i][k]) ++k;
      if (static_cast<double>(static_cast<std::ptrdiff_t>(j) - last_end) * c.spacing > min_gap) ++count;
      last_end = static_cast<std::ptrdiff_t>(k - 1);
      j = k;
    }
    runs[i] = count;
    if (count > 0) {
      any = true;
      b.tip_x = x;
    }
  }
  if (!any) return b;
  for (std::size_t i = 0; i + static_cast<std::size_t>(persist) <= nx; ++i) {
    bool ok = runs[i] >= 2;
    for (int k = 1; ok && k < persist; ++k) ok = runs[i + static_cast<std::size_t>(k)] >= 2;
    if (ok) {
      b.branched = true;
      b.branch_x = c.lo.x() + c.spacing * static_cast<double>(i);
      break;
    }
  }
  // rightmost band point above and below the symmetry line
  bool up = false, dn = false;
  for (std::size_t i = 0; i < nx; ++i)
    for (std::size_t j = 0; j < ny; ++j) {
      if (!c.mask[i][j]) continue;
      const Vec2 x(c.lo.x() + c.spacing * static_cast<double>(i), c.lo.y() + c.spacing * static_cast<double>(j));
      if (x.x() < x_start) continue;
      if (x.y() > y_mid && (!up || x.x() >= b.upper_tip.x())) b.upper_tip = x, up = true;
      if (x.y() < y_mid && (!dn || x.x() >= b.lower_tip.x())) b.lower_tip = x, dn = true;
    }
  return b;
}

// ---------------------------------------------------------------------------
// Benchmark run with outputs

struct BenchRunResult {
  std::string probe_csv;
  std::vector<std::string> vtk_files;
  std::vector<std::string> line_files;
  ProbeTable probes;
  int steps = 0;
  double seconds = 0.0;
};

inline BenchRunResult run_benchmark(const RunConfig& cfg, const std::function<void(const std::string&)>& log = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.output.dir);
  auto mesh = std::make_shared<const Mesh>(build_mesh(cfg.bench, cfg.mesh_level));
  SchemeConfig sc = cfg.scheme;
  sc.output_every = cfg.output.every;
  Simulation sim(make_problem(cfg.bench, mesh), sc);
  if (log) sim.set_log(log);
  sim.set_dump_path((fs::path(cfg.output.dir) / "abort_state.txt").string());
  BenchRunResult r;
  std::unique_ptr<PointLocator> loc;
  auto on_output = [&](const Simulation& s) {
    const std::string tag = std::to_string(s.state().step);
    if (cfg.output.vtk) {
      const auto p = (fs::path(cfg.output.dir) / ("field_" + tag + ".vtk")).string();
      write_vtk(s, p);
      r.vtk_files.push_back(p);
    }
    if (cfg.output.lines) {
      if (!loc) loc = std::make_unique<PointLocator>(s.phase_field().mesh());
      for (const auto& l : cfg.bench.lines) {
        const auto smp = sample_line(s.phase_field(), *loc, l.a, l.b, l.samples, log);
        const auto p = (fs::path(cfg.output.dir) / ("line_" + l.name + "_" + tag + ".csv")).string();
        write_line_csv(smp, s.state().time, p);
        r.line_files.push_back(p);
      }
    }
    if (log) {
      std::ostringstream m;
      m << "step " << s.state().step << " t=" << s.state().time << " dt=" << s.last_step().dt_used;
      log(m.str());
    }
  };
  r.probe_csv = (fs::path(cfg.output.dir) / "probes.csv").string();
  try {
    sim.run(on_output);
  } catch (const SimulationAborted&) {
    // keep the series up to the last accepted step
    write_probe_csv(sim.state().probes, r.probe_csv);
    throw;
  }
  write_probe_csv(sim.state().probes, r.probe_csv);
  r.probes = sim.state().probes;
  r.steps = sim.state().step;
  r.seconds = verify::seconds_since(t0);
  return r;
}

}  // namespace pfx4
