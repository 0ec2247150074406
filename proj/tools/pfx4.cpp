// pfx4 command line: benchmark runs, config runs, oracle checks, penalty sweeps.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "pfx4/bench.hpp"
#include "pfx4/verify.hpp"

using namespace pfx4;
namespace fs = std::filesystem;

namespace {

void log_line(const std::string& s) { std::cerr << s << '\n'; }

/// Element loops use PFX4_THREADS workers; reject values the library
/// would silently treat as 1.
void check_threads() {
  const char* v = std::getenv("PFX4_THREADS");
  if (!v) return;
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  if (end == v || *end != '\0' || n < 1) throw ConfigError(std::string("PFX4_THREADS must be a positive integer, got '") + v + "'");
}

void summarize(const RunConfig& c, const BenchRunResult& r) {
  const auto& t = r.probes;
  double peak = 0.0, dmax = 0.0;
  const bool reaction = !c.bench.bc.reaction_set.empty();
  if (!t.rows.empty()) {
    if (reaction)
      for (double f : t.series("reaction_x")) peak = std::max(peak, std::abs(f));
    for (double d : t.series("d_max")) dmax = std::max(dmax, d);
  }
  std::printf("%s %s beta_s2=%.6g level=%d steps=%d time=%.1fs", c.bench.name.c_str(), to_string(c.scheme.scheme).c_str(),
              c.scheme.beta_s2, c.mesh_level, r.steps, r.seconds);
  if (reaction) std::printf(" peak_reaction=%.6g", peak);
  std::printf(" max_d=%.6g\n  %s\n", dmax, r.probe_csv.c_str());
}

int run_config(const RunConfig& c) {
  check_threads();
  const auto r = run_benchmark(c, log_line);
  summarize(c, r);
  return 0;
}

std::vector<double> parse_values(const std::string& s) {
  std::vector<double> v;
  for (const auto& tok : detail::split(s, ',')) v.push_back(detail::to_double(tok, "--values"));
  if (v.empty()) throw ConfigError("--values needs at least one number");
  for (double x : v)
    if (!(x > 0.0)) throw ConfigError("penalty values must be positive");
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-field fracture with fourth-order crack density: C/DG and mixed schemes"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "run a benchmark from an INI config");
  std::string config_path, out_override;
  run->add_option("config", config_path, "INI config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_override, "output directory (overrides output.dir)");

  auto* bench = app.add_subcommand("bench", "run a built-in benchmark");
  std::string bench_name, scheme_name = "CDG_Q9", bench_out;
  double beta = 0.0, t_final = -1.0;
  int level = 0, every = -1;
  bool no_vtk = false;
  bench->add_option("name", bench_name, "shear_plate | branching_plate")->required();
  bench->add_option("--scheme", scheme_name, "CDG_Q9 | MIXED_Q9Q9 | MIXED_Q4Q4")->capture_default_str();
  bench->add_option("--beta-s2", beta, "interior penalty (default: benchmark value)");
  bench->add_option("--mesh-level", level, "refinement level, element size halves per level")->check(CLI::Range(0, 6));
  bench->add_option("--t-final", t_final, "end time [s]");
  bench->add_option("--every", every, "field output every N steps (0: first and last)");
  bench->add_option("--out", bench_out, "output directory (default: out/<name>_<scheme>)");
  bench->add_flag("--no-vtk", no_vtk, "skip VTK frames");

  auto* ver = app.add_subcommand("verify", "analytic and finite-difference checks");

  auto* sweep = app.add_subcommand("sweep-penalty", "rerun a config for several interior penalties");
  std::string sweep_config, values;
  sweep->add_option("config", sweep_config, "INI config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--values", values, "comma separated beta_s2 values")->required();

  auto* cfg = app.add_subcommand("config", "print the INI config of a built-in benchmark");
  std::string cfg_name, cfg_scheme = "CDG_Q9", cfg_out;
  cfg->add_option("name", cfg_name, "shear_plate | branching_plate")->required();
  cfg->add_option("--scheme", cfg_scheme)->capture_default_str();
  cfg->add_option("-o,--output", cfg_out, "write to a file instead of stdout");

  auto* msh = app.add_subcommand("mesh", "write a benchmark mesh as Gmsh v2 ASCII");
  std::string msh_name, msh_out;
  int msh_level = 0;
  msh->add_option("name", msh_name, "shear_plate | branching_plate")->required();
  msh->add_option("--mesh-level", msh_level)->check(CLI::Range(0, 6));
  msh->add_option("-o,--output", msh_out, "output file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*run) {
      auto c = read_config(config_path);
      if (!out_override.empty()) c.output.dir = out_override;
      return run_config(c);
    }
    if (*bench) {
      RunConfig c;
      c.bench = BenchmarkSpec::from_name(bench_name);
      c.scheme = default_scheme_config(c.bench, scheme_from_string(scheme_name));
      if (beta > 0.0) c.scheme.beta_s2 = beta;
      if (t_final >= 0.0) c.scheme.t_final = t_final;
      c.scheme.check();
      c.mesh_level = level;
      if (every >= 0) c.output.every = every;
      c.output.vtk = !no_vtk;
      c.output.dir = bench_out.empty() ? "out/" + bench_name + "_" + scheme_name : bench_out;
      return run_config(c);
    }
    if (*ver) {
      bool ok = true;
      for (const auto& r : verify::oracle_suite()) {
        std::printf("%-4s %-24s %s (%.2fs)\n", r.pass ? "ok" : "FAIL", r.name.c_str(), r.detail.c_str(), r.seconds);
        ok = ok && r.pass;
      }
      return ok ? 0 : 1;
    }
    if (*sweep) {
      const auto base = read_config(sweep_config);
      const auto v = parse_values(values);
      for (double b : v) {
        auto c = base;
        c.scheme.beta_s2 = b;
        char tag[64];
        std::snprintf(tag, sizeof tag, "beta_%.6g", b);
        c.output.dir = (fs::path(base.output.dir) / tag).string();
        run_config(c);
      }
      return 0;
    }
    if (*cfg) {
      RunConfig c;
      c.bench = BenchmarkSpec::from_name(cfg_name);
      c.scheme = default_scheme_config(c.bench, scheme_from_string(cfg_scheme));
      c.output.dir = "out/" + cfg_name + "_" + cfg_scheme;
      if (!cfg_out.empty()) {
        write_config(c, cfg_out);
      } else {
        boost::property_tree::write_ini(std::cout, to_ptree(c));
      }
      return 0;
    }
    if (*msh) {
      const auto m = build_mesh(BenchmarkSpec::from_name(msh_name), msh_level);
      std::ofstream f(msh_out);
      if (!f) throw Error("cannot write '" + msh_out + "'");
      write_gmsh(f, m);
      std::printf("%s: %zu nodes, %zu elements\n", msh_out.c_str(), static_cast<std::size_t>(m.num_nodes()),
                  static_cast<std::size_t>(m.num_elements()));
      return 0;
    }
  } catch (const SimulationAborted& e) {
    std::cerr << "aborted: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
