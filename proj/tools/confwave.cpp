// confwave: command-line front end.
// Exit codes: 0 success, 2 validation failure, 3 numerical failure.

#include <omp.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <algorithm>
#include <optional>

#include "CLI11.hpp"
#include "confwave/errors.hpp"
#include "confwave/io.hpp"
#include "confwave/pipeline.hpp"

using namespace confwave;

namespace {

struct Common {
  std::string scenario;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string mode;
};

void add_common(CLI::App* app, Common& c, bool need_scenario = true) {
  auto* s = app->add_option("--scenario", c.scenario, "scenario file (INI)");
  if (need_scenario) s->required()->check(CLI::ExistingFile);
  app->add_option("--out", c.out, "output directory (overrides output.dir)");
  app->add_option("--seed", c.seed, "seed for the random initial velocities");
  app->add_option("--threads", c.threads, "OpenMP threads")->check(CLI::PositiveNumber);
  app->add_option("--mode", c.mode, "recovery mode")->check(CLI::IsMember({"fredholm-2d", "multi", "transport"}));
}

Scenario load(const Common& c) {
  IniFile ini = IniFile::load(c.scenario);
  if (!c.mode.empty()) ini.set("recovery.mode", c.mode);
  if (c.seed) ini.set("velocity.seed", std::to_string(*c.seed));
  const fs::path path(c.scenario);
  Scenario s = Scenario::from_ini(ini, path.parent_path().empty() ? fs::path(".") : path.parent_path());
  if (s.name == "scenario") s.name = path.stem().string();
  if (!c.out.empty()) s.out = c.out;
  return s;
}

void say(const std::string& line) { std::cout << line << '\n' << std::flush; }

int cmd_forward(const Common& c, int stride) {
  Scenario sc = load(c);
  Setup s = prepare(sc);
  HumSolver solver(control_problem(s));
  const TimeGrid tg{solver.dt(), solver.nt()};
  std::vector<Illumination> ills = make_illuminations(s);
  fs::create_directories(sc.out);
  for (std::size_t i = 0; i < ills.size(); ++i) {
    auto [beta, beta_ref] = make_velocities(s, static_cast<int>(i));
    TwinData td = synthesize_measurement(s.grid, s.coeffs, ills[i], beta, beta_ref, tg, sc.cfl);
    const std::string k = std::to_string(i);
    write_trc1(sc.out / ("m_" + k + ".trc"), td.meas.m);
    write_trc1(sc.out / ("mdot_" + k + ".trc"), td.meas.mdot);
    if (i == 0 && stride > 0) {
      write_series(sc.out / "snapshots", "u", s.grid, td.w.u, stride);
      write_series(sc.out / "snapshots", "u_ref", s.grid, td.w_ref.u, stride);
    }
    say("illumination " + k + " (" + ills[i].kind + "): nt " + std::to_string(tg.nt) + ", dt " + format_double(tg.dt) +
        ", max |m| " + format_double(td.meas.m.max_abs()));
  }
  say("wrote traces to " + sc.out.string());
  return 0;
}

int cmd_gcc(const Common& c) {
  Scenario sc = load(c);
  Grid grid = sc.make_grid();
  CoefficientSet cs = sc.make_coefficients(grid);
  GccReport r = estimate_control_time(grid, cs, sc.gcc);
  fs::create_directories(sc.out);
  write_rays_csv(sc.out / "worst_ray.csv", {r.worst}, grid.dim());
  std::ofstream(sc.out / "gcc.txt") << r.summary() << '\n';
  say(r.summary());
  // a failed sweep means the scenario violates the control condition
  return r.pass ? 0 : 2;
}

int cmd_control_test(const Common& c) {
  Scenario sc = load(c);
  Setup s = prepare(sc);
  HumSolver solver(control_problem(s));
  ScalarField phi = random_smooth_field(s.grid, sc.seed, 1.0);
  HumResult r = solver.solve(phi);
  fs::create_directories(sc.out);
  write_trc1(sc.out / "control.trc", r.zeta);
  write_fld1(sc.out / "target.fld", s.grid, phi);
  char buf[256];
  std::snprintf(buf, sizeof buf, "HUM: %d CG iterations, residual %.3e; |xi(0)|/|phi| = %.3e, |xi_t(0) - phi|/|phi| = %.3e",
                r.iterations, r.residual, r.pos_residual, r.vel_residual);
  say(buf);
  if (!r.converged) throw NumericalError("HUM: CG did not converge");
  if (r.pos_residual > 1e-2 || r.vel_residual > 1e-2) {
    say("controllability residuals above 1e-2");
    return 3;
  }
  return 0;
}

int cmd_illuminate(const Common& c) {
  Scenario sc = load(c);
  Setup s = prepare(sc);
  fs::create_directories(sc.out);
  std::vector<Illumination> ills = make_illuminations(s);
  for (std::size_t i = 0; i < ills.size(); ++i) {
    IlluminationReport r = illumination_report(s, ills[i]);
    const std::string k = std::to_string(i);
    write_fld1(sc.out / ("alpha_" + k + ".fld"), s.grid, r.illum.alpha);
    write_fld1(sc.out / ("sigma0_" + k + ".fld"), s.grid, r.sigma0);
    if (s.grid.dim() == 3)
      for (int a = 0; a < 3; ++a)
        write_fld1(sc.out / ("Sigma0_" + k + "_" + "xyz"[a] + ".fld"), s.grid, r.Sigma0.comp[a]);
    std::string line = "illumination " + k + " (" + r.illum.kind + "): alpha in [" + format_double(r.alpha_min) + ", " +
                       format_double(r.alpha_max) + "]";
    say(line);
    if (r.flow) {
      say("  flow: " + r.flow->summary());
      if (!r.flow->ok()) say("  warning: flow assumption not verified for this illumination");
    }
  }
  return 0;
}

int cmd_reconstruct(const Common& c, int stride) {
  Scenario sc = load(c);
  PipelineOptions opt;
  opt.snapshot_stride = stride;
  opt.log = say;
  run_pipeline(sc, opt);
  say("summary: " + (sc.out / "summary.json").string());
  return 0;
}

// Converts FLD1 / TRC1 files (or every such file in a directory) to CSV.
int cmd_export(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<fs::path> files;
  for (const auto& in : inputs) {
    if (fs::is_directory(in)) {
      std::vector<fs::path> d;
      for (const auto& e : fs::recursive_directory_iterator(in))
        if (e.is_regular_file() && (e.path().extension() == ".fld" || e.path().extension() == ".trc")) d.push_back(e.path());
      std::sort(d.begin(), d.end());
      files.insert(files.end(), d.begin(), d.end());
    } else {
      if (!fs::exists(in)) throw ValidationError("export: no such file " + in);
      files.emplace_back(in);
    }
  }
  for (const fs::path& f : files) {
    std::ifstream is(f);
    std::string magic;
    is >> magic;
    fs::path target = out.empty() ? fs::path(f).replace_extension(".csv") : fs::path(out) / f.filename().replace_extension(".csv");
    if (magic == "FLD1") {
      write_field_csv(target, read_fld1(f));
    } else if (magic == "TRC1") {
      write_trace_csv(target, read_trc1(f));
    } else {
      throw ValidationError("export: " + f.string() + " is neither FLD1 nor TRC1");
    }
    say(f.string() + " -> " + target.string());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confwave: wave-speed recovery from one boundary measurement"};
  app.require_subcommand(1);

  Common c;
  int stride = 0;
  std::vector<std::string> inputs;

  auto* forward = app.add_subcommand("forward", "twin forward solves and boundary traces");
  add_common(forward, c);
  forward->add_option("--stride", stride, "write u snapshots every k levels (0: none)");
  auto* gcc = app.add_subcommand("gcc", "ray sweep for the control condition and the horizon estimate");
  add_common(gcc, c);
  auto* control = app.add_subcommand("control-test", "HUM control of a random smooth target");
  add_common(control, c);
  auto* illum = app.add_subcommand("illuminate", "illumination fields and flow report");
  add_common(illum, c);
  auto* rec = app.add_subcommand("reconstruct", "full pipeline: measurement, control, recovery");
  add_common(rec, c);
  rec->add_option("--stride", stride, "write u snapshots every k levels (0: none)");
  auto* exp = app.add_subcommand("export", "FLD1/TRC1 to CSV");
  exp->add_option("inputs", inputs, "files or directories")->required();
  exp->add_option("--out", c.out, "output directory (default: next to each input)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (c.threads) omp_set_num_threads(*c.threads);
  try {
    if (*forward) return cmd_forward(c, stride);
    if (*gcc) return cmd_gcc(c);
    if (*control) return cmd_control_test(c);
    if (*illum) return cmd_illuminate(c);
    if (*rec) return cmd_reconstruct(c, stride);
    if (*exp) return cmd_export(inputs, c.out);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return 3;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
