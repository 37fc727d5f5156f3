#include <filesystem>
#include <fstream>

#include "confwave/errors.hpp"
#include "confwave/io.hpp"
#include "confwave/pipeline.hpp"
#include "confwave/scenario.hpp"
#include "doctest.h"

using namespace confwave;

namespace {

fs::path scratch_dir() {
  fs::path d = fs::temp_directory_path() / "confwave_scenario_test";
  fs::create_directories(d);
  return d;
}

std::string twin_ini(int n, const std::string& c, const std::string& extra = "") {
  return "name = twin\n[grid]\ndim = 2\nnodes = " + std::to_string(n) +
         "\n[coefficients]\nc = " + c + "\nc_ref = 1\n[control]\ntau = 3\n[recovery]\nmode = fredholm-2d\n" + extra;
}

const char* bump = "1 + 0.05*exp(-((x-0.5)^2 + (y-0.45)^2)/0.0288)";

}  // namespace

TEST_CASE("ini parsing") {
  IniFile ini = IniFile::parse("top = 1 # comment\n[Grid]\n nodes = 16 ; trailing\n\n[a]\nk=v=w\n");
  CHECK(ini.get("top", "") == "1");
  CHECK(ini.integer("grid.nodes", 0) == 16);
  CHECK(ini.get("a.k", "") == "v=w");
  CHECK(ini.number("missing", 2.5) == 2.5);
  CHECK(ini.unused().empty());
  CHECK_THROWS_AS(IniFile::parse("[x]\nk = 1\nk = 2\n"), ValidationError);
  CHECK_THROWS_AS(IniFile::parse("[x\n"), ValidationError);
  CHECK_THROWS_AS(IniFile::parse("novalue\n"), ValidationError);
  IniFile b = IniFile::parse("[x]\nflag = maybe\nn = 1.5\n");
  CHECK_THROWS_AS(b.flag("x.flag", false), ValidationError);
  CHECK_THROWS_AS(b.integer("x.n", 0), ValidationError);
}

TEST_CASE("Gamma specifications") {
  CHECK(parse_gamma("full", 3).regions.size() == 6);
  CHECK(parse_gamma("all-but z1", 3).regions.size() == 5);
  GammaSpec g = parse_gamma("x0 y1@x:0.2:0.8", 2);
  REQUIRE(g.regions.size() == 2);
  CHECK(g.regions[1].axis == 1);
  CHECK(g.regions[1].side == 1);
  CHECK(g.regions[1].lo[0] == 0.2);
  CHECK(g.regions[1].hi[0] == 0.8);
  CHECK_THROWS_AS(parse_gamma("z0", 2), ValidationError);
  CHECK_THROWS_AS(parse_gamma("q1", 2), ValidationError);
  CHECK_THROWS_AS(parse_gamma("x0@x:0:1", 2), ValidationError);
  CHECK_THROWS_AS(parse_gamma("x0@y:0.5:0.2", 2), ValidationError);
  CHECK_THROWS_AS(parse_gamma("", 2), ValidationError);
}

TEST_CASE("scenario validation") {
  Scenario s = Scenario::from_ini(IniFile::parse(twin_ini(16, bump)));
  CHECK(s.mode == RecoveryMode::Fredholm2d);
  CHECK(s.tau.has_value());
  CHECK(s.nodes[0] == 16);
  CHECK(s.nodes[1] == 16);

  // transport in 2D: refused with the dimension reason
  try {
    Scenario::from_ini(IniFile::parse("[grid]\ndim = 2\n[recovery]\nmode = transport\n[illumination]\nkind = harmonic\n"));
    FAIL("no throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("n >= 3") != std::string::npos);
  }
  CHECK_THROWS_AS(Scenario::from_ini(IniFile::parse("[grid]\ndim = 3\n[recovery]\nmode = fredholm-2d\n")), ValidationError);
  CHECK_THROWS_AS(Scenario::from_ini(IniFile::parse("[grid]\ndim = 2\n[illumination]\nkind = linear-ramp\n")), ValidationError);
  CHECK_THROWS_AS(Scenario::from_ini(IniFile::parse("[grid]\ndim = 2\nbogus = 1\n")), ValidationError);
  CHECK_THROWS_AS(Scenario::from_ini(IniFile::parse("[coefficients]\nc = 1 + w\n")), ValidationError);
  CHECK_THROWS_AS(Scenario::from_ini(IniFile::parse("[coefficients]\nc = file:does-not-exist.fld\n")), ValidationError);
  CHECK_THROWS_AS(Scenario::from_ini(IniFile::parse("[control]\ntau = -1\n")), ValidationError);
  CHECK_THROWS_AS(Scenario::from_ini(IniFile::parse("[grid]\nnodes = 4\n")), ValidationError);

  // c must match c_ref on the boundary
  Scenario bad = Scenario::from_ini(IniFile::parse(twin_ini(16, "1 + 0.1*x")));
  Grid g = bad.make_grid();
  CHECK_THROWS_WITH_AS(bad.make_coefficients(g), doctest::Contains("boundary"), ValidationError);
}

TEST_CASE("coefficients from files and expressions") {
  Scenario s = Scenario::from_ini(IniFile::parse(twin_ini(16, bump)));
  Grid g = s.make_grid();
  CoefficientSet cs = s.make_coefficients(g);
  write_fld1(scratch_dir() / "c.fld", g, cs.c);
  IniFile ini = IniFile::parse(twin_ini(16, "file:c.fld"));
  Scenario f = Scenario::from_ini(ini, scratch_dir());
  CoefficientSet fc = f.make_coefficients(g);
  CHECK(fc.c.values() == cs.c.values());

  Scenario wrong = Scenario::from_ini(IniFile::parse(twin_ini(20, "file:c.fld")), scratch_dir());
  Grid g20 = wrong.make_grid();
  CHECK_THROWS_AS(wrong.make_coefficients(g20), ValidationError);
}

TEST_CASE("random velocities are seeded and vanish on the boundary") {
  Grid g = Grid::unit(2, 12);
  ScalarField a = random_smooth_field(g, 5, 0.05), b = random_smooth_field(g, 5, 0.05), c = random_smooth_field(g, 6, 0.05);
  CHECK(a.values() == b.values());
  CHECK(a.values() != c.values());
  double mx = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) {
    mx = std::max(mx, std::abs(a[n]));
    if (g.on_boundary(n)) CHECK(std::abs(a[n]) <= 1e-15);
  }
  CHECK(mx == doctest::Approx(0.05));
  CHECK(velocity_seed(1, 0, false) != velocity_seed(1, 0, true));
  CHECK(velocity_seed(1, 1, false) != velocity_seed(1, 0, true));
}

TEST_CASE("control horizon from the ray sweep") {
  Scenario s = Scenario::from_ini(IniFile::parse("[grid]\nnodes = 16\n[control]\ntau = auto\n"));
  Setup su = prepare(s, Exec::Serial);
  REQUIRE(su.gcc.has_value());
  CHECK(su.tau == doctest::Approx(1.2 * std::sqrt(2.0)).epsilon(0.02));
}

TEST_CASE("pipeline: identical speeds give a negligible contrast") {
  Scenario s = Scenario::from_ini(IniFile::parse(twin_ini(14, "1", "[output]\ndir = same\n")), scratch_dir());
  PipelineResult r = run_pipeline(s);
  CHECK(r.summary["status"] == "ok");
  CHECK(r.summary["checks"]["f_norm_ok"] == true);
  CHECK(r.f_error <= 1e-3);
  CHECK(fs::exists(scratch_dir() / "same" / "summary.json"));
  CHECK(fs::exists(scratch_dir() / "same" / "m_0.trc"));
  CHECK(fs::exists(scratch_dir() / "same" / "c_rec.fld"));
}

TEST_CASE("pipeline: bump twin and deterministic summary") {
  Scenario s = Scenario::from_ini(IniFile::parse(twin_ini(16, bump, "[output]\ndir = bump\n")), scratch_dir());
  PipelineResult a = run_pipeline(s);
  CHECK(a.f_error <= 0.10);
  CHECK(a.summary["recovery"]["identity_residual"].get<double>() <= 0.05);
  PipelineOptions quiet;
  quiet.write_outputs = false;
  PipelineResult b = run_pipeline(s, quiet);
  CHECK(a.summary.dump() == b.summary.dump());

  // a different seed changes the velocities but not the answer much
  Scenario t = s;
  t.seed = 99;
  PipelineResult c = run_pipeline(t, quiet);
  CHECK(c.summary.dump() != a.summary.dump());
  CHECK(c.f_error <= 0.10);
}

TEST_CASE("pipeline failures name the stage") {
  Scenario s = Scenario::from_ini(IniFile::parse(twin_ini(14, bump, "[output]\ndir = fail\n")), scratch_dir());
  s.delta_required = 5.0;  // sigma0 = 1 everywhere: refused
  PipelineOptions quiet;
  try {
    run_pipeline(s, quiet);
    FAIL("no throw");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).rfind("[recovery]", 0) == 0);
  }
}
