// Acceptance runner: one PASS/FAIL line per criterion.
//   confwave_acceptance            criteria 1-9
//   confwave_acceptance --slow     also the 3D reconstructions (10)
//   confwave_acceptance --only 6   a single criterion
// Exit status is the number of failed criteria (capped at 125).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "confwave/control.hpp"
#include "confwave/gcc.hpp"
#include "confwave/geometry.hpp"
#include "confwave/pipeline.hpp"
#include "confwave/recovery.hpp"
#include "confwave/scenario.hpp"
#include "confwave/transport.hpp"

using namespace confwave;

namespace {

namespace fs = std::filesystem;
constexpr double pi = std::numbers::pi;

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [!]");
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

ScalarField noise_field(const Grid& grid, unsigned seed, bool zero_boundary) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  ScalarField f(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) f[i] = (zero_boundary && grid.on_boundary(i)) ? 0.0 : nd(rng);
  return f;
}

CoefficientSet bump(const Grid& grid, double amp) {
  CoefficientSet cs(grid);
  cs.c_ref = ScalarField(grid.size(), 1.0);
  cs.c = sample(grid, [&](const Vec3& x) {
    const double r2 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.45) * (x[1] - 0.45);
    return 1.0 + amp * std::exp(-r2 / (2 * 0.12 * 0.12));
  });
  return cs;
}

ScalarField contrast(const CoefficientSet& cs) {
  ScalarField f(cs.c.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = cs.c[i] * cs.c[i] - (*cs.c_ref)[i] * (*cs.c_ref)[i];
  return f;
}

// n = 2 twin experiment with the Poisson illumination
struct Twin {
  CoefficientSet cs;
  std::unique_ptr<HumSolver> solver;
  TwinData data;
  SourceFactors factors;
  ControlAssembly assembly;
  RecoverySystem system;
  ScalarField f;

  // ref_seed = 0: both runs start with the same velocity
  Twin(const Grid& grid, double amp, std::uint64_t seed, double tau = 3.0, std::uint64_t ref_seed = 1)
      : cs(bump(grid, amp)) {
    ControlProblem prob{grid, cs};
    prob.tau = tau;
    solver = std::make_unique<HumSolver>(prob);
    Illumination il = illuminate_poisson(grid, cs.reference(), 1.0);
    ScalarField beta = random_smooth_field(grid, seed, 0.05);
    ScalarField beta_ref = ref_seed ? random_smooth_field(grid, seed + ref_seed, 0.05) : beta;
    data = synthesize_measurement(grid, cs, il, beta, beta_ref, {solver->dt(), solver->nt()});
    factors = compute_source_factors(data.w_ref, grid, cs);
    AssemblyRequest req;
    req.store_C = req.store_S = true;
    req.reductions = {&factors.sigma_dot};
    assembly = assemble_control(*solver, req);
    system = assemble_recovery_operator_2d(*solver, factors, assembly.reductions[0], data.meas, 0.5);
    f = solve_contrast(system, grid);
  }
  const Eigen::VectorXd& w() const { return solver->field_weights(); }
};

// sqrt(int_0^tau int_Gamma m^2 + mdot^2)
double trace_h1(const Grid& grid, const Measurement& m) {
  double s = 0.0;
  for (int k = 0; k <= m.m.nt; ++k)
    for (int g = 0; g < m.m.n_gamma; ++g)
      s += grid.surface_weight(grid.gamma()[g]) * (m.m.at(k, g) * m.m.at(k, g) + m.mdot.at(k, g) * m.mdot.at(k, g));
  return std::sqrt(s * m.m.dt);
}

Verdict operator_correctness() {
  Verdict v;
  double worst = 0.0;
  for (int dim : {2, 3}) {
    Grid grid = Grid::unit(dim, dim == 2 ? 24 : 10);
    CoefficientSet cs(grid);
    for (std::size_t i = 0; i < grid.size(); ++i) {
      Vec3 x = grid.coords(i);
      cs.g[i] = SymMat{1.0 + 0.3 * x[0], 1.5 + 0.2 * std::sin(3 * x[1]), 1.2 + 0.1 * x[2],
                       0.2 * std::cos(x[0] + x[1]), dim == 3 ? 0.1 * x[2] : 0.0, dim == 3 ? -0.15 * x[0] : 0.0};
      cs.mu[i] = 1.0 + 0.4 * x[0] * x[1];
      cs.c[i] = 1.0 + 0.2 * std::sin(2 * x[0]) * std::cos(x[1]);
    }
    for (bool sw : {false, true}) {
      DiscreteOperator op = assemble_laplace_beltrami(grid, cs, sw);
      for (unsigned s = 0; s < 5; ++s) {
        ScalarField a = noise_field(grid, 2 * s + 1, true), b = noise_field(grid, 2 * s + 2, true);
        const double l = weighted_inner_product(op.apply(a), b, grid, cs, sw);
        const double r = weighted_inner_product(a, op.apply(b), grid, cs, sw);
        worst = std::max(worst, std::abs(l - r) / (weighted_norm(op.apply(a), grid, cs, sw) * weighted_norm(b, grid, cs, sw)));
      }
    }
  }
  v.require(worst <= 1e-12, "self-adjoint defect " + fmt("%.2e", worst));

  auto eigen_error = [](int n) {
    Grid grid = Grid::unit(2, n);
    CoefficientSet cs(grid);
    ScalarField u = sample(grid, [](const Vec3& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); });
    ScalarField au = assemble_laplace_beltrami(grid, cs, true).apply(u);
    double e = 0.0;
    for (std::size_t node : grid.interior()) e = std::max(e, std::abs(au[node] + 2 * pi * pi * u[node]));
    return e;
  };
  const double ratio = eigen_error(32) / eigen_error(64);
  v.require(std::abs(ratio - 4.0) <= 0.4, "eigenmode ratio 32^2/64^2 " + fmt("%.3f", ratio));
  return v;
}

Verdict conformal_identity() {
  Verdict v;
  Grid g2 = Grid::unit(2, 20);
  CoefficientSet c2(g2);
  c2.c = sample(g2, [](const Vec3& x) { return 1.0 + 0.3 * std::sin(2 * x[0]) * x[1]; });
  c2.mu = sample(g2, [](const Vec3& x) { return 1.0 + 0.2 * x[0]; });
  ScalarField w2 = sample(g2, [](const Vec3& x) { return std::sin(2 * x[0]) * std::cos(x[1]) + x[1]; });
  const double r2 = verify_conformal_identity(c2, g2, w2);
  v.require(r2 <= 1e-12, "n=2 residual " + fmt("%.2e", r2));

  auto res3 = [](int n) {
    Grid g = Grid::unit(3, n);
    CoefficientSet c(g);
    c.c = sample(g, [](const Vec3& x) { return 1.0 + 0.1 * x[0]; });
    ScalarField w = sample(g, [](const Vec3& x) { return std::sin(2 * x[0]) * std::cos(x[1]) * (1 + x[2]); });
    return verify_conformal_identity(c, g, w);
  };
  const double a = res3(9), b = res3(17), C = 0.5;
  v.require(a <= C / 8 && b <= C / 16, "n=3 residual " + fmt("%.3e", a) + " (h=1/8), " + fmt("%.3e", b) + " (h=1/16), C=0.5");
  return v;
}

Verdict controllability() {
  Verdict v;
  Grid grid = Grid::unit(2, 32);
  ControlProblem prob{grid, CoefficientSet(grid)};
  prob.tau = 3.0;
  prob.kappa = 0.25;
  prob.epsilon = 1e-8;
  HumSolver solver(prob);
  HumResult r = solver.solve(random_smooth_field(grid, 7, 1.0));
  v.require(r.converged && r.iterations <= 200, std::to_string(r.iterations) + " CG iterations");
  v.require(r.vel_residual <= 1e-2, "|xi_t(0) - phi|/|phi| " + fmt("%.2e", r.vel_residual));
  v.require(r.pos_residual <= 1e-2, "|xi(0)|/|phi| " + fmt("%.2e", r.pos_residual));
  return v;
}

Verdict adjoint_suite() {
  Verdict v;
  Grid grid = Grid::unit(2, 12);
  Twin t(grid, 0.05, 3, 2.0);
  const double dc = t.assembly.C->adjoint_defect(1), ds = t.assembly.S->adjoint_defect(2),
               dp = t.assembly.reductions[0].adjoint_defect(3);
  v.require(dc <= 1e-10, "C " + fmt("%.1e", dc));
  v.require(ds <= 1e-10, "S " + fmt("%.1e", ds));
  v.require(dp <= 1e-10, "P(sigma_dot S) " + fmt("%.1e", dp));
  return v;
}

// criteria 5 and 6 share the 24^2 twin
std::unique_ptr<Twin> twin24;
Twin& shared_twin() {
  if (!twin24) twin24 = std::make_unique<Twin>(Grid::unit(2, 24), 0.05, 1);
  return *twin24;
}

Verdict recovery_identity() {
  Verdict v;
  Twin& t = shared_twin();
  const Grid& grid = t.solver->grid();
  const Eigen::VectorXd ft = restrict_interior(grid, contrast(t.cs));
  const Eigen::VectorXd s0 = restrict_interior(grid, t.factors.sigma0);
  const double r = wnorm(t.system.matrix * ft - t.system.rhs, t.w()) / wnorm(s0.cwiseProduct(ft), t.w());
  v.require(r <= 0.05, "residual / |sigma0 f| " + fmt("%.4f", r) + " at 24^2");
  return v;
}

Verdict reconstruction() {
  Verdict v;
  Twin& t = shared_twin();
  const Grid& grid = t.solver->grid();
  const double e = relative_error(t.f, contrast(t.cs), grid, t.w());
  v.require(e <= 0.10, "bump f error " + fmt("%.4f", e));
  Twin same(grid, 0.0, 5);
  const double ratio = wnorm(restrict_interior(grid, same.f), t.w()) / wnorm(restrict_interior(grid, t.f), t.w());
  v.require(ratio <= 0.02, "c = c~, beta != beta~: |f| / |f_bump| " + fmt("%.2e", ratio));
  return v;
}

Verdict stability_trend() {
  Verdict v;
  Grid grid = Grid::unit(2, 16);
  std::vector<double> ratios;
  std::string line;
  for (double amp : {0.02, 0.05, 0.08}) {
    // same initial velocity in both runs, so m is caused by the contrast alone
    Twin t(grid, amp, 1, 3.0, 0);
    const ScalarField ft = contrast(t.cs);
    const double err = wnorm(restrict_interior(grid, t.f - ft), t.w());
    ratios.push_back(err / trace_h1(grid, t.data.meas));
    line += (line.empty() ? "" : ", ") + fmt("%.3g", ratios.back());
  }
  const double band = *std::max_element(ratios.begin(), ratios.end()) / *std::min_element(ratios.begin(), ratios.end());
  v.require(band <= 3.0, "|f_err|/|m|_H1 over amplitudes 0.02/0.05/0.08: " + line + " (spread " + fmt("%.2f", band) + ")");
  return v;
}

Verdict transport_path() {
  Verdict v;
  Grid strip(2, {1.0, 0.5, 0.0}, {21, 11, 1}, GammaSpec::face(0, 0));
  VectorField u(2, strip.size());
  u.comp[0] = ScalarField(strip.size(), 1.0);
  u.comp[1] = ScalarField(strip.size(), 0.0);

  // (d/dx + s) f = 1, f = 0 on x = 0:  f = x (s = 0),  f = 1 - exp(-x) (s = 1)
  double e = 0.0;
  ScalarField a = solve_first_order(strip, u, ScalarField(strip.size()), ScalarField(strip.size(), 1.0));
  ScalarField b = solve_first_order(strip, u, ScalarField(strip.size(), 1.0), ScalarField(strip.size(), 1.0));
  for (std::size_t i = 0; i < strip.size(); ++i) {
    const double x = strip.coords(i)[0];
    e = std::max({e, std::abs(a[i] - x), std::abs(b[i] - (1.0 - std::exp(-x)))});
  }
  v.require(e <= 1e-3, "characteristic solves " + fmt("%.1e", e));

  PoincareEstimate p1 = poincare_constant(strip, u);
  VectorField u2 = u;
  u2.comp[0] = ScalarField(strip.size(), 2.0);
  PoincareEstimate p2 = poincare_constant(strip, u2);
  const double hom = std::abs(2.0 * p2.empirical - p1.empirical) / p1.empirical;
  v.require(hom <= 1e-10, "Poincare constant homogeneity " + fmt("%.1e", hom));

  const double C = p1.empirical, lam = 1.0;
  ScalarField s0 = sample(strip, [](const Vec3& x) { return 0.5 + 0.5 * std::cos(4 * x[1]); });
  HNormSpace hs(strip, u);
  int held = 0;
  for (const ScalarField& pr : p1.probes) {
    ScalarField lv = hs.derivative(pr);
    for (std::size_t i = 0; i < strip.size(); ++i) lv[i] += s0[i] * pr[i];
    if (hs.norm(pr) <= (1 + C * lam * std::exp(C * lam)) * hs.l2(lv)) ++held;
  }
  v.require(p1.probes.size() >= 20 && held == static_cast<int>(p1.probes.size()),
            "stability bound on " + std::to_string(held) + "/" + std::to_string(p1.probes.size()) + " probes");
  return v;
}

Verdict gcc_checker() {
  Verdict v;
  Grid square = Grid::unit(2, 33);
  GccOptions o;
  o.points_per_axis = 10;
  o.directions = 32;
  GccReport flat = estimate_control_time(square, CoefficientSet(square), o);
  const double t0 = 1.2 * std::sqrt(2.0);
  v.require(flat.pass && flat.tau_est >= 0.98 * t0 && flat.tau_est <= 1.1 * t0, "flat square tau_est " + fmt("%.4f", flat.tau_est));

  Grid big(2, {3.0, 3.0, 0.0}, {31, 31, 1}, GammaSpec::full(2));
  CoefficientSet cs(big);
  for (std::size_t i = 0; i < big.size(); ++i) {
    const Vec3 x = big.coords(i);
    cs.c[i] = 0.5 + 0.5 * ((x[0] - 1.5) * (x[0] - 1.5) + (x[1] - 1.5) * (x[1] - 1.5));
  }
  o.points_per_axis = 5;
  o.directions = 16;
  GccReport trap = estimate_control_time(big, cs, o);
  v.require(!trap.pass, "trapping profile " + std::string(trap.pass ? "PASS" : "FAIL") + " (" +
                            std::to_string(trap.survived) + " rays trapped)");
  return v;
}

Verdict reconstructions_3d(const fs::path& dir) {
  Verdict v;
  PipelineOptions opt;
  opt.write_outputs = false;
  for (const auto& [file, target] : {std::pair<const char*, double>{"multi3d.ini", 0.20}, {"transport3d.ini", 0.25}}) {
    Scenario sc = Scenario::from_ini(IniFile::load(dir / file), dir);
    PipelineResult r = run_pipeline(sc, opt);
    v.require(r.f_error <= target, std::string(file) + " f error " + fmt("%.4f", r.f_error) + " (<= " + fmt("%.2f", target) + ")");
  }
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  bool slow = false;
  int only = 0;
  std::string dir = CONFWAVE_SCENARIO_DIR;
  app.add_flag("--slow", slow, "include the 3D reconstructions");
  app.add_option("--only", only, "run a single criterion")->check(CLI::Range(1, 10));
  app.add_option("--scenarios", dir, "directory with multi3d.ini and transport3d.ini");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"operator correctness", operator_correctness},
      {"conformal identity", conformal_identity},
      {"controllability", controllability},
      {"adjoint suite", adjoint_suite},
      {"recovery equation as identity", recovery_identity},
      {"end-to-end reconstruction", reconstruction},
      {"stability trend", stability_trend},
      {"transport path", transport_path},
      {"ray-sweep checker", gcc_checker},
      {"3D reconstructions", [&] { return reconstructions_3d(dir); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (only ? id != only : (id == 10 && !slow)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail = std::string("exception: ") + e.what();
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("%s %2d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, criteria[i].first.c_str(), v.detail.c_str(), sec);
    std::fflush(stdout);
    if (!v.pass) ++failed;
  }
  return std::min(failed, 125);
}
