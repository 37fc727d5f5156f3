#include <cmath>

#include "confwave/errors.hpp"
#include "confwave/transport.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace confwave;

namespace {

VectorField constant_flow(const Grid& grid, Vec3 v) {
  VectorField s(grid.dim(), grid.size());
  for (int a = 0; a < grid.dim(); ++a) s.comp[a] = ScalarField(grid.size(), v[a]);
  return s;
}

Grid strip(int n = 21) { return Grid(2, {1.0, 0.5, 0.0}, {n, (n + 1) / 2, 1}, GammaSpec::face(0, 0)); }

}  // namespace

TEST_CASE("uniform flow satisfies the flow assumption") {
  Grid cube = Grid::unit(3, 9, GammaSpec::face(0, 0));
  FlowReport r = validate_flow_assumption(cube, constant_flow(cube, {1, 0, 0}), 0.5);
  CHECK(r.ok());
  CHECK(r.max_time == doctest::Approx(1.0).epsilon(1e-9));

  VectorField s = constant_flow(cube, {1, 0, 0});
  s.comp[0][cube.index(4, 4, 4)] = 0.0;
  FlowReport z = validate_flow_assumption(cube, s, 0.5);
  CHECK_FALSE(z.magnitude_ok);
  CHECK(z.worst_magnitude_node == cube.index(4, 4, 4));
}

TEST_CASE("closed orbits fail the exit check") {
  Grid grid = Grid::unit(2, 17);
  VectorField rot(2, grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    Vec3 x = grid.coords(i);
    rot.comp[0][i] = -(x[1] - 0.5);
    rot.comp[1][i] = x[0] - 0.5;
  }
  std::vector<Seed> seeds{{{0.5, 0.2, 0.0}, 0}, {{0.5, 0.35, 0.0}, 0}};
  CharacteristicFan fan = trace_characteristics(grid, rot, seeds);
  CHECK(fan.stalled == 2);
  FlowReport r = validate_flow_assumption(grid, rot, 0.01);
  CHECK_FALSE(r.ok());
}

TEST_CASE("characteristics: straight lines and RK4 order") {
  Grid s = strip();
  CharacteristicFan fan = trace_characteristics(s, constant_flow(s, {1, 0, 0}), default_seeds(s, constant_flow(s, {1, 0, 0})));
  for (const auto& c : fan.curves) {
    CHECK(c.exit == ExitKind::Outflow);
    CHECK(c.length == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(c.points.back()[1] == doctest::Approx(c.points.front()[1]));
  }

  // x' = (1, x): quadratic solution, integrated exactly
  auto lin = [](const Vec3& x) { return Vec3{1.0, x[0], 0.0}; };
  Vec3 e = integrate_characteristic(lin, {0.1, 0.2, 0.0}, 0.05, 20);
  CHECK(e[0] == doctest::Approx(1.1).epsilon(1e-13));
  CHECK(e[1] == doctest::Approx(0.2 + 0.1 + 0.5).epsilon(1e-13));

  // rotation: error ratio under step halving
  auto rot = [](const Vec3& x) { return Vec3{-x[1], x[0], 0.0}; };
  auto err = [&](int n) {
    Vec3 p = integrate_characteristic(rot, {1.0, 0.0, 0.0}, 2.0 / n, n);
    return std::hypot(p[0] - std::cos(2.0), p[1] - std::sin(2.0));
  };
  CHECK(err(10) / err(20) >= 12.0);
}

TEST_CASE("first-order solve against integrating-factor solutions") {
  Grid s = strip();
  VectorField u = constant_flow(s, {1, 0, 0});
  double res = 0.0;
  ScalarField f = solve_first_order(s, u, ScalarField(s.size()), ScalarField(s.size(), 1.0), &res);
  double err = 0.0, err2 = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) err = std::max(err, std::abs(f[i] - s.coords(i)[0]));
  CHECK(err <= 1e-3);
  CHECK(res <= 5e-2);

  ScalarField g = solve_first_order(s, u, ScalarField(s.size(), 1.0), ScalarField(s.size(), 1.0));
  for (std::size_t i = 0; i < s.size(); ++i) err2 = std::max(err2, std::abs(g[i] - (1.0 - std::exp(-s.coords(i)[0]))));
  CHECK(err2 <= 1e-3);

  FirstOrderSolver fo(s, u, ScalarField(s.size(), 0.3));
  CHECK(testsupport::max_interior_abs(s, fo.solve(ScalarField(s.size()))) == 0.0);
  ScalarField h = sample(s, [](const Vec3& x) { return std::sin(3 * x[0]) + x[1]; });
  ScalarField a = fo.solve(h), b = fo.solve(2.5 * h);
  for (std::size_t i = 0; i < s.size(); ++i) REQUIRE(b[i] == doctest::Approx(2.5 * a[i]).epsilon(1e-12));
  CHECK(fo.residual(a, h) <= 5e-2);
}

TEST_CASE("first-order solve refuses uncovered nodes") {
  Grid grid = Grid::unit(2, 17, GammaSpec::face(0, 0));
  VectorField s = constant_flow(grid, {1, 0, 0});
  // seeds only near y = 0 leave the upper part uncovered
  std::vector<Seed> seeds{{{0.0, 0.0, 0.0}, grid.index(0, 0)}};
  CharacteristicFan fan = trace_characteristics(grid, s, seeds);
  CHECK(fan.uncovered > 0);
  // a field that is tangent to Gamma has no inflow seeds at all
  VectorField tang = constant_flow(grid, {0, 1, 0});
  CHECK_THROWS_AS(FirstOrderSolver(grid, tang, ScalarField(grid.size())), ValidationError);
}

TEST_CASE("Poincare constant") {
  Grid s = strip();
  VectorField u = constant_flow(s, {1, 0, 0});
  PoincareEstimate p = poincare_constant(s, u);
  CHECK(p.empirical >= 1.0 / std::sqrt(3.0) - 1e-3);
  CHECK(p.empirical <= 1.0);
  CHECK(p.length_bound == doctest::Approx(1.0));

  VectorField u2 = constant_flow(s, {2, 0, 0});
  PoincareEstimate p2 = poincare_constant(s, u2);
  CHECK(std::abs(p2.empirical * 2.0 - p.empirical) <= 1e-10 * p.empirical);

  // stability bound on the probes with a variable zeroth-order coefficient
  ScalarField s0 = sample(s, [](const Vec3& x) { return 0.5 + 0.5 * std::cos(4 * x[1]); });
  double lam = 1.0, C = p.empirical;
  HNormSpace hs(s, u);
  for (const ScalarField& v : p.probes) {
    ScalarField lv = hs.derivative(v);
    for (std::size_t i = 0; i < s.size(); ++i) lv[i] += s0[i] * v[i];
    CHECK(hs.norm(v) <= (1 + C * lam * std::exp(C * lam)) * hs.l2(lv));
  }
}

TEST_CASE("first-order recovery reduces to the transport solve without a compact part") {
  Grid grid = Grid::unit(3, 8, GammaSpec::face(0, 0));
  CoefficientSet cs(grid);
  ControlProblem prob{grid, cs};
  prob.tau = 2.0;
  HumSolver solver(prob);
  VectorField u = constant_flow(grid, {1, 0, 0});
  FirstOrderSolver fo(grid, u, ScalarField(grid.size(), 0.5));
  FirstOrderSystem sys;
  sys.solver = &solver;
  for (int r = 0; r < 4; ++r) {
    AssembledOperator z;
    z.matrix = Eigen::MatrixXd::Zero(solver.n_interior(), solver.n_interior());
    z.domain_gram = z.codomain_gram = solver.field_weights();
    sys.reductions.push_back(z);
  }
  sys.rhs = restrict_interior(grid, sample(grid, [](const Vec3& x) { return x[1] + x[2]; }));
  FirstOrderReport rep;
  ScalarField f = solve_recovery_first_order(sys, fo, {}, &rep);
  ScalarField d = fo.solve(extend_interior(grid, sys.rhs), true);
  CHECK(rep.converged);
  for (std::size_t node : grid.interior()) REQUIRE(f[node] == doctest::Approx(d[node]));

  sys.rhs.setZero();
  CHECK(testsupport::max_interior_abs(grid, solve_recovery_first_order(sys, fo)) == 0.0);

  // a contracting compact part: fixed point and GMRES agree
  for (int r = 0; r < 4; ++r) sys.reductions[r].matrix.setIdentity();
  sys.reductions[0].matrix *= 0.3;
  for (int r = 1; r < 4; ++r) sys.reductions[r].matrix *= 0.01;
  sys.rhs = restrict_interior(grid, sample(grid, [](const Vec3& x) { return 1.0 + x[1]; }));
  FirstOrderOptions fp, gm;
  fp.method = FirstOrderMethod::FixedPoint;
  gm.method = FirstOrderMethod::Gmres;
  gm.tol = 1e-10;
  FirstOrderReport rf, rg;
  ScalarField a = solve_recovery_first_order(sys, fo, fp, &rf);
  ScalarField b = solve_recovery_first_order(sys, fo, gm, &rg);
  CHECK(rf.converged);
  CHECK(rg.converged);
  for (std::size_t node : grid.interior()) REQUIRE(a[node] == doctest::Approx(b[node]).epsilon(1e-5));

  // an expanding one is detected
  sys.reductions[0].matrix.setIdentity();
  sys.reductions[0].matrix *= -50.0;
  CHECK_THROWS_AS(solve_recovery_first_order(sys, fo, fp), NumericalError);
}
