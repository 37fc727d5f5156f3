#include <cmath>

#include "confwave/errors.hpp"
#include "confwave/wave.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace confwave;
using testsupport::pi;

namespace {

ScalarField eigenmode(const Grid& g) {
  return sample(g, [](const Vec3& x) { return std::sin(pi * x[0]) * std::sin(pi * x[1]); });
}

WaveTrajectory eigen_run(const Grid& grid, int nt, double tau = 1.0) {
  CoefficientSet cs(grid);
  BoundaryTrace zero(tau / nt, nt, static_cast<int>(grid.gamma().size()));
  return solve_forward(grid, cs, SpeedChoice::True, {eigenmode(grid), ScalarField(grid.size())}, zero);
}

double eigen_error(int n, int nt) {
  Grid grid = Grid::unit(2, n);
  WaveTrajectory tr = eigen_run(grid, nt);
  ScalarField a = eigenmode(grid);
  double c = std::cos(std::sqrt(2.0) * pi * 0.5);
  double e = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) e = std::max(e, std::abs(tr.u[nt / 2][i] - c * a[i]));
  return e;
}

// smooth control on Gamma vanishing at both ends
BoundaryTrace bump_control(const Grid& grid, double dt, int nt) {
  BoundaryTrace z(dt, nt, static_cast<int>(grid.gamma().size()));
  for (int k = 0; k <= nt; ++k) {
    double t = k * dt / (nt * dt);
    for (int s = 0; s < z.n_gamma; ++s) {
      Vec3 x = grid.coords(grid.gamma()[s]);
      z.at(k, s) = std::pow(std::sin(pi * t), 2) * std::cos(2 * x[0] + x[1]);
    }
  }
  return z;
}

}  // namespace

TEST_CASE("zero input gives an identically zero trajectory") {
  Grid grid = Grid::unit(2, 10);
  CoefficientSet cs(grid);
  TimeGrid tg = make_time_grid(grid, cs, 1.0);
  BoundaryTrace zero(tg.dt, tg.nt, static_cast<int>(grid.gamma().size()));
  WaveTrajectory tr = solve_forward(grid, cs, SpeedChoice::True, {ScalarField(grid.size()), ScalarField(grid.size())}, zero);
  for (int k = 0; k <= tr.nt; ++k)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      REQUIRE(tr.u[k][i] == 0.0);
      REQUIRE(tr.v[k][i] == 0.0);
    }
  WaveTrajectory rv = solve_time_reversed(grid, cs, zero);
  for (const auto& f : rv.u)
    for (double x : f.values()) REQUIRE(x == 0.0);
  CHECK(tr.tau() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("eigenmode solution and convergence") {
  double e1 = eigen_error(17, 48), e2 = eigen_error(33, 96);
  CHECK(e1 < 2e-2);
  CHECK(e1 / e2 >= 3.5);
}

TEST_CASE("energy conservation") {
  Grid grid = Grid::unit(2, 41);
  CoefficientSet cs(grid);
  TimeGrid tg = make_time_grid(grid, cs, 2.0);
  WaveTrajectory tr = eigen_run(grid, tg.nt, 2.0);
  DiscreteOperator op = assemble_laplace_beltrami(grid, cs, true);
  auto st = staggered_energy(tr, op, grid);
  auto ce = centered_energy(tr, op, grid);
  for (double e : st) CHECK(std::abs(e - st.front()) <= 1e-12 * st.front());
  for (double e : ce) CHECK(std::abs(e - ce.front()) <= 1e-3 * ce.front());
}

TEST_CASE("CFL violation is rejected before stepping") {
  Grid grid = Grid::unit(2, 17);
  CoefficientSet cs(grid);
  BoundaryTrace zero(0.2, 5, static_cast<int>(grid.gamma().size()));
  try {
    solve_forward(grid, cs, SpeedChoice::True, {eigenmode(grid), ScalarField(grid.size())}, zero);
    FAIL("expected CFL refusal");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("admissible") != std::string::npos);
  }
}

TEST_CASE("time-reversed solve: validation and reversibility") {
  Grid grid = Grid::unit(2, 13);
  CoefficientSet cs(grid);
  cs.c = sample(grid, [](const Vec3& x) { return 1.0 + 0.2 * x[0] * x[1]; });
  TimeGrid tg = make_time_grid(grid, cs, 1.5);
  BoundaryTrace z = bump_control(grid, tg.dt, tg.nt);

  BoundaryTrace bad = z;
  bad.at(0, 3) = 0.1;
  CHECK_THROWS_AS(solve_time_reversed(grid, cs, bad), ValidationError);

  WaveTrajectory xi = solve_time_reversed(grid, cs, z);
  CauchyData c0 = initial_state(xi);
  WaveTrajectory fw = solve_forward(grid, cs, SpeedChoice::True, c0, z);
  double scale = 0.0, end = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    scale = std::max(scale, std::abs(c0.velocity[i]));
    end = std::max(end, std::abs(fw.u[tg.nt][i]));
  }
  for (std::size_t i : grid.interior()) end = std::max(end, std::abs(fw.v[tg.nt][i]));
  CHECK(end <= 1e-10 * scale);
  for (std::size_t n : grid.interior()) CHECK(std::abs(xi.v[tg.nt][n]) < 1e-14);
}

TEST_CASE("discrete Green identity couples controls and Neumann traces") {
  Grid grid = Grid::unit(2, 15);
  CoefficientSet cs(grid);
  cs.c = sample(grid, [](const Vec3& x) { return 1.0 + 0.1 * std::sin(3 * x[0] + x[1]); });
  cs.mu = sample(grid, [](const Vec3& x) { return 1.0 + 0.3 * x[1]; });
  TimeGrid tg = make_time_grid(grid, cs, 1.2);
  BoundaryTrace z = bump_control(grid, tg.dt, tg.nt);
  WaveTrajectory xi = solve_time_reversed(grid, cs, z);

  for (unsigned seed : {1u, 2u, 3u}) {
    ScalarField a = testsupport::random_dirichlet_field(grid, seed);
    ScalarField b = testsupport::random_dirichlet_field(grid, seed + 100);
    BoundaryTrace zero(tg.dt, tg.nt, z.n_gamma);
    WaveTrajectory v = solve_forward(grid, cs, SpeedChoice::True, {a, b}, zero);
    BoundaryTrace lam = neumann_trace(v, grid, cs);
    double lhs = weighted_inner_product(xi.v[0], v.u[0], grid, cs, true) -
                 weighted_inner_product(xi.u[0], v.v[0], grid, cs, true);
    double rhs = trace_inner_product(z, lam, trace_weights(grid, cs));
    CHECK(std::abs(lhs - rhs) <= 1e-6 * std::abs(rhs));
  }
}

TEST_CASE("Neumann traces") {
  Grid grid = Grid::unit(2, 17, GammaSpec::face(0, 1));
  CoefficientSet cs(grid);
  WaveTrajectory frozen;
  frozen.dt = 0.1;
  frozen.nt = 0;
  frozen.u = {ScalarField(grid.size(), 2.5)};
  for (auto scheme : {TraceScheme::ConservativeFlux, TraceScheme::OneSided}) {
    BoundaryTrace t = neumann_trace(frozen, grid, cs, scheme);
    CHECK(t.max_abs() < 1e-10);
  }
  frozen.u = {sample(grid, [](const Vec3& x) { return x[0]; })};
  for (auto scheme : {TraceScheme::ConservativeFlux, TraceScheme::OneSided}) {
    BoundaryTrace t = neumann_trace(frozen, grid, cs, scheme);
    for (int s = 0; s < t.n_gamma; ++s) {
      std::size_t node = grid.gamma()[s];
      if (grid.on_face(node, 1, 0) || grid.on_face(node, 1, 1)) continue;  // corners
      CHECK(t.at(0, s) == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("eigenmode Neumann trace converges at second order") {
  auto err = [](int n, int nt, TraceScheme scheme) {
    Grid grid = Grid::unit(2, n, GammaSpec::face(0, 1));
    CoefficientSet cs(grid);
    BoundaryTrace zero(1.0 / nt, nt, static_cast<int>(grid.gamma().size()));
    WaveTrajectory tr = solve_forward(grid, cs, SpeedChoice::True, {eigenmode(grid), ScalarField(grid.size())}, zero);
    BoundaryTrace lam = neumann_trace(tr, grid, cs, scheme);
    double e = 0.0;
    for (int k = 0; k <= nt; ++k)
      for (int s = 0; s < lam.n_gamma; ++s) {
        double y = grid.coords(grid.gamma()[s])[1];
        double exact = -pi * std::cos(std::sqrt(2.0) * pi * k * lam.dt) * std::sin(pi * y);
        e = std::max(e, std::abs(lam.at(k, s) - exact));
      }
    return e;
  };
  for (auto scheme : {TraceScheme::ConservativeFlux, TraceScheme::OneSided}) {
    double e1 = err(17, 48, scheme), e2 = err(33, 96, scheme);
    CHECK(e1 < 0.1);
    CHECK(e1 / e2 > 3.3);
  }
}

TEST_CASE("time derivative and antiderivative") {
  auto make = [](int nt, double tau, auto fn) {
    BoundaryTrace t(tau / nt, nt, 2);
    for (int k = 0; k <= nt; ++k) t.at(k, 0) = t.at(k, 1) = fn(k * tau / nt);
    return t;
  };
  BoundaryTrace c = make(20, 1.0, [](double) { return 3.0; });
  CHECK(time_derivative(c).max_abs() < 1e-12);

  auto derr = [&](int nt) {
    BoundaryTrace s = make(nt, 2.0, [](double t) { return std::sin(t); });
    BoundaryTrace d = time_derivative(s);
    double e = 0.0;
    for (int k = 0; k <= nt; ++k) e = std::max(e, std::abs(d.at(k, 0) - std::cos(k * s.dt)));
    return e;
  };
  CHECK(derr(40) / derr(80) > 3.5);
  CHECK(derr(40) < 1e-2);

  auto rerr = [&](int nt, EndRule rule) {
    BoundaryTrace s = make(nt, 2.0, [](double t) { return std::sin(pi * t / 2.0); });
    BoundaryTrace r = time_antiderivative(time_derivative(s, rule, rule));
    double e = 0.0;
    for (int k = 0; k <= nt; ++k) e = std::max(e, std::abs(r.at(k, 1) - s.at(k, 1)));
    return e;
  };
  for (EndRule rule : {EndRule::OneSided, EndRule::Odd}) {
    CHECK(rerr(50, rule) < 5e-3);
    CHECK(rerr(50, rule) / rerr(100, rule) > 3.0);
  }
}
