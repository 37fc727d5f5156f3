#pragma once

#include <vector>

#include "confwave/coefficients.hpp"
#include "confwave/csr.hpp"
#include "confwave/fields.hpp"
#include "confwave/geometry.hpp"
#include "confwave/grid.hpp"

namespace confwave {

// Values on Gamma nodes (Grid::gamma() order) at levels 0..nt.
struct BoundaryTrace {
  double dt = 0.0;
  int nt = 0;
  int n_gamma = 0;
  std::vector<double> data;  // level-major: data[k * n_gamma + s]

  BoundaryTrace() = default;
  BoundaryTrace(double dt_, int nt_, int n_gamma_)
      : dt(dt_), nt(nt_), n_gamma(n_gamma_), data(static_cast<std::size_t>(nt_ + 1) * n_gamma_, 0.0) {}

  double& at(int k, int s) { return data[static_cast<std::size_t>(k) * n_gamma + s]; }
  double at(int k, int s) const { return data[static_cast<std::size_t>(k) * n_gamma + s]; }
  double* level(int k) { return data.data() + static_cast<std::size_t>(k) * n_gamma; }
  const double* level(int k) const { return data.data() + static_cast<std::size_t>(k) * n_gamma; }
  double tau() const { return dt * nt; }
  double max_abs() const;
};

BoundaryTrace operator-(const BoundaryTrace& a, const BoundaryTrace& b);

struct CauchyData {
  ScalarField position;
  ScalarField velocity;
};

// Snapshots u^0..u^nt and centered velocities. Velocities at the two ends use
// leapfrog-extended ghost levels, so v^0 reproduces the prescribed initial velocity.
struct WaveTrajectory {
  double dt = 0.0;
  int nt = 0;
  FieldSeries u;
  FieldSeries v;
  double tau() const { return dt * nt; }
};

enum class SpeedChoice { True, Reference };

// Largest admissible step: factor * h_min / (c_max sqrt(lambda_max(g^-1)) sqrt(n)).
double cfl_time_step(const Grid& grid, const CoefficientSet& coeffs, double cfl_factor = 0.5);

struct TimeGrid {
  double dt;
  int nt;
};
// Smallest nt with tau / nt admissible.
TimeGrid make_time_grid(const Grid& grid, const CoefficientSet& coeffs, double tau, double cfl_factor = 0.5);

// Leapfrog solve of u_tt = A_{c^-2 g} u with Dirichlet data on Gamma (zero on the
// rest of the boundary). Throws ValidationError on CFL violation.
WaveTrajectory solve_forward(const Grid& grid, const CoefficientSet& coeffs, SpeedChoice speed,
                             const CauchyData& init, const BoundaryTrace& dirichlet,
                             double cfl_factor = 0.5);

// Backward solve from zero Cauchy data at t = tau with Dirichlet control zeta
// (must vanish at both ends). Uses the true speed.
WaveTrajectory solve_time_reversed(const Grid& grid, const CoefficientSet& coeffs,
                                   const BoundaryTrace& zeta, double cfl_factor = 0.5);

inline CauchyData initial_state(const WaveTrajectory& t) { return {t.u.front(), t.v.front()}; }

enum class TraceScheme {
  ConservativeFlux,  // face flux of the assembled operator: exact discrete Green identity
  OneSided,          // second-order one-sided normal derivative
};

// Gamma x full-grid matrix returning nu . grad_{c^-2 g} u on Gamma nodes (true speed).
Csr neumann_trace_operator(const Grid& grid, const CoefficientSet& coeffs,
                           TraceScheme scheme = TraceScheme::ConservativeFlux);

BoundaryTrace neumann_trace(const WaveTrajectory& traj, const Grid& grid, const CoefficientSet& coeffs,
                            TraceScheme scheme = TraceScheme::ConservativeFlux);

enum class EndRule {
  OneSided,  // second-order one-sided difference
  Odd,       // point reflection about the end value (exact closure for traces vanishing there)
};

BoundaryTrace time_derivative(const BoundaryTrace& trace, EndRule start = EndRule::OneSided,
                              EndRule end = EndRule::OneSided);
BoundaryTrace time_antiderivative(const BoundaryTrace& trace);

// Staggered leapfrog energy E^{k+1/2} = 1/2 |(u^{k+1}-u^k)/dt|^2 + 1/2 <-A u^{k+1}, u^k>,
// k = 0..nt-1; exactly conserved without boundary input.
std::vector<double> staggered_energy(const WaveTrajectory& traj, const DiscreteOperator& op, const Grid& grid);
// E(t_k) = 1/2 |v^k|^2 + 1/2 <-A u^k, u^k>
std::vector<double> centered_energy(const WaveTrajectory& traj, const DiscreteOperator& op, const Grid& grid);

// Boundary-trace inner product sum_k q_k sum_s w_s a b with trapezoid q and
// surface weights w_s = density * surface quadrature on Gamma.
Eigen::VectorXd trace_weights(const Grid& grid, const CoefficientSet& coeffs);
double trace_inner_product(const BoundaryTrace& a, const BoundaryTrace& b, const Eigen::VectorXd& w);

}  // namespace confwave
