#pragma once

#include <functional>
#include <string>
#include <vector>

#include "confwave/control.hpp"
#include "confwave/recovery.hpp"

namespace confwave {

enum class ExitKind { Outflow, Stalled, LeftDomain };
const char* to_string(ExitKind k);

struct Characteristic {
  std::size_t seed_node = 0;   // Gamma node the seed is attached to
  std::vector<Vec3> points;    // samples along the curve, points[0] is the seed
  std::vector<double> times;   // flow parameter s of each sample
  double length = 0.0;         // arc length
  ExitKind exit = ExitKind::Stalled;
};

struct CharacteristicFan {
  double step = 0.0;           // flow-parameter step
  std::vector<Characteristic> curves;
  double max_gap = 0.0;        // max over interior nodes of the nearest-sample distance
  std::size_t uncovered = 0;   // interior nodes farther than 2h from every sample
  double max_time = 0.0;       // longest exit time
  std::size_t stalled = 0, left_domain = 0;
};

// Multilinear interpolation of nodal values (coordinates clamped into the box).
double interpolate(const Grid& grid, const ScalarField& f, const Vec3& x);
Vec3 interpolate(const Grid& grid, const VectorField& f, const Vec3& x);

// Classical RK4 for x' = field(x): returns the end point after `steps` steps of size ds.
Vec3 integrate_characteristic(const std::function<Vec3(const Vec3&)>& field, Vec3 x0, double ds, int steps);

// Seeds: inflow Gamma nodes (Sigma0 . nu < 0) and midpoints of Gamma edges joining two of them.
struct Seed {
  Vec3 x;
  std::size_t node;
};
std::vector<Seed> default_seeds(const Grid& grid, const VectorField& sigma0);

// RK4 with step h/(2 max|Sigma0|); stops on leaving the box or after 10 diam of arc length.
CharacteristicFan trace_characteristics(const Grid& grid, const VectorField& sigma0, const std::vector<Seed>& seeds,
                                        Exec exec = Exec::Parallel);

struct FlowReport {
  bool inflow_ok = true;       // Sigma0 . nu < 0 on Gamma (tangential nodes tolerated, counted)
  bool outflow_ok = true;      // Sigma0 . nu >= -tol on the rest of the boundary
  bool magnitude_ok = true;    // |Sigma0| >= delta
  bool coverage_ok = true;     // every interior node within 2h of a sample
  bool exit_ok = true;         // every curve leaves through the rest of the boundary
  double max_inflow = 0.0;     // max of Sigma0 . nu over Gamma
  double min_outflow = 0.0;    // min of Sigma0 . nu outside Gamma
  double min_magnitude = 0.0;
  std::size_t worst_magnitude_node = 0;
  std::size_t inflow_violations = 0;
  std::size_t tangential = 0;  // Gamma nodes with |Sigma0 . nu| <= tol
  double max_gap = 0.0;
  double max_time = 0.0;
  bool ok() const { return inflow_ok && outflow_ok && magnitude_ok && coverage_ok && exit_ok; }
  std::string summary() const;
};

// The sign checks skip Gamma nodes adjacent to the rest of the boundary (the edge of Gamma).
FlowReport validate_flow_assumption(const Grid& grid, const VectorField& sigma0, double delta, double tol = 1e-8);

// Inverse of (Sigma0 . grad + sigma0) with zero data on Gamma by the method of characteristics.
// The fan and the scatter stencils are computed once.
class FirstOrderSolver {
 public:
  FirstOrderSolver(const Grid& grid, VectorField sigma0, ScalarField s0, Exec exec = Exec::Parallel);

  // Integrates df/ds + s0 f = rhs along every curve and scatters by inverse-distance
  // weighting over the 4 (2D) / 8 (3D) nearest samples. Boundary values of rhs are
  // replaced by their inward neighbours when `extend_rhs` is set (interior-only data).
  ScalarField solve(const ScalarField& rhs, bool extend_rhs = false) const;
  // relative weighted residual of Sigma0 . grad f + s0 f - rhs on interior nodes
  double residual(const ScalarField& f, const ScalarField& rhs) const;

  const CharacteristicFan& fan() const { return fan_; }
  const Grid& grid() const { return grid_; }

 private:
  Grid grid_;
  VectorField sigma0_;
  ScalarField s0_;
  Exec exec_;
  CharacteristicFan fan_;
  std::vector<std::size_t> offsets_;          // first sample of each curve in the flat sample list
  std::vector<std::vector<std::pair<std::size_t, double>>> stencil_;  // per node: (flat sample, weight)
};

ScalarField solve_first_order(const Grid& grid, const VectorField& sigma0, const ScalarField& s0,
                              const ScalarField& rhs, double* residual = nullptr);

// <u, v>_H = <Sigma0 . grad u, Sigma0 . grad v>_w
struct HNormSpace {
  const Grid* grid = nullptr;
  VectorField sigma0;
  Eigen::VectorXd weights;  // full-grid trapezoid weights

  HNormSpace(const Grid& g, VectorField s);
  ScalarField derivative(const ScalarField& u) const;  // Sigma0 . grad u
  double inner(const ScalarField& u, const ScalarField& v) const;
  double norm(const ScalarField& u) const { return std::sqrt(inner(u, u)); }
  double l2(const ScalarField& u) const;
};

struct PoincareEstimate {
  double empirical = 0.0;     // max |v| / |Sigma0 . grad v| over the probes
  double length_bound = 0.0;  // longest characteristic exit time
  std::vector<ScalarField> probes;
};

// Probes are T * r with T the exit-time from Gamma (Sigma0 . grad T = 1, T|Gamma = 0)
// and r = 1 + smooth random perturbation; the first probe has r = 1.
PoincareEstimate poincare_constant(const Grid& grid, const VectorField& sigma0, int probes = 20, unsigned seed = 7);

enum class FirstOrderMethod { FixedPoint, Gmres, Auto };

struct FirstOrderOptions {
  FirstOrderMethod method = FirstOrderMethod::Auto;
  double tol = 1e-6;
  int max_iter = 100;
  int gmres_restart = 40;
};

struct FirstOrderReport {
  std::string method;
  int iterations = 0;
  double update = 0.0;          // last relative update (fixed point) or residual (GMRES)
  double spectral_radius = 0.0; // ratio of the last two updates
  double transport_residual = 0.0;
  bool converged = false;
};

// Reductions P(sigma_dot S), P(Sigma_dot_a S) needed by the compact part.
struct FirstOrderSystem {
  const HumSolver* solver = nullptr;
  std::vector<AssembledOperator> reductions;  // [sigma, Sigma_1 .. Sigma_n]
  Eigen::VectorXd rhs;                        // -C* mdot on interior nodes
};

FirstOrderSystem assemble_first_order_system(HumSolver& solver, const SourceFactors& factors, const Measurement& meas,
                                             Exec exec = Exec::Parallel);
// (P sigma_dot S)* f + sum_a (P Sigma_dot_a S)* d_a f on interior nodes
Eigen::VectorXd apply_compact_part(const FirstOrderSystem& sys, const Eigen::VectorXd& f);

// Solves [Sigma0 . grad + sigma0] f + compact(f) = -C* mdot.
ScalarField solve_recovery_first_order(const FirstOrderSystem& sys, const FirstOrderSolver& transport,
                                       const FirstOrderOptions& opt = {}, FirstOrderReport* report = nullptr);

}  // namespace confwave
