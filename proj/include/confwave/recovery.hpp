#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "confwave/control.hpp"
#include "confwave/wave.hpp"

namespace confwave {

// sigma = A_g w~ and Sigma = (2-n)/2 grad_g w~ along the reference trajectory.
// Time derivatives come from the trajectory velocities (ghost-level centered).
struct SourceFactors {
  int dim = 2;
  double dt = 0.0;
  int nt = 0;
  FieldSeries sigma, sigma_dot;                   // levels 0..nt
  std::vector<VectorField> Sigma, Sigma_dot;      // identically zero for n = 2
  ScalarField sigma0;
  VectorField Sigma0;
  std::optional<double> delta;                    // claimed lower bound of |sigma0|
};

SourceFactors compute_source_factors(const WaveTrajectory& ref, const Grid& grid, const CoefficientSet& coeffs);

// trapezoid integral over [0, tau] per node
ScalarField time_integral_P(const FieldSeries& traj, double dt);

// Initial position alpha plus the Gamma Dirichlet data gamma(t) = alpha + ramp * t^2/2 c~^2 delta.
struct Illumination {
  std::string kind = "poisson";
  ScalarField alpha;
  double delta = 1.0;
  bool ramp = true;
};

// A_g alpha = delta inside, alpha = 0 on the boundary.
Illumination illuminate_poisson(const Grid& grid, const CoefficientSet& coeffs, double delta = 1.0);
// A_g alpha = 0 with alpha = value on Gamma and 0 elsewhere on the boundary; the jump at
// the edge of Gamma is blended over `band` nodes.
Illumination illuminate_harmonic(const Grid& grid, const CoefficientSet& coeffs, double value = -1.0, int band = 3);
// A_g alpha = 0 with alpha = data(x) on Gamma and 0 elsewhere on the boundary.
Illumination illuminate_harmonic(const Grid& grid, const CoefficientSet& coeffs,
                                 const std::function<double(const Vec3&)>& data);
// Poisson part plus -(2/(2-n)) x_axis so that Sigma_0 = e_axis (n >= 3).
Illumination illuminate_linear(const Grid& grid, const CoefficientSet& coeffs, int axis, double delta = 1.0);

BoundaryTrace illumination_boundary_data(const Grid& grid, const CoefficientSet& coeffs, const Illumination& illum,
                                         const TimeGrid& tg);

struct Measurement {
  BoundaryTrace m;     // lambda - lambda~
  BoundaryTrace mdot;  // d/dt m, odd at t = 0 (m vanishes there), one-sided at tau
};

Measurement make_measurement(BoundaryTrace m);
// Adds Gaussian noise of standard deviation level * rms(m); returns the noise draw.
BoundaryTrace add_noise(Measurement& meas, double level, unsigned seed);

struct TwinData {
  Measurement meas;
  WaveTrajectory w, w_ref;
};

// Both runs share alpha and gamma; the run with speed c starts with velocity beta, the
// reference (c~) run with beta_ref. Both traces use the true-speed flux operator.
TwinData synthesize_measurement(const Grid& grid, const CoefficientSet& coeffs, const Illumination& illum,
                                const ScalarField& beta, const ScalarField& beta_ref, const TimeGrid& tg,
                                double cfl_factor = 0.5, TraceScheme scheme = TraceScheme::ConservativeFlux);

struct SolveReport {
  std::string method;
  double condition = 0.0;     // 2-norm condition in the weighted metric (estimate when large)
  double residual = 0.0;      // relative weighted residual of the returned solution
  double regularization = 0.0;
  double consistency = 0.0;   // |grad block - grad(f block)| / |grad(f block)| (multi only)
  bool clamped = false;
  std::size_t clamped_nodes = 0;
};

// Linear system for the interior values of the unknown blocks, posed in the
// weighted L2 metric (weights repeated per block).
struct RecoverySystem {
  Eigen::MatrixXd matrix;
  Eigen::VectorXd rhs;
  Eigen::VectorXd weights;  // per unknown
  Eigen::VectorXd row_weights;
  int blocks = 1;           // unknown blocks; f is the last
  int n_interior = 0;
  double delta_min = 0.0;   // smallest |sigma0| (or |det M0|) over interior nodes
  SolveReport report;
};

// [sigma0 + (P sigma_dot S)]^* f = -C^* mdot. `reduction` is the assembled P(sigma_dot S).
RecoverySystem assemble_recovery_operator_2d(const HumSolver& solver, const SourceFactors& factors,
                                             const AssembledOperator& reduction, const Measurement& meas,
                                             double delta_required);

struct ContrastOptions {
  double noise = 0.0;          // expected weighted norm of the rhs error; > 0 enables Tikhonov
  double max_condition = 1e12;
  std::size_t exact_condition_limit = 2500;
};

// Interior solution vector (all blocks).
Eigen::VectorXd solve_system(RecoverySystem& sys, const ContrastOptions& opt = {});
// f as a full-grid field (zero on the boundary).
ScalarField solve_contrast(RecoverySystem& sys, const Grid& grid, const ContrastOptions& opt = {});

// c = sqrt(c~^2 + f), clamped below at c_floor.
ScalarField recover_speed(const ScalarField& c_ref, const ScalarField& f, double c_floor, SolveReport* report = nullptr);

// Block system [M0 + K] F = M for F = (grad f, f) from n+1 illuminations. For n = 2 the
// gradient blocks vanish identically and the stacked system for f alone is solved in the
// least-squares sense.
RecoverySystem assemble_multi_illumination(HumSolver& solver, const std::vector<SourceFactors>& factors,
                                           const std::vector<Measurement>& meas, double delta_required,
                                           Exec exec = Exec::Parallel);
ScalarField solve_multi_illumination(RecoverySystem& sys, const Grid& grid, const ContrastOptions& opt = {});

// Weighted L2 helpers on interior vectors.
double wnorm(const Eigen::VectorXd& v, const Eigen::VectorXd& w);
double relative_error(const ScalarField& a, const ScalarField& b, const Grid& grid, const Eigen::VectorXd& w);

}  // namespace confwave
