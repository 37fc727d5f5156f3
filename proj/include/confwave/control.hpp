#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "confwave/coefficients.hpp"
#include "confwave/csr.hpp"
#include "confwave/geometry.hpp"
#include "confwave/grid.hpp"
#include "confwave/wave.hpp"

namespace confwave {

struct ControlProblem {
  Grid grid;
  CoefficientSet coeffs;  // c is the true speed: the control metric is c^-2 g
  double tau = 3.0;
  double epsilon = 1e-8;  // Tikhonov, relative to the largest HUM-Gram eigenvalue
  double kappa = 0.25;    // fraction of Dirichlet modes kept in the target filter
  double cg_tol = 1e-3;
  int cg_max_iter = 200;
  double cfl_factor = 0.5;
  std::size_t assembly_cap = 1600;

  void validate() const;
};

struct HumResult {
  BoundaryTrace zeta;
  Eigen::VectorXd z;            // control unknowns, levels 1..nt-1
  int iterations = 0;
  double residual = 0.0;        // relative residual of the regularized HUM system
  bool converged = false;
  bool assembled = false;       // solved with the factored Gram instead of CG
  double pos_residual = 0.0;    // |xi(0)| / |phi|
  double vel_residual = 0.0;    // |xi_t(0) - phi| / |phi|
  double vel_residual_filtered = 0.0;  // against the filtered target
};

// Discrete HUM machinery for one control problem. Unknowns of the control are the
// Gamma values at levels 1..nt-1 (the endpoints are pinned to zero); states are
// interior (position, velocity) pairs at t = 0 with the weighted L2 metric.
class HumSolver {
 public:
  explicit HumSolver(ControlProblem prob, Exec exec = Exec::Parallel);
  ~HumSolver();
  HumSolver(const HumSolver&) = delete;
  HumSolver& operator=(const HumSolver&) = delete;

  const ControlProblem& problem() const { return prob_; }
  const Grid& grid() const { return prob_.grid; }
  const CoefficientSet& coeffs() const { return prob_.coeffs; }
  double dt() const { return dt_; }
  int nt() const { return nt_; }
  int n_interior() const { return n_; }
  int n_gamma() const { return g_; }
  int n_control() const { return (nt_ - 1) * g_; }

  const Eigen::VectorXd& field_weights() const { return w_; }
  const Eigen::VectorXd& state_weights() const { return ws_; }
  const Eigen::VectorXd& gamma_weights() const { return wb_; }
  // trapezoid weights of the time levels 0..nt
  Eigen::VectorXd time_weights() const;

  // L: control -> (xi(0), xi_t(0)) on interior nodes
  Eigen::VectorXd control_to_state(const Eigen::VectorXd& z, Exec exec = Exec::Parallel) const;
  // L^T (Euclidean transpose)
  Eigen::VectorXd state_to_control(const Eigen::VectorXd& s, Exec exec = Exec::Parallel) const;
  // R^{-1} for the discrete H^1_0((0,tau) x Gamma) Gram R
  Eigen::VectorXd gram_inverse(const Eigen::VectorXd& z, Exec exec = Exec::Parallel) const;
  Eigen::VectorXd gram_apply(const Eigen::VectorXd& z) const;
  double control_norm(const Eigen::VectorXd& z) const;
  // Lambda y = L R^{-1} L^T W y, self-adjoint in the state metric
  Eigen::VectorXd apply_hum_gram(const Eigen::VectorXd& y, Exec exec = Exec::Parallel) const;
  // L* s = R^{-1} L^T W s : the control produced by a Gram-solution s
  Eigen::VectorXd control_from_state(const Eigen::VectorXd& s, Exec exec = Exec::Parallel) const;

  Eigen::VectorXd filter(const Eigen::VectorXd& phi) const;
  double lambda_max() const { return lambda_max_; }
  double regularization() const { return prob_.epsilon * lambda_max_; }

  // Assemble the HUM Gram densely and diagonalize it (assembled mode).
  void factor_gram(Exec exec = Exec::Parallel);
  bool gram_factored() const { return factored_; }
  // (Lambda + eps)^{-1} applied columnwise; requires factor_gram().
  Eigen::MatrixXd gram_solve(const Eigen::MatrixXd& rhs) const;
  // (Lambda + eps)^{-1} via factorization when available, else CG.
  Eigen::VectorXd regularized_solve(const Eigen::VectorXd& rhs, int* iters = nullptr, double* res = nullptr,
                                    Exec exec = Exec::Parallel) const;

  HumResult solve(const ScalarField& phi, Exec exec = Exec::Parallel) const;
  HumResult solve_interior(const Eigen::VectorXd& phi, Exec exec = Exec::Parallel) const;

  BoundaryTrace to_trace(const Eigen::VectorXd& z) const;
  Eigen::VectorXd from_trace(const BoundaryTrace& t) const;

  // Backward sweep for control z; calls fn(k, xi^{k-1}, xi^k, xi^{k+1}) for k = nt..0 on
  // interior vectors (levels -1 and nt+1 are the leapfrog ghosts).
  using LevelFn = std::function<void(int k, const double* prev, const double* cur, const double* next)>;
  void sweep(const Eigen::VectorXd& z, const LevelFn& fn, Exec exec = Exec::Serial) const;

  const Csr& interior_operator() const { return A_; }
  const Csr& lifting_operator() const { return B_; }

 private:
  struct GammaFactor;
  ControlProblem prob_;
  double dt_ = 0.0;
  int nt_ = 0, n_ = 0, g_ = 0;
  Csr A_, B_, At_, Bt_;
  Eigen::VectorXd w_, ws_, wb_, sqrt_wb_;
  Eigen::MatrixXd sine_;            // orthonormal DST-I basis of the time second difference
  Eigen::VectorXd time_eig_;
  std::unique_ptr<GammaFactor> gf_;
  Eigen::SparseMatrix<double> lgamma_;
  Eigen::MatrixXd filter_basis_;    // W^{1/2}-orthonormal low modes (empty when kappa = 1)
  double lambda_max_ = 1.0;
  bool factored_ = false;
  Eigen::MatrixXd gram_vecs_;       // eigenvectors of W^{1/2} Lambda W^{-1/2}
  Eigen::VectorXd gram_vals_;
};

BoundaryTrace hum_min_norm_control(const HumSolver& solver, const ScalarField& phi, HumResult* report = nullptr);
// eta = d/dt zeta_min
BoundaryTrace op_C(const HumSolver& solver, const ScalarField& phi);
// psi = d/dt xi on the full grid; v holds d/dt psi (= A xi inside)
WaveTrajectory op_S(const HumSolver& solver, const ScalarField& phi);

// Transpose of time_derivative(., Odd, Odd) / (., Odd, OneSided) as linear maps.
BoundaryTrace time_derivative_transpose(const BoundaryTrace& t, EndRule start, EndRule end);

// Dense matrix with diagonal Gram matrices on both spaces.
struct AssembledOperator {
  Eigen::MatrixXd matrix;
  SpaceTag domain = SpaceTag::InteriorField;
  SpaceTag codomain = SpaceTag::InteriorField;
  Eigen::VectorXd domain_gram;
  Eigen::VectorXd codomain_gram;

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const { return matrix * x; }
  Eigen::VectorXd apply_adjoint(const Eigen::VectorXd& y) const;
  // W_dom^{-1} M^T W_cod
  Eigen::MatrixXd adjoint_matrix() const;
  AssembledOperator adjoint() const;
  // max over trials of |<Ax,y>_cod - <x,A*y>_dom| / (|Ax| |y|)
  double adjoint_defect(unsigned seed, int trials = 5) const;
};

struct AssemblyRequest {
  bool store_C = false;
  bool store_S = false;
  // each entry: weights a^k (full-grid fields, k = 0..nt); produces P(a psi) columns
  std::vector<const FieldSeries*> reductions;
  // When set, reduction columns are handed over (column j, one vector per reduction)
  // instead of being stored. Called concurrently for distinct j.
  std::function<void(int j, const std::vector<Eigen::VectorXd>& cols)> column_sink;
};

struct ControlAssembly {
  std::optional<AssembledOperator> C;   // interior field -> Gamma space-time
  std::optional<AssembledOperator> S;   // interior field -> interior space-time
  std::vector<AssembledOperator> reductions;  // interior field -> interior field
};

// Column j built from the unit target e_j; columns are independent and computed in
// parallel with a fixed per-column reduction order.
ControlAssembly assemble_control(HumSolver& solver, const AssemblyRequest& req, Exec exec = Exec::Parallel);
ControlAssembly assemble_C_and_S(HumSolver& solver, Exec exec = Exec::Parallel);

// y with <C phi, trace> = <phi, y>_w, matrix-free through the HUM Gram.
ScalarField apply_C_star(const HumSolver& solver, const BoundaryTrace& trace);
ScalarField apply_C_star(const AssembledOperator& C, const HumSolver& solver, const BoundaryTrace& trace);

// Gamma space-time Gram diagonal (trapezoid in time times surface weights).
Eigen::VectorXd trace_gram(const HumSolver& solver);
Eigen::VectorXd flatten(const BoundaryTrace& t);

}  // namespace confwave
