#include "confwave/control.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "confwave/errors.hpp"

namespace confwave {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void ControlProblem::validate() const {
  coeffs.validate(grid);
  if (!(tau > 0.0)) throw ValidationError("control: tau must be positive");
  if (!(epsilon >= 0.0)) throw ValidationError("control: epsilon must be >= 0");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ValidationError("control: kappa must lie in (0, 1]");
  if (!(cg_tol > 0.0) || cg_max_iter < 1) throw ValidationError("control: bad CG settings");
}

struct HumSolver::GammaFactor {
  std::vector<std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>> modes;
};

HumSolver::~HumSolver() = default;

HumSolver::HumSolver(ControlProblem prob, Exec exec) : prob_(std::move(prob)) {
  prob_.validate();
  const Grid& grid = prob_.grid;
  TimeGrid tg = make_time_grid(grid, prob_.coeffs, prob_.tau, prob_.cfl_factor);
  dt_ = tg.dt;
  nt_ = tg.nt;
  if (nt_ < 3) throw ValidationError("control: need at least 3 time steps");

  const DiscreteOperator op = assemble_laplace_beltrami(grid, prob_.coeffs, true);
  A_ = op.interior_block(grid);
  B_ = op.gamma_block(grid);
  At_ = A_.transpose();
  Bt_ = B_.transpose();
  n_ = A_.rows;
  g_ = B_.cols;

  w_ = restrict_interior(grid, op.quad);
  ws_.resize(2 * n_);
  ws_ << w_, w_;
  wb_ = trace_weights(grid, prob_.coeffs);
  sqrt_wb_ = wb_.array().sqrt();

  // time: Dirichlet second difference on levels 1..nt-1, diagonalized by DST-I
  const int M = nt_ - 1;
  sine_.resize(M, M);
  time_eig_.resize(M);
  const double norm = std::sqrt(2.0 / nt_);
  for (int k = 0; k < M; ++k) {
    time_eig_[k] = (2.0 - 2.0 * std::cos(std::numbers::pi * (k + 1) / nt_)) / (dt_ * dt_);
    for (int j = 0; j < M; ++j) sine_(j, k) = norm * std::sin(std::numbers::pi * (j + 1) * (k + 1) / nt_);
  }

  // Gamma graph Laplacian, 1/edge^2 weights
  std::vector<Eigen::Triplet<double>> lt;
  for (const auto& e : grid.gamma_edges()) {
    double w = 1.0 / (e.length * e.length);
    lt.emplace_back(e.a, e.a, w);
    lt.emplace_back(e.b, e.b, w);
    lt.emplace_back(e.a, e.b, -w);
    lt.emplace_back(e.b, e.a, -w);
  }
  lgamma_.resize(g_, g_);
  lgamma_.setFromTriplets(lt.begin(), lt.end());

  gf_ = std::make_unique<GammaFactor>();
  gf_->modes.resize(M);
  Eigen::SparseMatrix<double> id(g_, g_);
  id.setIdentity();
  for (int k = 0; k < M; ++k) {
    gf_->modes[k] = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    Eigen::SparseMatrix<double> m = lgamma_ + time_eig_[k] * id;
    gf_->modes[k]->compute(m);
    if (gf_->modes[k]->info() != Eigen::Success) throw NumericalError("control: Gamma Gram factorization failed");
  }

  // spectral target filter: low modes of -A in the weighted metric
  if (prob_.kappa < 1.0) {
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(n_, n_);
    Eigen::VectorXd sw = w_.array().sqrt();
    for (int r = 0; r < n_; ++r)
      for (auto k = A_.ptr[r]; k < A_.ptr[r + 1]; ++k) dense(r, A_.idx[k]) = -sw[r] * A_.val[k] / sw[A_.idx[k]];
    Eigen::MatrixXd sym = 0.5 * (dense + dense.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.info() != Eigen::Success) throw NumericalError("control: filter eigensolver failed");
    int keep = std::max(1, static_cast<int>(std::lround(prob_.kappa * n_)));
    filter_basis_ = es.eigenvectors().leftCols(keep);
  }

  // largest HUM-Gram eigenvalue by power iteration in the symmetric form
  Eigen::VectorXd x(2 * n_);
  for (int i = 0; i < 2 * n_; ++i) x[i] = 1.0 + 0.5 * std::sin(0.7 * i);
  x.normalize();
  Eigen::VectorXd sws = ws_.array().sqrt();
  double lam = 0.0;
  for (int it = 0; it < 40; ++it) {
    Eigen::VectorXd y = sws.cwiseProduct(apply_hum_gram(x.cwiseQuotient(sws), exec));
    double nl = x.dot(y);
    double ny = y.norm();
    if (ny == 0.0) break;
    x = y / ny;
    if (it > 5 && std::abs(nl - lam) <= 1e-6 * std::abs(nl)) {
      lam = nl;
      break;
    }
    lam = nl;
  }
  lambda_max_ = lam > 0.0 ? lam : 1.0;
}

Eigen::VectorXd HumSolver::time_weights() const {
  Eigen::VectorXd q = Eigen::VectorXd::Constant(nt_ + 1, dt_);
  q[0] = q[nt_] = 0.5 * dt_;
  return q;
}

Eigen::VectorXd HumSolver::control_to_state(const Eigen::VectorXd& z, Exec exec) const {
  Eigen::VectorXd xn = Eigen::VectorXd::Zero(n_), xc = Eigen::VectorXd::Zero(n_);
  const double dt2 = dt_ * dt_;
  for (int k = nt_ - 1; k >= 1; --k) {
    // xn <- level k-1 (aliases the k+1 buffer)
    kernels::leapfrog_step(exec, A_, &B_, xc.data(), z.data() + static_cast<std::size_t>(k - 1) * g_, xn.data(),
                           dt2, xn.data());
    xn.swap(xc);
  }
  // xc = level 0, xn = level 1
  Eigen::VectorXd s(2 * n_), ax(n_);
  A_.apply(xc.data(), ax.data(), exec);
  s.head(n_) = xc;
  s.tail(n_) = (xn - xc) / dt_ - 0.5 * dt_ * ax;
  return s;
}

Eigen::VectorXd HumSolver::state_to_control(const Eigen::VectorXd& s, Exec exec) const {
  const double dt2 = dt_ * dt_;
  Eigen::VectorXd z(static_cast<Eigen::Index>(nt_ - 1) * g_);
  std::array<Eigen::VectorXd, 3> buf;
  for (auto& b : buf) b = Eigen::VectorXd::Zero(n_);
  Eigen::VectorXd tmp(n_);
  const Eigen::VectorXd b = s.tail(n_);
  At_.apply(b.data(), tmp.data(), exec);
  // buf[(j) % 3] holds abar[j]
  buf[1] += b / dt_;
  buf[0] += s.head(n_) - b / dt_ - 0.5 * dt_ * tmp;
  for (int j = 1; j <= nt_ - 1; ++j) {
    Eigen::VectorXd& am = buf[(j - 1) % 3];
    Eigen::VectorXd& cur = buf[j % 3];
    Eigen::VectorXd& nxt = buf[(j + 1) % 3];
    At_.apply(am.data(), tmp.data(), exec);
    cur += 2.0 * am + dt2 * tmp;
    nxt -= am;
    Bt_.apply(am.data(), z.data() + static_cast<std::size_t>(j - 1) * g_, exec);
    z.segment(static_cast<Eigen::Index>(j - 1) * g_, g_) *= dt2;
    am.setZero();  // slot is reused for abar[j+2]
  }
  return z;
}

Eigen::VectorXd HumSolver::gram_inverse(const Eigen::VectorXd& z, Exec exec) const {
  const int M = nt_ - 1;
  Eigen::Map<const RowMat> zm(z.data(), M, g_);
  Eigen::MatrixXd y = zm;
  for (int s = 0; s < g_; ++s) y.col(s) /= sqrt_wb_[s];
  Eigen::MatrixXd yh = sine_.transpose() * y;
  const bool par = exec == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
  for (int k = 0; k < M; ++k) {
    Eigen::VectorXd r = yh.row(k).transpose();
    yh.row(k) = gf_->modes[k]->solve(r).transpose();
  }
  y = sine_ * yh;
  for (int s = 0; s < g_; ++s) y.col(s) /= (sqrt_wb_[s] * dt_);
  Eigen::VectorXd out(z.size());
  Eigen::Map<RowMat>(out.data(), M, g_) = y;
  return out;
}

Eigen::VectorXd HumSolver::gram_apply(const Eigen::VectorXd& z) const {
  const int M = nt_ - 1;
  Eigen::Map<const RowMat> zm(z.data(), M, g_);
  Eigen::MatrixXd y = zm;
  for (int s = 0; s < g_; ++s) y.col(s) *= sqrt_wb_[s];
  Eigen::MatrixXd ty(M, g_);
  for (int j = 0; j < M; ++j) {
    ty.row(j) = 2.0 * y.row(j);
    if (j > 0) ty.row(j) -= y.row(j - 1);
    if (j + 1 < M) ty.row(j) -= y.row(j + 1);
  }
  ty /= dt_ * dt_;
  Eigen::MatrixXd out = ty + y * lgamma_;
  for (int s = 0; s < g_; ++s) out.col(s) *= sqrt_wb_[s] * dt_;
  Eigen::VectorXd r(z.size());
  Eigen::Map<RowMat>(r.data(), M, g_) = out;
  return r;
}

double HumSolver::control_norm(const Eigen::VectorXd& z) const { return std::sqrt(std::max(0.0, z.dot(gram_apply(z)))); }

Eigen::VectorXd HumSolver::control_from_state(const Eigen::VectorXd& s, Exec exec) const {
  return gram_inverse(state_to_control(ws_.cwiseProduct(s), exec), exec);
}

Eigen::VectorXd HumSolver::apply_hum_gram(const Eigen::VectorXd& y, Exec exec) const {
  return control_to_state(control_from_state(y, exec), exec);
}

Eigen::VectorXd HumSolver::filter(const Eigen::VectorXd& phi) const {
  if (filter_basis_.size() == 0) return phi;
  Eigen::VectorXd sw = w_.array().sqrt();
  Eigen::VectorXd c = filter_basis_.transpose() * sw.cwiseProduct(phi);
  return (filter_basis_ * c).cwiseQuotient(sw);
}

void HumSolver::factor_gram(Exec exec) {
  if (factored_) return;
  const int m = 2 * n_;
  Eigen::MatrixXd gram(m, m);
  const bool par = exec == Exec::Parallel;
#pragma omp parallel for schedule(dynamic, 4) if (par)
  for (int j = 0; j < m; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(m);
    e[j] = 1.0;
    gram.col(j) = control_to_state(gram_inverse(state_to_control(e, Exec::Serial), Exec::Serial), Exec::Serial);
  }
  Eigen::VectorXd sws = ws_.array().sqrt();
  gram = sws.asDiagonal() * gram * sws.asDiagonal();
  Eigen::MatrixXd sym = 0.5 * (gram + gram.transpose());
  gram.resize(0, 0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw NumericalError("control: HUM Gram eigensolver failed");
  gram_vals_ = es.eigenvalues().cwiseMax(0.0);
  gram_vecs_ = es.eigenvectors();
  lambda_max_ = gram_vals_.maxCoeff() > 0.0 ? gram_vals_.maxCoeff() : 1.0;
  factored_ = true;
}

Eigen::MatrixXd HumSolver::gram_solve(const Eigen::MatrixXd& rhs) const {
  if (!factored_) throw ValidationError("control: gram_solve requires factor_gram()");
  Eigen::VectorXd sws = ws_.array().sqrt();
  Eigen::MatrixXd t = gram_vecs_.transpose() * (sws.asDiagonal() * rhs);
  Eigen::VectorXd inv = (gram_vals_.array() + regularization()).inverse();
  t = inv.asDiagonal() * t;
  return sws.cwiseInverse().asDiagonal() * (gram_vecs_ * t);
}

Eigen::VectorXd HumSolver::regularized_solve(const Eigen::VectorXd& rhs, int* iters, double* res, Exec exec) const {
  if (factored_) {
    if (iters) *iters = 0;
    if (res) *res = 0.0;
    return gram_solve(rhs);
  }
  // CG in the state metric; Lambda + eps is self-adjoint positive there
  auto dot = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.dot(ws_.cwiseProduct(b)); };
  const double eps = regularization();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(rhs.size());
  const double bnorm = std::sqrt(dot(rhs, rhs));
  int it = 0;
  double rel = 0.0;
  if (bnorm > 0.0) {
    Eigen::VectorXd r = rhs, p = rhs;
    double rr = dot(r, r);
    rel = 1.0;
    while (it < prob_.cg_max_iter && rel > prob_.cg_tol) {
      Eigen::VectorXd ap = apply_hum_gram(p, exec) + eps * p;
      double pap = dot(p, ap);
      if (!(pap > 0.0)) break;
      double alpha = rr / pap;
      x += alpha * p;
      r -= alpha * ap;
      double rr_new = dot(r, r);
      ++it;
      rel = std::sqrt(rr_new) / bnorm;
      p = r + (rr_new / rr) * p;
      rr = rr_new;
    }
  }
  if (iters) *iters = it;
  if (res) *res = rel;
  return x;
}

HumResult HumSolver::solve(const ScalarField& phi, Exec exec) const {
  if (phi.size() != grid().size()) throw ValidationError("HUM: target does not match grid");
  double bmax = 0.0, scale = 0.0;
  for (std::size_t node : grid().boundary()) bmax = std::max(bmax, std::abs(phi[node]));
  for (double v : phi.values()) scale = std::max(scale, std::abs(v));
  if (bmax > 1e-12 * std::max(1.0, scale)) throw ValidationError("HUM: target must vanish on the boundary");
  return solve_interior(restrict_interior(grid(), phi), exec);
}

HumResult HumSolver::solve_interior(const Eigen::VectorXd& phi, Exec exec) const {
  HumResult r;
  r.assembled = factored_;
  const double pn = std::sqrt(phi.dot(w_.cwiseProduct(phi)));
  if (pn == 0.0) {
    r.z = Eigen::VectorXd::Zero(n_control());
    r.zeta = to_trace(r.z);
    r.converged = true;
    return r;
  }
  Eigen::VectorXd pf = filter(phi);
  Eigen::VectorXd target = Eigen::VectorXd::Zero(2 * n_);
  target.tail(n_) = pf;
  Eigen::VectorXd y = regularized_solve(target, &r.iterations, &r.residual, exec);
  r.converged = factored_ || r.residual <= prob_.cg_tol;
  r.z = control_from_state(y, exec);
  r.zeta = to_trace(r.z);
  Eigen::VectorXd st = control_to_state(r.z, exec);
  auto wn = [&](const Eigen::VectorXd& v) { return std::sqrt(v.dot(w_.cwiseProduct(v))); };
  r.pos_residual = wn(st.head(n_)) / pn;
  r.vel_residual = wn(st.tail(n_) - phi) / pn;
  r.vel_residual_filtered = wn(st.tail(n_) - pf) / std::max(wn(pf), 1e-300);
  return r;
}

BoundaryTrace HumSolver::to_trace(const Eigen::VectorXd& z) const {
  BoundaryTrace t(dt_, nt_, g_);
  for (int k = 1; k < nt_; ++k)
    for (int s = 0; s < g_; ++s) t.at(k, s) = z[static_cast<Eigen::Index>(k - 1) * g_ + s];
  return t;
}

Eigen::VectorXd HumSolver::from_trace(const BoundaryTrace& t) const {
  if (t.nt != nt_ || t.n_gamma != g_) throw ValidationError("control: trace does not match the control grid");
  Eigen::VectorXd z(n_control());
  for (int k = 1; k < nt_; ++k)
    for (int s = 0; s < g_; ++s) z[static_cast<Eigen::Index>(k - 1) * g_ + s] = t.at(k, s);
  return z;
}

void HumSolver::sweep(const Eigen::VectorXd& z, const LevelFn& fn, Exec exec) const {
  const double dt2 = dt_ * dt_;
  Eigen::VectorXd xn = Eigen::VectorXd::Zero(n_), xc = Eigen::VectorXd::Zero(n_), xp(n_);
  for (int k = nt_; k >= 0; --k) {
    const double* bnd = (k >= 1 && k <= nt_ - 1) ? z.data() + static_cast<std::size_t>(k - 1) * g_ : nullptr;
    kernels::leapfrog_step(exec, A_, bnd ? &B_ : nullptr, xc.data(), bnd, xn.data(), dt2, xp.data());
    fn(k, xp.data(), xc.data(), xn.data());
    std::swap(xn, xc);
    std::swap(xc, xp);
  }
}

BoundaryTrace hum_min_norm_control(const HumSolver& solver, const ScalarField& phi, HumResult* report) {
  HumResult r = solver.solve(phi);
  BoundaryTrace z = r.zeta;
  if (report) *report = std::move(r);
  return z;
}

BoundaryTrace op_C(const HumSolver& solver, const ScalarField& phi) {
  return time_derivative(hum_min_norm_control(solver, phi), EndRule::Odd, EndRule::Odd);
}

WaveTrajectory op_S(const HumSolver& solver, const ScalarField& phi) {
  HumResult r = solver.solve(phi);
  const Grid& grid = solver.grid();
  const int nt = solver.nt();
  const double dt = solver.dt();
  WaveTrajectory tr;
  tr.dt = dt;
  tr.nt = nt;
  tr.u.assign(nt + 1, ScalarField(grid.size()));
  tr.v.assign(nt + 1, ScalarField(grid.size()));
  const auto& in = grid.interior();
  solver.sweep(r.z, [&](int k, const double* prev, const double* cur, const double* next) {
    for (std::size_t s = 0; s < in.size(); ++s) {
      tr.u[k][in[s]] = (next[s] - prev[s]) / (2.0 * dt);
      tr.v[k][in[s]] = (next[s] - 2.0 * cur[s] + prev[s]) / (dt * dt);
    }
  });
  const BoundaryTrace eta = time_derivative(r.zeta, EndRule::Odd, EndRule::Odd);
  const auto& gam = grid.gamma();
  auto zeta_at = [&](int k, int s) {
    if (k < 0) return -r.zeta.at(-k, s);
    if (k > nt) return -r.zeta.at(2 * nt - k, s);
    return r.zeta.at(k, s);
  };
  for (int k = 0; k <= nt; ++k)
    for (std::size_t s = 0; s < gam.size(); ++s) {
      int si = static_cast<int>(s);
      tr.u[k][gam[s]] = eta.at(k, si);
      tr.v[k][gam[s]] = (zeta_at(k + 1, si) - 2.0 * zeta_at(k, si) + zeta_at(k - 1, si)) / (dt * dt);
    }
  return tr;
}

BoundaryTrace time_derivative_transpose(const BoundaryTrace& t, EndRule start, EndRule end) {
  BoundaryTrace out(t.dt, t.nt, t.n_gamma);
  const int nt = t.nt;
  const double dt = t.dt;
  for (int s = 0; s < t.n_gamma; ++s) {
    auto add = [&](int j, double c, int k) { out.at(j, s) += c * t.at(k, s); };
    for (int k = 1; k < nt; ++k) {
      add(k + 1, 0.5 / dt, k);
      add(k - 1, -0.5 / dt, k);
    }
    if (start == EndRule::Odd) {
      add(1, 1.0 / dt, 0);
      add(0, -1.0 / dt, 0);
    } else {
      add(0, -1.5 / dt, 0);
      add(1, 2.0 / dt, 0);
      add(2, -0.5 / dt, 0);
    }
    if (end == EndRule::Odd) {
      add(nt, 1.0 / dt, nt);
      add(nt - 1, -1.0 / dt, nt);
    } else {
      add(nt, 1.5 / dt, nt);
      add(nt - 1, -2.0 / dt, nt);
      add(nt - 2, 0.5 / dt, nt);
    }
  }
  return out;
}

Eigen::VectorXd AssembledOperator::apply_adjoint(const Eigen::VectorXd& y) const {
  return (matrix.transpose() * codomain_gram.cwiseProduct(y)).cwiseQuotient(domain_gram);
}

Eigen::MatrixXd AssembledOperator::adjoint_matrix() const {
  return domain_gram.cwiseInverse().asDiagonal() * matrix.transpose() * codomain_gram.asDiagonal();
}

AssembledOperator AssembledOperator::adjoint() const {
  AssembledOperator a;
  a.matrix = adjoint_matrix();
  a.domain = codomain;
  a.codomain = domain;
  a.domain_gram = codomain_gram;
  a.codomain_gram = domain_gram;
  return a;
}

double AssembledOperator::adjoint_defect(unsigned seed, int trials) const {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    Eigen::VectorXd x(matrix.cols()), y(matrix.rows());
    for (auto& v : x) v = nd(rng);
    for (auto& v : y) v = nd(rng);
    Eigen::VectorXd ax = apply(x), asy = apply_adjoint(y);
    double lhs = ax.dot(codomain_gram.cwiseProduct(y));
    double rhs = x.dot(domain_gram.cwiseProduct(asy));
    double nax = std::sqrt(ax.dot(codomain_gram.cwiseProduct(ax)));
    double ny = std::sqrt(y.dot(codomain_gram.cwiseProduct(y)));
    double scale = nax * ny;
    if (scale > 0.0) worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

Eigen::VectorXd trace_gram(const HumSolver& solver) {
  const int nt = solver.nt(), g = solver.n_gamma();
  Eigen::VectorXd q = solver.time_weights();
  Eigen::VectorXd out(static_cast<Eigen::Index>(nt + 1) * g);
  for (int k = 0; k <= nt; ++k) out.segment(static_cast<Eigen::Index>(k) * g, g) = q[k] * solver.gamma_weights();
  return out;
}

Eigen::VectorXd flatten(const BoundaryTrace& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

ControlAssembly assemble_control(HumSolver& solver, const AssemblyRequest& req, Exec exec) {
  const std::size_t n = static_cast<std::size_t>(solver.n_interior());
  if (n > solver.problem().assembly_cap) {
    std::ostringstream os;
    os << "assembly refused: " << n << " interior nodes exceed the cap of " << solver.problem().assembly_cap
       << "; coarsen the grid or raise assembly_cap";
    throw ValidationError(os.str());
  }
  const int N = solver.n_interior(), G = solver.n_gamma(), nt = solver.nt();
  const Grid& grid = solver.grid();
  for (const FieldSeries* fs : req.reductions)
    if (!fs || static_cast<int>(fs->size()) != nt + 1) throw ValidationError("assembly: reduction weights need nt+1 levels");

  solver.factor_gram(exec);

  // targets (0, P e_j)
  Eigen::MatrixXd targets = Eigen::MatrixXd::Zero(2 * N, N);
  for (int j = 0; j < N; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(N);
    e[j] = 1.0;
    targets.block(N, j, N, 1) = solver.filter(e);
  }
  const Eigen::MatrixXd Y = solver.gram_solve(targets);
  targets.resize(0, 0);

  const Eigen::VectorXd q = solver.time_weights();
  // reduction weights q_k a^k on interior nodes, level-major
  std::vector<Eigen::MatrixXd> rw;
  for (const FieldSeries* fs : req.reductions) {
    Eigen::MatrixXd m(N, nt + 1);
    for (int k = 0; k <= nt; ++k) m.col(k) = q[k] * restrict_interior(grid, (*fs)[k]);
    rw.push_back(std::move(m));
  }

  ControlAssembly out;
  if (req.store_C) {
    out.C.emplace();
    out.C->matrix.resize(static_cast<Eigen::Index>(nt + 1) * G, N);
  }
  if (req.store_S) {
    out.S.emplace();
    out.S->matrix.resize(static_cast<Eigen::Index>(nt + 1) * N, N);
  }
  const bool sink = static_cast<bool>(req.column_sink);
  if (!sink) {
    out.reductions.resize(rw.size());
    for (auto& r : out.reductions) r.matrix.resize(N, N);
  }

  const double dt = solver.dt();
  const bool par = exec == Exec::Parallel;
#pragma omp parallel for schedule(dynamic, 1) if (par)
  for (int j = 0; j < N; ++j) {
    Eigen::VectorXd z = solver.control_from_state(Y.col(j), Exec::Serial);
    if (out.C) {
      BoundaryTrace eta = time_derivative(solver.to_trace(z), EndRule::Odd, EndRule::Odd);
      out.C->matrix.col(j) = flatten(eta);
    }
    std::vector<Eigen::VectorXd> acc(rw.size(), Eigen::VectorXd::Zero(N));
    Eigen::VectorXd psi(N);
    solver.sweep(z, [&](int k, const double* prev, const double* /*cur*/, const double* next) {
      for (int i = 0; i < N; ++i) psi[i] = (next[i] - prev[i]) / (2.0 * dt);
      if (out.S) out.S->matrix.block(static_cast<Eigen::Index>(k) * N, j, N, 1) = psi;
      for (std::size_t r = 0; r < rw.size(); ++r) acc[r] += rw[r].col(k).cwiseProduct(psi);
    });
    if (sink)
      req.column_sink(j, acc);
    else
      for (std::size_t r = 0; r < rw.size(); ++r) out.reductions[r].matrix.col(j) = acc[r];
  }

  const Eigen::VectorXd& w = solver.field_weights();
  if (out.C) {
    out.C->domain = SpaceTag::InteriorField;
    out.C->codomain = SpaceTag::GammaSpaceTime;
    out.C->domain_gram = w;
    out.C->codomain_gram = trace_gram(solver);
  }
  if (out.S) {
    out.S->domain = SpaceTag::InteriorField;
    out.S->codomain = SpaceTag::InteriorSpaceTime;
    out.S->domain_gram = w;
    out.S->codomain_gram.resize(static_cast<Eigen::Index>(nt + 1) * N);
    for (int k = 0; k <= nt; ++k) out.S->codomain_gram.segment(static_cast<Eigen::Index>(k) * N, N) = q[k] * w;
  }
  for (auto& r : out.reductions) {
    r.domain = r.codomain = SpaceTag::InteriorField;
    r.domain_gram = r.codomain_gram = w;
  }
  return out;
}

ControlAssembly assemble_C_and_S(HumSolver& solver, Exec exec) {
  AssemblyRequest req;
  req.store_C = req.store_S = true;
  return assemble_control(solver, req, exec);
}

ScalarField apply_C_star(const HumSolver& solver, const BoundaryTrace& trace) {
  const int N = solver.n_interior();
  Eigen::VectorXd qt = trace_gram(solver).cwiseProduct(flatten(trace));
  BoundaryTrace wt(trace.dt, trace.nt, trace.n_gamma);
  std::copy(qt.data(), qt.data() + qt.size(), wt.data.begin());
  BoundaryTrace dtt = time_derivative_transpose(wt, EndRule::Odd, EndRule::Odd);
  Eigen::VectorXd z = solver.from_trace(dtt);
  Eigen::VectorXd s = solver.control_to_state(solver.gram_inverse(z));
  Eigen::VectorXd y = solver.regularized_solve(s);
  Eigen::VectorXd v = solver.filter(y.tail(N));
  return extend_interior(solver.grid(), v);
}

ScalarField apply_C_star(const AssembledOperator& C, const HumSolver& solver, const BoundaryTrace& trace) {
  return extend_interior(solver.grid(), C.apply_adjoint(flatten(trace)));
}

}  // namespace confwave
