#include "confwave/recovery.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SVD>
#include <cmath>
#include <random>
#include <sstream>

#include "confwave/errors.hpp"

namespace confwave {

namespace {

Eigen::SparseMatrix<double> to_eigen(const Csr& a) {
  std::vector<Eigen::Triplet<double>> t;
  t.reserve(a.val.size());
  for (int r = 0; r < a.rows; ++r)
    for (auto k = a.ptr[r]; k < a.ptr[r + 1]; ++k) t.emplace_back(r, a.idx[k], a.val[k]);
  Eigen::SparseMatrix<double> m(a.rows, a.cols);
  m.setFromTriplets(t.begin(), t.end());
  return m;
}

// Solve A_II x = rhs for the plain-g operator; W A_II is symmetric negative definite.
Eigen::VectorXd solve_interior_poisson(const Grid& grid, const CoefficientSet& coeffs, const Eigen::VectorXd& rhs) {
  const DiscreteOperator op = assemble_laplace_beltrami(grid, coeffs, false);
  Eigen::SparseMatrix<double> a = to_eigen(op.interior_block(grid));
  Eigen::VectorXd w = restrict_interior(grid, op.quad);
  Eigen::SparseMatrix<double> k = -(w.asDiagonal() * a);
  Eigen::SparseMatrix<double> ks = 0.5 * (k + Eigen::SparseMatrix<double>(k.transpose()));
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(ks);
  if (ldlt.info() != Eigen::Success) throw NumericalError("illumination: interior operator factorization failed");
  Eigen::VectorXd x = ldlt.solve(-(w.cwiseProduct(rhs)));
  return x;
}

std::string node_label(const Grid& grid, std::size_t node) {
  std::ostringstream os;
  Index3 ijk = grid.ijk(node);
  Vec3 x = grid.coords(node);
  os << "node " << node << " (i=" << ijk[0] << ", j=" << ijk[1];
  if (grid.dim() == 3) os << ", k=" << ijk[2];
  os << "; x=" << x[0] << ", " << x[1];
  if (grid.dim() == 3) os << ", " << x[2];
  os << ")";
  return os.str();
}

double det_small(const Eigen::MatrixXd& m) { return m.fullPivLu().determinant(); }

}  // namespace

double wnorm(const Eigen::VectorXd& v, const Eigen::VectorXd& w) { return std::sqrt(v.dot(w.cwiseProduct(v))); }

double relative_error(const ScalarField& a, const ScalarField& b, const Grid& grid, const Eigen::VectorXd& w) {
  Eigen::VectorXd va = restrict_interior(grid, a), vb = restrict_interior(grid, b);
  double nb = wnorm(vb, w);
  return wnorm(va - vb, w) / (nb > 0.0 ? nb : 1.0);
}

SourceFactors compute_source_factors(const WaveTrajectory& ref, const Grid& grid, const CoefficientSet& coeffs) {
  const DiscreteOperator op = assemble_laplace_beltrami(grid, coeffs, false);
  SourceFactors sf;
  sf.dim = grid.dim();
  sf.dt = ref.dt;
  sf.nt = ref.nt;
  const double fac = (2.0 - grid.dim()) / 2.0;
  sf.sigma.reserve(ref.nt + 1);
  sf.sigma_dot.reserve(ref.nt + 1);
  for (int k = 0; k <= ref.nt; ++k) {
    sf.sigma.push_back(op.apply(ref.u[k]));
    sf.sigma_dot.push_back(op.apply(ref.v[k]));
    if (grid.dim() == 2) {
      sf.Sigma.emplace_back(2, grid.size());
      sf.Sigma_dot.emplace_back(2, grid.size());
      continue;
    }
    VectorField s = grad_g(grid, ref.u[k], coeffs), sd = grad_g(grid, ref.v[k], coeffs);
    for (int a = 0; a < grid.dim(); ++a) {
      s.comp[a] *= fac;
      sd.comp[a] *= fac;
    }
    sf.Sigma.push_back(std::move(s));
    sf.Sigma_dot.push_back(std::move(sd));
  }
  sf.sigma0 = sf.sigma.front();
  sf.Sigma0 = sf.Sigma.front();
  return sf;
}

ScalarField time_integral_P(const FieldSeries& traj, double dt) {
  if (traj.empty()) return {};
  ScalarField out(traj.front().size());
  const std::size_t nt = traj.size() - 1;
  for (std::size_t k = 0; k <= nt; ++k) {
    double q = (k == 0 || k == nt) ? 0.5 * dt : dt;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += q * traj[k][i];
  }
  return out;
}

Illumination illuminate_poisson(const Grid& grid, const CoefficientSet& coeffs, double delta) {
  Eigen::VectorXd rhs = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(grid.interior().size()), delta);
  Illumination il;
  il.kind = "poisson";
  il.delta = delta;
  il.alpha = extend_interior(grid, solve_interior_poisson(grid, coeffs, rhs));
  return il;
}

namespace {

Illumination harmonic_from_boundary(const Grid& grid, const CoefficientSet& coeffs, const ScalarField& b) {
  const DiscreteOperator op = assemble_laplace_beltrami(grid, coeffs, false);
  ScalarField lift = op.apply(b);
  Eigen::VectorXd x = solve_interior_poisson(grid, coeffs, -restrict_interior(grid, lift));
  Illumination il;
  il.kind = "harmonic";
  il.delta = 0.0;
  il.alpha = extend_interior(grid, x);
  for (std::size_t node : grid.boundary()) il.alpha[node] = b[node];
  return il;
}

}  // namespace

Illumination illuminate_harmonic(const Grid& grid, const CoefficientSet& coeffs, double value, int band) {
  ScalarField b(grid.size());
  std::vector<std::size_t> off;
  for (std::size_t node : grid.boundary())
    if (!grid.in_gamma(node)) off.push_back(node);
  const double width = std::max(band, 1) * grid.h_min();
  for (std::size_t node : grid.gamma()) {
    double d = std::numeric_limits<double>::infinity();
    Vec3 x = grid.coords(node);
    for (std::size_t o : off) {
      Vec3 y = grid.coords(o);
      double s = 0.0;
      for (int a = 0; a < grid.dim(); ++a) s += (x[a] - y[a]) * (x[a] - y[a]);
      d = std::min(d, std::sqrt(s));
    }
    double t = std::min(1.0, d / width);
    b[node] = value * t * t * (3.0 - 2.0 * t);
  }
  return harmonic_from_boundary(grid, coeffs, b);
}

Illumination illuminate_harmonic(const Grid& grid, const CoefficientSet& coeffs,
                                 const std::function<double(const Vec3&)>& data) {
  ScalarField b(grid.size());
  for (std::size_t node : grid.gamma()) b[node] = data(grid.coords(node));
  return harmonic_from_boundary(grid, coeffs, b);
}

Illumination illuminate_linear(const Grid& grid, const CoefficientSet& coeffs, int axis, double delta) {
  if (grid.dim() < 3) throw ValidationError("linear illumination needs n >= 3");
  Illumination il = illuminate_poisson(grid, coeffs, delta);
  il.kind = "linear";
  const double s = 2.0 / (2.0 - grid.dim());
  for (std::size_t i = 0; i < grid.size(); ++i) il.alpha[i] += s * grid.coords(i)[axis];
  return il;
}

BoundaryTrace illumination_boundary_data(const Grid& grid, const CoefficientSet& coeffs, const Illumination& illum,
                                         const TimeGrid& tg) {
  double scale = 1.0;
  for (std::size_t i = 0; i < illum.alpha.size(); ++i) scale = std::max(scale, std::abs(illum.alpha[i]));
  const double tol = 1e-12 * scale;
  for (std::size_t node : grid.boundary())
    if (!grid.in_gamma(node) && std::abs(illum.alpha[node]) > tol)
      throw ValidationError("illumination: alpha must vanish on the boundary outside Gamma, violated at " +
                            node_label(grid, node));
  const ScalarField& cref = coeffs.c_ref ? *coeffs.c_ref : coeffs.c;
  BoundaryTrace g(tg.dt, tg.nt, static_cast<int>(grid.gamma().size()));
  const auto& gam = grid.gamma();
  for (int k = 0; k <= tg.nt; ++k) {
    double t = k * tg.dt;
    for (std::size_t s = 0; s < gam.size(); ++s) {
      double c = cref[gam[s]];
      g.at(k, static_cast<int>(s)) = illum.alpha[gam[s]] + (illum.ramp ? 0.5 * t * t * c * c * illum.delta : 0.0);
    }
  }
  return g;
}

Measurement make_measurement(BoundaryTrace m) {
  Measurement out;
  out.mdot = time_derivative(m, EndRule::Odd, EndRule::OneSided);
  out.m = std::move(m);
  return out;
}

BoundaryTrace add_noise(Measurement& meas, double level, unsigned seed) {
  BoundaryTrace noise(meas.m.dt, meas.m.nt, meas.m.n_gamma);
  if (level <= 0.0) return noise;
  double ss = 0.0;
  for (double v : meas.m.data) ss += v * v;
  const double rms = std::sqrt(ss / std::max<std::size_t>(1, meas.m.data.size()));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, level * rms);
  // m(0) = 0 is exact (identical initial data), keep it
  for (int k = 1; k <= noise.nt; ++k)
    for (int s = 0; s < noise.n_gamma; ++s) noise.at(k, s) = nd(rng);
  for (std::size_t i = 0; i < noise.data.size(); ++i) meas.m.data[i] += noise.data[i];
  meas.mdot = time_derivative(meas.m, EndRule::Odd, EndRule::OneSided);
  return noise;
}

TwinData synthesize_measurement(const Grid& grid, const CoefficientSet& coeffs, const Illumination& illum,
                                const ScalarField& beta, const ScalarField& beta_ref, const TimeGrid& tg,
                                double cfl_factor, TraceScheme scheme) {
  if (!coeffs.c_ref) throw ValidationError("measurement: reference speed c~ is not set");
  BoundaryTrace gamma = illumination_boundary_data(grid, coeffs, illum, tg);
  TwinData td;
  td.w = solve_forward(grid, coeffs, SpeedChoice::True, {illum.alpha, beta}, gamma, cfl_factor);
  td.w_ref = solve_forward(grid, coeffs, SpeedChoice::Reference, {illum.alpha, beta_ref}, gamma, cfl_factor);
  td.meas = make_measurement(neumann_trace(td.w, grid, coeffs, scheme) - neumann_trace(td.w_ref, grid, coeffs, scheme));
  return td;
}

RecoverySystem assemble_recovery_operator_2d(const HumSolver& solver, const SourceFactors& factors,
                                             const AssembledOperator& reduction, const Measurement& meas,
                                             double delta_required) {
  const Grid& grid = solver.grid();
  if (grid.dim() != 2) throw ValidationError("recovery: the scalar Fredholm equation needs n = 2");
  if (factors.nt != solver.nt() || std::abs(factors.dt - solver.dt()) > 1e-12 * solver.dt())
    throw ValidationError("recovery: source factors and control problem use different time grids");
  if (meas.m.nt != solver.nt() || meas.m.n_gamma != solver.n_gamma())
    throw ValidationError("recovery: measurement does not match the control time grid or Gamma");
  const int N = solver.n_interior();
  if (reduction.matrix.rows() != N || reduction.matrix.cols() != N)
    throw ValidationError("recovery: reduction operator has the wrong size");

  Eigen::VectorXd s0 = restrict_interior(grid, factors.sigma0);
  Eigen::Index worst = 0;
  double mn = s0.cwiseAbs().minCoeff(&worst);
  if (mn < delta_required) {
    std::ostringstream os;
    os << "illumination inadequate: |sigma0| = " << mn << " < delta = " << delta_required << " at "
       << node_label(grid, grid.interior()[worst]);
    throw ValidationError(os.str());
  }

  const Eigen::VectorXd& w = solver.field_weights();
  RecoverySystem sys;
  sys.n_interior = N;
  sys.blocks = 1;
  sys.delta_min = mn;
  sys.weights = w;
  sys.row_weights = w;
  Eigen::MatrixXd t = reduction.matrix;
  t.diagonal() += s0;
  // Gram adjoint W^{-1} T^T W
  sys.matrix = w.cwiseInverse().asDiagonal() * t.transpose() * w.asDiagonal();
  sys.rhs = -restrict_interior(grid, apply_C_star(solver, meas.mdot));
  return sys;
}

Eigen::VectorXd solve_system(RecoverySystem& sys, const ContrastOptions& opt) {
  const Eigen::Index rows = sys.matrix.rows(), cols = sys.matrix.cols();
  if (sys.rhs.size() != rows || sys.weights.size() != cols || sys.row_weights.size() != rows)
    throw ValidationError("recovery: inconsistent system dimensions");
  Eigen::VectorXd dr = sys.row_weights.array().sqrt(), dc = sys.weights.array().sqrt();
  Eigen::VectorXd rs = dr.cwiseProduct(sys.rhs);
  const double rn = rs.norm();
  SolveReport& rep = sys.report;
  Eigen::VectorXd y;

  if (rn == 0.0) {
    rep.method = "zero-rhs";
    return Eigen::VectorXd::Zero(cols);
  }

  Eigen::MatrixXd ms = dr.asDiagonal() * sys.matrix * dc.cwiseInverse().asDiagonal();
  const bool small = static_cast<std::size_t>(std::max(rows, cols)) <= opt.exact_condition_limit;

  if (opt.noise > 0.0 || (rows != cols && small)) {
    Eigen::BDCSVD<Eigen::MatrixXd> svd(ms, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Eigen::VectorXd& s = svd.singularValues();
    rep.condition = s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
    Eigen::VectorXd b = svd.matrixU().transpose() * rs;
    const double outside = std::sqrt(std::max(0.0, rn * rn - b.squaredNorm()));
    auto solve_alpha = [&](double a) {
      Eigen::VectorXd c(s.size());
      for (Eigen::Index i = 0; i < s.size(); ++i) c[i] = s[i] * b[i] / (s[i] * s[i] + a);
      return c;
    };
    auto discrepancy = [&](double a) {
      double r2 = outside * outside;
      for (Eigen::Index i = 0; i < s.size(); ++i) {
        double f = a / (s[i] * s[i] + a);
        r2 += f * f * b[i] * b[i];
      }
      return std::sqrt(r2);
    };
    double alpha = 0.0;
    if (opt.noise > 0.0) {
      if (rn <= opt.noise) {
        rep.method = "tikhonov(data below noise)";
        rep.regularization = std::numeric_limits<double>::infinity();
        rep.residual = 1.0;
        return Eigen::VectorXd::Zero(cols);
      }
      if (discrepancy(0.0) < opt.noise) {
        double lo = std::log(s[0] * s[0] * 1e-16 + 1e-300), hi = std::log(s[0] * s[0] * 1e4);
        for (int it = 0; it < 200; ++it) {
          double mid = 0.5 * (lo + hi);
          (discrepancy(std::exp(mid)) < opt.noise ? lo : hi) = mid;
        }
        alpha = std::exp(0.5 * (lo + hi));
      }
      rep.method = "tikhonov-discrepancy";
    } else {
      if (rep.condition > opt.max_condition) {
        std::ostringstream os;
        os << "recovery matrix is singular to tolerance (condition estimate " << rep.condition << ")";
        throw NumericalError(os.str());
      }
      rep.method = "least-squares-svd";
    }
    rep.regularization = alpha;
    y = svd.matrixV() * solve_alpha(alpha);
  } else if (rows == cols) {
    if (small) {
      Eigen::BDCSVD<Eigen::MatrixXd> svd(ms);
      const Eigen::VectorXd& s = svd.singularValues();
      rep.condition = s[s.size() - 1] > 0.0 ? s[0] / s[s.size() - 1] : std::numeric_limits<double>::infinity();
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(ms);
    if (!small) {
      double rc = lu.rcond();
      rep.condition = rc > 0.0 ? 1.0 / rc : std::numeric_limits<double>::infinity();
    }
    if (!(rep.condition <= opt.max_condition)) {
      std::ostringstream os;
      os << "recovery matrix is singular to tolerance (condition estimate " << rep.condition << ")";
      throw NumericalError(os.str());
    }
    rep.method = small ? "lu" : "lu(rcond estimate)";
    y = lu.solve(rs);
  } else {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(ms);
    rep.method = "least-squares-qr";
    y = qr.solve(rs);
  }

  rep.residual = (ms * y - rs).norm() / rn;
  if (!y.allFinite()) throw NumericalError("recovery: solution is not finite");
  return dc.cwiseInverse().cwiseProduct(y);
}

ScalarField solve_contrast(RecoverySystem& sys, const Grid& grid, const ContrastOptions& opt) {
  Eigen::VectorXd x = solve_system(sys, opt);
  const Eigen::Index N = sys.n_interior;
  return extend_interior(grid, x.tail(N));
}

ScalarField recover_speed(const ScalarField& c_ref, const ScalarField& f, double c_floor, SolveReport* report) {
  ScalarField c(f.size());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    double c2 = c_ref[i] * c_ref[i] + f[i];
    if (c2 < c_floor * c_floor) {
      c2 = c_floor * c_floor;
      ++clamped;
    }
    c[i] = std::sqrt(c2);
  }
  if (report) {
    report->clamped = clamped > 0;
    report->clamped_nodes = clamped;
  }
  return c;
}

RecoverySystem assemble_multi_illumination(HumSolver& solver, const std::vector<SourceFactors>& factors,
                                           const std::vector<Measurement>& meas, double delta_required, Exec exec) {
  const Grid& grid = solver.grid();
  const int n = grid.dim();
  const int K = static_cast<int>(factors.size());
  if (K != n + 1 || meas.size() != factors.size())
    throw ValidationError("multi-illumination: need n+1 illuminations with one measurement each");
  for (int i = 0; i < K; ++i) {
    if (factors[i].nt != solver.nt() || meas[i].m.nt != solver.nt() || meas[i].m.n_gamma != solver.n_gamma())
      throw ValidationError("multi-illumination: time grid mismatch for illumination " + std::to_string(i));
  }
  const int N = solver.n_interior();
  const int p = n == 2 ? 1 : n + 1;  // unknown components: (grad f, f) or f alone
  const auto& inter = grid.interior();

  // A_ij: component j of (Sigma_i, sigma_i)
  auto entry = [&](const SourceFactors& sf, int j, int k, std::size_t node) {
    if (p == 1 || j == n) return sf.sigma[k][node];
    return sf.Sigma[k].comp[j][node];
  };

  // nodewise zeroth-order condition
  double worst = std::numeric_limits<double>::infinity();
  std::size_t worst_node = 0;
  for (std::size_t node : inter) {
    double v;
    if (p == 1) {
      v = 0.0;
      for (int i = 0; i < K; ++i) v = std::max(v, std::abs(factors[i].sigma0[node]));
    } else {
      Eigen::MatrixXd m0(K, p);
      for (int i = 0; i < K; ++i)
        for (int j = 0; j < p; ++j) m0(i, j) = entry(factors[i], j, 0, node);
      v = std::abs(det_small(m0));
    }
    if (v < worst) {
      worst = v;
      worst_node = node;
    }
  }
  if (worst < delta_required) {
    std::ostringstream os;
    os << "illumination inadequate: |det M0| = " << worst << " < delta = " << delta_required << " at "
       << node_label(grid, worst_node);
    throw ValidationError(os.str());
  }

  // weight series for the reductions P(dA_ij psi)
  std::vector<FieldSeries> series;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < p; ++j) {
      if (p == 1 || j == n) {
        series.push_back(factors[i].sigma_dot);
      } else {
        FieldSeries fs;
        fs.reserve(factors[i].Sigma_dot.size());
        for (const auto& v : factors[i].Sigma_dot) fs.push_back(v.comp[j]);
        series.push_back(std::move(fs));
      }
    }

  RecoverySystem sys;
  sys.n_interior = N;
  sys.blocks = p;
  sys.delta_min = worst;
  const Eigen::VectorXd& w = solver.field_weights();
  sys.weights.resize(static_cast<Eigen::Index>(p) * N);
  for (int j = 0; j < p; ++j) sys.weights.segment(static_cast<Eigen::Index>(j) * N, N) = w;
  sys.row_weights.resize(static_cast<Eigen::Index>(K) * N);
  for (int i = 0; i < K; ++i) sys.row_weights.segment(static_cast<Eigen::Index>(i) * N, N) = w;

  sys.matrix = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(K) * N, static_cast<Eigen::Index>(p) * N);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < p; ++j)
      for (int r = 0; r < N; ++r)
        sys.matrix(static_cast<Eigen::Index>(i) * N + r, static_cast<Eigen::Index>(j) * N + r) =
            entry(factors[i], j, 0, inter[r]);

  AssemblyRequest req;
  for (const auto& s : series) req.reductions.push_back(&s);
  Eigen::MatrixXd& M = sys.matrix;
  req.column_sink = [&](int col, const std::vector<Eigen::VectorXd>& acc) {
    // row col of block (i,j) of the Gram adjoint: R(c', col) w_c' / w_col
    for (int i = 0; i < K; ++i)
      for (int j = 0; j < p; ++j) {
        const Eigen::VectorXd& r = acc[static_cast<std::size_t>(i * p + j)];
        const Eigen::Index row = static_cast<Eigen::Index>(i) * N + col;
        const Eigen::Index c0 = static_cast<Eigen::Index>(j) * N;
        for (int c = 0; c < N; ++c) M(row, c0 + c) += r[c] * w[c] / w[col];
      }
  };
  assemble_control(solver, req, exec);

  sys.rhs.resize(static_cast<Eigen::Index>(K) * N);
  for (int i = 0; i < K; ++i)
    sys.rhs.segment(static_cast<Eigen::Index>(i) * N, N) = -restrict_interior(grid, apply_C_star(solver, meas[i].mdot));
  return sys;
}

ScalarField solve_multi_illumination(RecoverySystem& sys, const Grid& grid, const ContrastOptions& opt) {
  Eigen::VectorXd x = solve_system(sys, opt);
  const Eigen::Index N = sys.n_interior;
  ScalarField f = extend_interior(grid, x.tail(N));
  if (sys.blocks > 1) {
    VectorField gf = gradient(grid, f);
    double num = 0.0, den = 0.0;
    for (int a = 0; a < grid.dim(); ++a) {
      Eigen::VectorXd ga = restrict_interior(grid, gf.comp[a]);
      Eigen::VectorXd ba = x.segment(static_cast<Eigen::Index>(a) * N, N);
      Eigen::VectorXd w = sys.weights.head(N);
      num += (ba - ga).dot(w.cwiseProduct(ba - ga));
      den += ga.dot(w.cwiseProduct(ga));
    }
    sys.report.consistency = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
  }
  return f;
}

}  // namespace confwave
