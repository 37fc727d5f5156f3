#include "confwave/wave.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "confwave/errors.hpp"

namespace confwave {

double BoundaryTrace::max_abs() const {
  double m = 0.0;
  for (double x : data) m = std::max(m, std::abs(x));
  return m;
}

BoundaryTrace operator-(const BoundaryTrace& a, const BoundaryTrace& b) {
  if (a.nt != b.nt || a.n_gamma != b.n_gamma) throw ValidationError("trace: mismatched time grids");
  BoundaryTrace r = a;
  for (std::size_t i = 0; i < r.data.size(); ++i) r.data[i] -= b.data[i];
  return r;
}

double cfl_time_step(const Grid& grid, const CoefficientSet& coeffs, double cfl_factor) {
  return cfl_factor * grid.h_min() /
         (coeffs.c_max() * std::sqrt(coeffs.max_ginv_eigenvalue(grid.dim())) * std::sqrt(grid.dim()));
}

TimeGrid make_time_grid(const Grid& grid, const CoefficientSet& coeffs, double tau, double cfl_factor) {
  if (!(tau > 0.0)) throw ValidationError("time grid: tau must be positive");
  double dmax = cfl_time_step(grid, coeffs, cfl_factor);
  int nt = std::max(2, static_cast<int>(std::ceil(tau / dmax - 1e-12)));
  return {tau / nt, nt};
}

namespace {

void check_cfl(const Grid& grid, const CoefficientSet& coeffs, double dt, double cfl_factor) {
  double dmax = cfl_time_step(grid, coeffs, cfl_factor);
  if (dt > dmax * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "CFL violated: dt = " << dt << " exceeds admissible " << dmax;
    throw ValidationError(os.str());
  }
}

void set_boundary(const Grid& grid, const BoundaryTrace& tr, int k, ScalarField& u) {
  for (std::size_t node : grid.boundary()) u[node] = 0.0;
  const auto& gam = grid.gamma();
  for (std::size_t s = 0; s < gam.size(); ++s) u[gam[s]] = tr.at(k, static_cast<int>(s));
}

// boundary ghost values, quadratic extrapolation
void set_boundary_ghost(const Grid& grid, const BoundaryTrace& tr, bool start, ScalarField& u) {
  for (std::size_t node : grid.boundary()) u[node] = 0.0;
  const auto& gam = grid.gamma();
  for (std::size_t s = 0; s < gam.size(); ++s) {
    int si = static_cast<int>(s);
    double v = start ? 3.0 * tr.at(0, si) - 3.0 * tr.at(1, si) + tr.at(2, si)
                     : 3.0 * tr.at(tr.nt, si) - 3.0 * tr.at(tr.nt - 1, si) + tr.at(tr.nt - 2, si);
    u[gam[s]] = v;
  }
}

ScalarField centered(const ScalarField& next, const ScalarField& prev, double dt) {
  ScalarField v(next.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = (next[i] - prev[i]) / (2.0 * dt);
  return v;
}

}  // namespace

WaveTrajectory solve_forward(const Grid& grid, const CoefficientSet& coeffs, SpeedChoice speed,
                             const CauchyData& init, const BoundaryTrace& dirichlet, double cfl_factor) {
  const CoefficientSet cs = speed == SpeedChoice::True ? coeffs : coeffs.reference();
  if (dirichlet.n_gamma != static_cast<int>(grid.gamma().size()))
    throw ValidationError("forward: Dirichlet trace does not match Gamma");
  if (dirichlet.nt < 2) throw ValidationError("forward: need at least 2 time steps");
  if (init.position.size() != grid.size() || init.velocity.size() != grid.size())
    throw ValidationError("forward: Cauchy data does not match grid");
  check_cfl(grid, coeffs, dirichlet.dt, cfl_factor);

  // position must agree with the boundary data at t = 0
  {
    ScalarField b(grid.size());
    set_boundary(grid, dirichlet, 0, b);
    double scale = 1.0, worst = 0.0;
    for (std::size_t node : grid.boundary()) {
      scale = std::max(scale, std::abs(b[node]));
      worst = std::max(worst, std::abs(b[node] - init.position[node]));
    }
    if (worst > 1e-9 * scale)
      throw ValidationError("forward: initial position does not match boundary data");
  }

  const DiscreteOperator op = assemble_laplace_beltrami(grid, cs, true);
  const double dt = dirichlet.dt, dt2 = dt * dt;
  const int nt = dirichlet.nt;

  FieldSeries u(nt + 3, ScalarField(grid.size()));  // index k+1 holds level k
  u[1] = init.position;
  set_boundary(grid, dirichlet, 0, u[1]);
  ScalarField a0 = op.apply(u[1]);
  for (std::size_t node : grid.interior()) {
    double base = u[1][node] + 0.5 * dt2 * a0[node];
    u[2][node] = base + dt * init.velocity[node];
    u[0][node] = base - dt * init.velocity[node];
  }
  set_boundary(grid, dirichlet, 1, u[2]);
  set_boundary_ghost(grid, dirichlet, true, u[0]);

  ScalarField au(grid.size());
  for (int k = 1; k <= nt; ++k) {
    ScalarField& cur = u[k + 1];
    ScalarField& next = u[k + 2];
    op.matrix.apply(cur.data(), au.data());
    for (std::size_t node : grid.interior()) next[node] = 2.0 * cur[node] - u[k][node] + dt2 * au[node];
    if (k < nt)
      set_boundary(grid, dirichlet, k + 1, next);
    else
      set_boundary_ghost(grid, dirichlet, false, next);
  }

  WaveTrajectory tr;
  tr.dt = dt;
  tr.nt = nt;
  tr.u.reserve(nt + 1);
  tr.v.reserve(nt + 1);
  for (int k = 0; k <= nt; ++k) {
    tr.u.push_back(u[k + 1]);
    tr.v.push_back(centered(u[k + 2], u[k], dt));
  }
  // exact initial velocity on the interior (the ghost construction gives it up to rounding)
  for (std::size_t node : grid.interior()) tr.v[0][node] = init.velocity[node];
  return tr;
}

WaveTrajectory solve_time_reversed(const Grid& grid, const CoefficientSet& coeffs, const BoundaryTrace& zeta,
                                   double cfl_factor) {
  if (zeta.n_gamma != static_cast<int>(grid.gamma().size()))
    throw ValidationError("time-reversed: control does not match Gamma");
  if (zeta.nt < 2) throw ValidationError("time-reversed: need at least 2 time steps");
  double scale = std::max(1.0, zeta.max_abs());
  for (int s = 0; s < zeta.n_gamma; ++s)
    if (std::abs(zeta.at(0, s)) > 1e-14 * scale || std::abs(zeta.at(zeta.nt, s)) > 1e-14 * scale)
      throw ValidationError("time-reversed: control must vanish at t = 0 and t = tau");
  check_cfl(grid, coeffs, zeta.dt, cfl_factor);

  const DiscreteOperator op = assemble_laplace_beltrami(grid, coeffs, true);
  const double dt = zeta.dt, dt2 = dt * dt;
  const int nt = zeta.nt;
  const auto& gam = grid.gamma();

  FieldSeries x(nt + 3, ScalarField(grid.size()));  // index k+1 holds level k
  // levels nt+1 (ghost) and nt: zero interior; boundary ghost is the odd extension
  for (std::size_t s = 0; s < gam.size(); ++s) x[nt + 2][gam[s]] = -zeta.at(nt - 1, static_cast<int>(s));
  ScalarField ax(grid.size());
  for (int k = nt; k >= 0; --k) {
    // fill level k-1 from k, k+1
    ScalarField& cur = x[k + 1];
    ScalarField& prev = x[k];
    for (std::size_t s = 0; s < gam.size(); ++s) cur[gam[s]] = zeta.at(k, static_cast<int>(s));
    op.matrix.apply(cur.data(), ax.data());
    const ScalarField& later = x[k + 2];
    if (k == nt) {
      // Taylor closure with zero data at tau: level nt-1 interior = 1/2 dt^2 A xi^nt
      for (std::size_t node : grid.interior()) prev[node] = 0.5 * dt2 * ax[node];
    } else {
      for (std::size_t node : grid.interior()) prev[node] = 2.0 * cur[node] - later[node] + dt2 * ax[node];
    }
  }
  for (std::size_t s = 0; s < gam.size(); ++s) x[0][gam[s]] = -zeta.at(1, static_cast<int>(s));

  WaveTrajectory tr;
  tr.dt = dt;
  tr.nt = nt;
  for (int k = 0; k <= nt; ++k) {
    tr.u.push_back(x[k + 1]);
    tr.v.push_back(centered(x[k + 2], x[k], dt));
  }
  return tr;
}

Csr neumann_trace_operator(const Grid& grid, const CoefficientSet& coeffs, TraceScheme scheme) {
  const auto& gam = grid.gamma();
  std::vector<Triplet> t;
  if (scheme == TraceScheme::ConservativeFlux) {
    const DiscreteOperator op = assemble_laplace_beltrami(grid, coeffs, true);
    const Csr at = op.matrix.transpose();  // column b of A -> row b of A^T
    for (std::size_t s = 0; s < gam.size(); ++s) {
      const std::size_t b = gam[s];
      const double scale = 1.0 / (op.density[b] * grid.surface_weight(b));
      double diag = 0.0;
      for (auto k = at.ptr[b]; k < at.ptr[b + 1]; ++k) {
        const std::size_t i = at.idx[k];
        if (grid.on_boundary(i)) continue;
        double w = op.quad[i] * at.val[k] * scale;
        diag += w;
        t.push_back({static_cast<int>(s), static_cast<int>(i), -w});
      }
      t.push_back({static_cast<int>(s), static_cast<int>(b), diag});
    }
  } else {
    const int n = grid.dim();
    for (std::size_t s = 0; s < gam.size(); ++s) {
      const std::size_t b = gam[s];
      const Index3 p = grid.ijk(b);
      const Vec3 nu = grid.normal(b);
      const SymMat B = coeffs.g[b].inverse(n).scaled(coeffs.c[b] * coeffs.c[b]);
      const Vec3 coef = B.mul(nu);  // lambda = sum_d coef_d du/dx_d
      for (int d = 0; d < n; ++d) {
        if (coef[d] == 0.0) continue;
        const std::size_t st = grid.stride(d);
        const double h = grid.h(d);
        const int row = static_cast<int>(s);
        if (p[d] == 0) {
          t.push_back({row, static_cast<int>(b), -3.0 * coef[d] / (2 * h)});
          t.push_back({row, static_cast<int>(b + st), 4.0 * coef[d] / (2 * h)});
          t.push_back({row, static_cast<int>(b + 2 * st), -coef[d] / (2 * h)});
        } else if (p[d] == grid.count(d) - 1) {
          t.push_back({row, static_cast<int>(b), 3.0 * coef[d] / (2 * h)});
          t.push_back({row, static_cast<int>(b - st), -4.0 * coef[d] / (2 * h)});
          t.push_back({row, static_cast<int>(b - 2 * st), coef[d] / (2 * h)});
        } else {
          t.push_back({row, static_cast<int>(b + st), coef[d] / (2 * h)});
          t.push_back({row, static_cast<int>(b - st), -coef[d] / (2 * h)});
        }
      }
    }
  }
  return Csr::from_triplets(static_cast<int>(gam.size()), static_cast<int>(grid.size()), std::move(t));
}

BoundaryTrace neumann_trace(const WaveTrajectory& traj, const Grid& grid, const CoefficientSet& coeffs,
                            TraceScheme scheme) {
  const Csr T = neumann_trace_operator(grid, coeffs, scheme);
  BoundaryTrace out(traj.dt, traj.nt, static_cast<int>(grid.gamma().size()));
  for (int k = 0; k <= traj.nt; ++k) T.apply(traj.u[k].data(), out.level(k));
  return out;
}

BoundaryTrace time_derivative(const BoundaryTrace& tr, EndRule start, EndRule end) {
  if (tr.nt < 2) throw ValidationError("time derivative: need nt >= 2");
  BoundaryTrace d(tr.dt, tr.nt, tr.n_gamma);
  const double dt = tr.dt;
  const int nt = tr.nt;
  for (int s = 0; s < tr.n_gamma; ++s) {
    for (int k = 1; k < nt; ++k) d.at(k, s) = (tr.at(k + 1, s) - tr.at(k - 1, s)) / (2.0 * dt);
    d.at(0, s) = start == EndRule::Odd ? (tr.at(1, s) - tr.at(0, s)) / dt
                                       : (-3.0 * tr.at(0, s) + 4.0 * tr.at(1, s) - tr.at(2, s)) / (2.0 * dt);
    d.at(nt, s) = end == EndRule::Odd
                      ? (tr.at(nt, s) - tr.at(nt - 1, s)) / dt
                      : (3.0 * tr.at(nt, s) - 4.0 * tr.at(nt - 1, s) + tr.at(nt - 2, s)) / (2.0 * dt);
  }
  return d;
}

BoundaryTrace time_antiderivative(const BoundaryTrace& tr) {
  BoundaryTrace a(tr.dt, tr.nt, tr.n_gamma);
  for (int s = 0; s < tr.n_gamma; ++s)
    for (int k = 1; k <= tr.nt; ++k) a.at(k, s) = a.at(k - 1, s) + 0.5 * tr.dt * (tr.at(k - 1, s) + tr.at(k, s));
  return a;
}

std::vector<double> staggered_energy(const WaveTrajectory& traj, const DiscreteOperator& op, const Grid& grid) {
  std::vector<double> e;
  ScalarField au(grid.size());
  for (int k = 0; k < traj.nt; ++k) {
    op.matrix.apply(traj.u[k + 1].data(), au.data());
    double kin = 0.0, pot = 0.0;
    for (std::size_t node : grid.interior()) {
      double v = (traj.u[k + 1][node] - traj.u[k][node]) / traj.dt;
      kin += op.quad[node] * v * v;
      pot -= op.quad[node] * au[node] * traj.u[k][node];
    }
    e.push_back(0.5 * (kin + pot));
  }
  return e;
}

std::vector<double> centered_energy(const WaveTrajectory& traj, const DiscreteOperator& op, const Grid& grid) {
  std::vector<double> e;
  ScalarField au(grid.size());
  for (int k = 0; k <= traj.nt; ++k) {
    op.matrix.apply(traj.u[k].data(), au.data());
    double kin = 0.0, pot = 0.0;
    for (std::size_t node : grid.interior()) {
      kin += op.quad[node] * traj.v[k][node] * traj.v[k][node];
      pot -= op.quad[node] * au[node] * traj.u[k][node];
    }
    e.push_back(0.5 * (kin + pot));
  }
  return e;
}

Eigen::VectorXd trace_weights(const Grid& grid, const CoefficientSet& coeffs) {
  ScalarField dens = metric_density(grid, coeffs, true);
  const auto& gam = grid.gamma();
  Eigen::VectorXd w(gam.size());
  for (std::size_t s = 0; s < gam.size(); ++s) w[s] = dens[gam[s]] * grid.surface_weight(gam[s]);
  return w;
}

double trace_inner_product(const BoundaryTrace& a, const BoundaryTrace& b, const Eigen::VectorXd& w) {
  if (a.nt != b.nt || a.n_gamma != b.n_gamma) throw ValidationError("trace inner product: mismatched traces");
  double total = 0.0;
  for (int k = 0; k <= a.nt; ++k) {
    double q = (k == 0 || k == a.nt) ? 0.5 * a.dt : a.dt;
    double s = 0.0;
    for (int j = 0; j < a.n_gamma; ++j) s += w[j] * a.at(k, j) * b.at(k, j);
    total += q * s;
  }
  return total;
}

}  // namespace confwave
