#include "confwave/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "confwave/errors.hpp"

namespace confwave {

const char* to_string(ExitKind k) {
  switch (k) {
    case ExitKind::Outflow: return "outflow";
    case ExitKind::Stalled: return "stalled";
    case ExitKind::LeftDomain: return "left-domain";
  }
  return "?";
}

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

// Bucket grid over flat sample positions for k-nearest queries.
class SampleIndex {
 public:
  SampleIndex(const Grid& grid, const std::vector<Vec3>& pts) : grid_(grid), pts_(pts) {
    for (int a = 0; a < 3; ++a) {
      cell_[a] = a < grid.dim() ? grid.h(a) : 1.0;
      nb_[a] = a < grid.dim() ? grid.count(a) : 1;
    }
    heads_.assign(static_cast<std::size_t>(nb_[0]) * nb_[1] * nb_[2], {});
    for (std::size_t i = 0; i < pts.size(); ++i) heads_[bucket(cell_of(pts[i]))].push_back(i);
  }

  // k nearest samples as (index, distance), sorted by distance
  std::vector<std::pair<std::size_t, double>> nearest(const Vec3& x, int k) const {
    std::vector<std::pair<std::size_t, double>> best;
    const Index3 c = cell_of(x);
    const int maxr = std::max({nb_[0], nb_[1], nb_[2]});
    double hmin = std::min(cell_[0], std::min(cell_[1], grid_.dim() == 3 ? cell_[2] : cell_[1]));
    for (int r = 0; r <= maxr; ++r) {
      visit_shell(c, r, [&](std::size_t b) {
        for (std::size_t i : heads_[b]) {
          Vec3 d{pts_[i][0] - x[0], pts_[i][1] - x[1], pts_[i][2] - x[2]};
          best.emplace_back(i, norm(d));
        }
      });
      if (static_cast<int>(best.size()) >= k) {
        std::partial_sort(best.begin(), best.begin() + k, best.end(),
                          [](const auto& a, const auto& b) { return a.second < b.second || (a.second == b.second && a.first < b.first); });
        best.resize(k);
        // every unvisited sample is at least r * hmin away
        if (best.back().second <= r * hmin) return best;
      }
    }
    std::sort(best.begin(), best.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    if (static_cast<int>(best.size()) > k) best.resize(k);
    return best;
  }

 private:
  Index3 cell_of(const Vec3& x) const {
    Index3 c{0, 0, 0};
    for (int a = 0; a < grid_.dim(); ++a) c[a] = std::clamp(static_cast<int>(std::floor(x[a] / cell_[a] + 0.5)), 0, nb_[a] - 1);
    return c;
  }
  std::size_t bucket(const Index3& c) const { return (static_cast<std::size_t>(c[0]) * nb_[1] + c[1]) * nb_[2] + c[2]; }
  template <class Fn>
  void visit_shell(const Index3& c, int r, Fn fn) const {
    const int rz = grid_.dim() == 3 ? r : 0;
    for (int i = c[0] - r; i <= c[0] + r; ++i) {
      if (i < 0 || i >= nb_[0]) continue;
      for (int j = c[1] - r; j <= c[1] + r; ++j) {
        if (j < 0 || j >= nb_[1]) continue;
        for (int k = c[2] - rz; k <= c[2] + rz; ++k) {
          if (k < 0 || k >= nb_[2]) continue;
          if (std::max({std::abs(i - c[0]), std::abs(j - c[1]), std::abs(k - c[2])}) != r) continue;
          fn(bucket({i, j, k}));
        }
      }
    }
  }

  const Grid& grid_;
  const std::vector<Vec3>& pts_;
  double cell_[3];
  int nb_[3];
  std::vector<std::vector<std::size_t>> heads_;
};

bool inside(const Grid& grid, const Vec3& x, double eps) {
  for (int a = 0; a < grid.dim(); ++a)
    if (x[a] < -eps || x[a] > grid.extent(a) + eps) return false;
  return true;
}

// fraction of the segment x -> y that stays in the box
double exit_fraction(const Grid& grid, const Vec3& x, const Vec3& y) {
  double th = 1.0;
  for (int a = 0; a < grid.dim(); ++a) {
    double d = y[a] - x[a];
    if (y[a] < 0.0 && d < 0.0) th = std::min(th, (0.0 - x[a]) / d);
    if (y[a] > grid.extent(a) && d > 0.0) th = std::min(th, (grid.extent(a) - x[a]) / d);
  }
  return std::clamp(th, 0.0, 1.0);
}

std::size_t nearest_node(const Grid& grid, const Vec3& x) {
  Index3 ijk{0, 0, 0};
  for (int a = 0; a < grid.dim(); ++a)
    ijk[a] = std::clamp(static_cast<int>(std::lround(x[a] / grid.h(a))), 0, grid.count(a) - 1);
  return grid.index(ijk);
}

// Gamma node whose boundary neighbours (diagonals included) all lie in Gamma; exits
// within one node of the edge of Gamma count as outflow
bool leaves_through_gamma(const Grid& grid, std::size_t node) {
  if (!grid.in_gamma(node)) return false;
  const Index3 c = grid.ijk(node);
  const int dz = grid.dim() == 3 ? 1 : 0;
  for (int i = -1; i <= 1; ++i)
    for (int j = -1; j <= 1; ++j)
      for (int k = -dz; k <= dz; ++k) {
        const Index3 n{c[0] + i, c[1] + j, c[2] + k};
        bool inside = true;
        for (int a = 0; a < grid.dim(); ++a) inside = inside && n[a] >= 0 && n[a] < grid.count(a);
        if (!inside) continue;
        const std::size_t m = grid.index(n);
        if (grid.on_boundary(m) && !grid.in_gamma(m)) return false;
      }
  return true;
}

double max_magnitude(const Grid& grid, const VectorField& s) {
  double m = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) m = std::max(m, norm(s.at(i)));
  return m;
}

std::vector<Vec3> flat_samples(const CharacteristicFan& fan, std::vector<std::size_t>* offsets) {
  std::vector<Vec3> pts;
  if (offsets) offsets->clear();
  for (const auto& c : fan.curves) {
    if (offsets) offsets->push_back(pts.size());
    pts.insert(pts.end(), c.points.begin(), c.points.end());
  }
  return pts;
}

void measure_coverage(const Grid& grid, CharacteristicFan& fan) {
  std::vector<Vec3> pts = flat_samples(fan, nullptr);
  fan.max_gap = 0.0;
  fan.uncovered = 0;
  if (pts.empty()) {
    fan.max_gap = std::numeric_limits<double>::infinity();
    fan.uncovered = grid.interior().size();
    return;
  }
  SampleIndex index(grid, pts);
  const double lim = 2.0 * grid.h_min();
  for (std::size_t node : grid.interior()) {
    double d = index.nearest(grid.coords(node), 1).front().second;
    fan.max_gap = std::max(fan.max_gap, d);
    if (d > lim) ++fan.uncovered;
  }
}

}  // namespace

double interpolate(const Grid& grid, const ScalarField& f, const Vec3& x) {
  int base[3] = {0, 0, 0};
  double t[3] = {0.0, 0.0, 0.0};
  for (int a = 0; a < grid.dim(); ++a) {
    double s = std::clamp(x[a], 0.0, grid.extent(a)) / grid.h(a);
    int i = std::min(static_cast<int>(std::floor(s)), grid.count(a) - 2);
    base[a] = i;
    t[a] = s - i;
  }
  double v = 0.0;
  const int nc = grid.dim() == 3 ? 8 : 4;
  for (int c = 0; c < nc; ++c) {
    int o[3] = {c & 1, (c >> 1) & 1, (c >> 2) & 1};
    double wgt = 1.0;
    for (int a = 0; a < grid.dim(); ++a) wgt *= o[a] ? t[a] : 1.0 - t[a];
    if (wgt == 0.0) continue;
    v += wgt * f[grid.index(base[0] + o[0], base[1] + o[1], base[2] + o[2])];
  }
  return v;
}

Vec3 interpolate(const Grid& grid, const VectorField& f, const Vec3& x) {
  Vec3 v{0.0, 0.0, 0.0};
  for (int a = 0; a < f.dim; ++a) v[a] = interpolate(grid, f.comp[a], x);
  return v;
}

Vec3 integrate_characteristic(const std::function<Vec3(const Vec3&)>& field, Vec3 x, double ds, int steps) {
  auto axpy = [](const Vec3& a, double s, const Vec3& b) { return Vec3{a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]}; };
  for (int n = 0; n < steps; ++n) {
    Vec3 k1 = field(x);
    Vec3 k2 = field(axpy(x, 0.5 * ds, k1));
    Vec3 k3 = field(axpy(x, 0.5 * ds, k2));
    Vec3 k4 = field(axpy(x, ds, k3));
    for (int a = 0; a < 3; ++a) x[a] += ds / 6.0 * (k1[a] + 2 * k2[a] + 2 * k3[a] + k4[a]);
  }
  return x;
}

std::vector<Seed> default_seeds(const Grid& grid, const VectorField& sigma0) {
  std::vector<Seed> seeds;
  const auto& gam = grid.gamma();
  std::vector<char> in(gam.size(), 0);
  for (std::size_t s = 0; s < gam.size(); ++s) {
    if (dot(sigma0.at(gam[s]), grid.normal(gam[s])) < 0.0) {
      in[s] = 1;
      seeds.push_back({grid.coords(gam[s]), gam[s]});
    }
  }
  for (const auto& e : grid.gamma_edges()) {
    if (!in[e.a] || !in[e.b]) continue;
    Vec3 xa = grid.coords(gam[e.a]), xb = grid.coords(gam[e.b]);
    seeds.push_back({{0.5 * (xa[0] + xb[0]), 0.5 * (xa[1] + xb[1]), 0.5 * (xa[2] + xb[2])}, gam[e.a]});
  }
  return seeds;
}

CharacteristicFan trace_characteristics(const Grid& grid, const VectorField& sigma0, const std::vector<Seed>& seeds,
                                        Exec exec) {
  CharacteristicFan fan;
  const double smax = max_magnitude(grid, sigma0);
  if (smax == 0.0) throw ValidationError("characteristics: Sigma0 vanishes identically");
  fan.step = grid.h_min() / (2.0 * smax);
  const double cap = 10.0 * grid.diameter();
  const double eps = 1e-9 * grid.h_min();
  const double ds = fan.step;
  fan.curves.resize(seeds.size());
  auto field = [&](const Vec3& x) { return interpolate(grid, sigma0, x); };

#pragma omp parallel for schedule(dynamic, 8) if (exec == Exec::Parallel)
  for (std::ptrdiff_t si = 0; si < static_cast<std::ptrdiff_t>(seeds.size()); ++si) {
    Characteristic& c = fan.curves[si];
    c.seed_node = seeds[si].node;
    Vec3 x = seeds[si].x;
    c.points.push_back(x);
    c.times.push_back(0.0);
    double s = 0.0;
    for (;;) {
      if (norm(field(x)) < 1e-14 * smax) {
        c.exit = ExitKind::Stalled;
        break;
      }
      Vec3 y = integrate_characteristic(field, x, ds, 1);
      if (!inside(grid, y, eps)) {
        double th = exit_fraction(grid, x, y);
        Vec3 e{x[0] + th * (y[0] - x[0]), x[1] + th * (y[1] - x[1]), x[2] + th * (y[2] - x[2])};
        c.length += th * norm(Vec3{y[0] - x[0], y[1] - x[1], y[2] - x[2]});
        c.points.push_back(e);
        c.times.push_back(s + th * ds);
        c.exit = leaves_through_gamma(grid, nearest_node(grid, e)) ? ExitKind::LeftDomain : ExitKind::Outflow;
        break;
      }
      c.length += norm(Vec3{y[0] - x[0], y[1] - x[1], y[2] - x[2]});
      s += ds;
      x = y;
      c.points.push_back(x);
      c.times.push_back(s);
      if (c.length > cap) {
        c.exit = ExitKind::Stalled;
        break;
      }
    }
  }
  for (const auto& c : fan.curves) {
    if (c.exit == ExitKind::Stalled) ++fan.stalled;
    if (c.exit == ExitKind::LeftDomain) ++fan.left_domain;
    if (c.exit == ExitKind::Outflow) fan.max_time = std::max(fan.max_time, c.times.back());
  }
  measure_coverage(grid, fan);
  return fan;
}

std::string FlowReport::summary() const {
  std::ostringstream os;
  os << "inflow " << (inflow_ok ? "ok" : "FAIL") << " (max Sigma0.nu on Gamma " << max_inflow << ", " << inflow_violations
     << " violations, " << tangential << " tangential); outflow " << (outflow_ok ? "ok" : "FAIL") << " (min " << min_outflow << "); magnitude "
     << (magnitude_ok ? "ok" : "FAIL") << " (min " << min_magnitude << " at node " << worst_magnitude_node
     << "); coverage " << (coverage_ok ? "ok" : "FAIL") << " (max gap " << max_gap << "); exit "
     << (exit_ok ? "ok" : "FAIL") << " (max time " << max_time << ")";
  return os.str();
}

FlowReport validate_flow_assumption(const Grid& grid, const VectorField& sigma0, double delta, double tol) {
  FlowReport r;
  r.max_inflow = -std::numeric_limits<double>::infinity();
  r.min_outflow = std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, max_magnitude(grid, sigma0));
  for (std::size_t node : grid.boundary()) {
    double sn = dot(sigma0.at(node), grid.normal(node));
    if (grid.in_gamma(node)) {
      if (!leaves_through_gamma(grid, node)) continue;  // edge of Gamma
      r.max_inflow = std::max(r.max_inflow, sn);
      if (std::abs(sn) <= tol * scale)
        ++r.tangential;
      else if (sn > 0.0)
        ++r.inflow_violations;
    } else {
      r.min_outflow = std::min(r.min_outflow, sn);
    }
  }
  r.inflow_ok = r.inflow_violations == 0;
  r.outflow_ok = !(r.min_outflow < -tol * scale);
  r.min_magnitude = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double m = norm(sigma0.at(i));
    if (m < r.min_magnitude) {
      r.min_magnitude = m;
      r.worst_magnitude_node = i;
    }
  }
  r.magnitude_ok = r.min_magnitude >= delta;
  if (max_magnitude(grid, sigma0) == 0.0) {
    r.coverage_ok = r.exit_ok = false;
    r.max_gap = std::numeric_limits<double>::infinity();
    return r;
  }
  CharacteristicFan fan = trace_characteristics(grid, sigma0, default_seeds(grid, sigma0));
  r.max_gap = fan.max_gap;
  r.coverage_ok = fan.uncovered == 0;
  r.exit_ok = fan.stalled == 0 && fan.left_domain == 0 && !fan.curves.empty();
  r.max_time = fan.max_time;
  return r;
}

FirstOrderSolver::FirstOrderSolver(const Grid& grid, VectorField sigma0, ScalarField s0, Exec exec)
    : grid_(grid), sigma0_(std::move(sigma0)), s0_(std::move(s0)), exec_(exec) {
  fan_ = trace_characteristics(grid_, sigma0_, default_seeds(grid_, sigma0_), exec_);
  if (fan_.uncovered > 0) {
    std::ostringstream os;
    os << "first-order solve: " << fan_.uncovered << " interior nodes are farther than 2h from every characteristic:";
    std::vector<Vec3> pts = flat_samples(fan_, nullptr);
    SampleIndex idx(grid_, pts);
    int listed = 0;
    for (std::size_t node : grid_.interior()) {
      if (idx.nearest(grid_.coords(node), 1).front().second > 2.0 * grid_.h_min()) {
        os << " " << node;
        if (++listed == 10) {
          os << " ...";
          break;
        }
      }
    }
    throw ValidationError(os.str());
  }
  std::vector<Vec3> pts = flat_samples(fan_, &offsets_);
  SampleIndex idx(grid_, pts);
  const int k = grid_.dim() == 3 ? 8 : 4;
  stencil_.assign(grid_.size(), {});
  const double tiny = 1e-10 * grid_.h_min();
  for (std::size_t node = 0; node < grid_.size(); ++node) {
    if (grid_.in_gamma(node)) continue;
    auto nb = idx.nearest(grid_.coords(node), k);
    auto& st = stencil_[node];
    if (nb.front().second < tiny) {
      st.emplace_back(nb.front().first, 1.0);
      continue;
    }
    double sum = 0.0;
    for (const auto& [i, d] : nb) sum += 1.0 / (d * d);
    for (const auto& [i, d] : nb) st.emplace_back(i, 1.0 / (d * d) / sum);
  }
}

ScalarField FirstOrderSolver::solve(const ScalarField& rhs_in, bool extend_rhs) const {
  ScalarField rhs = rhs_in;
  if (extend_rhs) {
    // copy the value of the nearest interior node inward along each boundary axis
    for (std::size_t node : grid_.boundary()) {
      Index3 ijk = grid_.ijk(node);
      for (int a = 0; a < grid_.dim(); ++a) ijk[a] = std::clamp(ijk[a], 1, grid_.count(a) - 2);
      rhs[node] = rhs_in[grid_.index(ijk)];
    }
  }
  std::size_t total = 0;
  for (const auto& c : fan_.curves) total += c.points.size();
  std::vector<double> fs(total, 0.0);
  const double ds = fan_.step;

#pragma omp parallel for schedule(dynamic, 8) if (exec_ == Exec::Parallel)
  for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(fan_.curves.size()); ++ci) {
    const Characteristic& c = fan_.curves[ci];
    const std::size_t off = offsets_[ci];
    Vec3 x = c.points[0];
    double f = 0.0;
    auto g = [&](const Vec3& p, double v) { return interpolate(grid_, rhs, p) - interpolate(grid_, s0_, p) * v; };
    auto sig = [&](const Vec3& p) { return interpolate(grid_, sigma0_, p); };
    auto axpy = [](const Vec3& a, double s, const Vec3& b) { return Vec3{a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]}; };
    fs[off] = 0.0;
    for (std::size_t m = 1; m < c.points.size(); ++m) {
      Vec3 k1 = sig(x);
      double l1 = g(x, f);
      Vec3 x2 = axpy(x, 0.5 * ds, k1);
      Vec3 k2 = sig(x2);
      double l2 = g(x2, f + 0.5 * ds * l1);
      Vec3 x3 = axpy(x, 0.5 * ds, k2);
      Vec3 k3 = sig(x3);
      double l3 = g(x3, f + 0.5 * ds * l2);
      Vec3 x4 = axpy(x, ds, k3);
      Vec3 k4 = sig(x4);
      double l4 = g(x4, f + ds * l3);
      double fn = f + ds / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4);
      for (int a = 0; a < 3; ++a) x[a] += ds / 6.0 * (k1[a] + 2 * k2[a] + 2 * k3[a] + k4[a]);
      double th = (c.times[m] - c.times[m - 1]) / ds;
      fs[off + m] = th >= 1.0 ? fn : f + th * (fn - f);
      f = fn;
    }
  }

  ScalarField out(grid_.size());
  for (std::size_t node = 0; node < grid_.size(); ++node) {
    double v = 0.0;
    for (const auto& [i, w] : stencil_[node]) v += w * fs[i];
    out[node] = v;
  }
  return out;
}

double FirstOrderSolver::residual(const ScalarField& f, const ScalarField& rhs) const {
  VectorField g = gradient(grid_, f);
  double num = 0.0, den = 0.0;
  for (std::size_t node : grid_.interior()) {
    double r = s0_[node] * f[node] - rhs[node];
    for (int a = 0; a < grid_.dim(); ++a) r += sigma0_.comp[a][node] * g.comp[a][node];
    num += grid_.node_weight(node) * r * r;
    den += grid_.node_weight(node) * rhs[node] * rhs[node];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

ScalarField solve_first_order(const Grid& grid, const VectorField& sigma0, const ScalarField& s0, const ScalarField& rhs,
                              double* residual) {
  FirstOrderSolver solver(grid, sigma0, s0);
  ScalarField f = solver.solve(rhs);
  if (residual) *residual = solver.residual(f, rhs);
  return f;
}

HNormSpace::HNormSpace(const Grid& g, VectorField s) : grid(&g), sigma0(std::move(s)), weights(g.size()) {
  for (std::size_t i = 0; i < g.size(); ++i) weights[i] = g.node_weight(i);
}

ScalarField HNormSpace::derivative(const ScalarField& u) const {
  VectorField g = gradient(*grid, u);
  ScalarField d(u.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (int a = 0; a < grid->dim(); ++a) d[i] += sigma0.comp[a][i] * g.comp[a][i];
  return d;
}

double HNormSpace::inner(const ScalarField& u, const ScalarField& v) const {
  ScalarField du = derivative(u), dv = derivative(v);
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += weights[i] * du[i] * dv[i];
  return s;
}

double HNormSpace::l2(const ScalarField& u) const {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += weights[i] * u[i] * u[i];
  return std::sqrt(s);
}

PoincareEstimate poincare_constant(const Grid& grid, const VectorField& sigma0, int probes, unsigned seed) {
  FirstOrderSolver fo(grid, sigma0, ScalarField(grid.size()));
  ScalarField T = fo.solve(ScalarField(grid.size(), 1.0));
  HNormSpace hs(grid, sigma0);
  PoincareEstimate est;
  est.length_bound = fo.fan().max_time;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(-1.0, 1.0);
  for (int p = 0; p < probes; ++p) {
    double a[3][3];
    for (auto& row : a)
      for (double& v : row) v = p == 0 ? 0.0 : ud(rng);
    ScalarField v = sample(grid, [&](const Vec3& x) {
      double r = 0.0;
      for (int q = 0; q < 3; ++q)
        for (int b = 0; b < grid.dim(); ++b) r += a[q][b] * std::cos((q + 1) * std::numbers::pi * x[b] / grid.extent(b));
      return 1.0 + 0.5 * r / 9.0;
    });
    for (std::size_t i = 0; i < grid.size(); ++i) v[i] *= T[i];
    double den = hs.norm(v);
    if (den > 0.0) est.empirical = std::max(est.empirical, hs.l2(v) / den);
    est.probes.push_back(std::move(v));
  }
  return est;
}

FirstOrderSystem assemble_first_order_system(HumSolver& solver, const SourceFactors& factors, const Measurement& meas,
                                             Exec exec) {
  const Grid& grid = solver.grid();
  if (grid.dim() < 3) throw ValidationError("first-order recovery needs n >= 3 (the flow assumption fails in the plane)");
  if (factors.nt != solver.nt() || meas.m.nt != solver.nt() || meas.m.n_gamma != solver.n_gamma())
    throw ValidationError("first-order recovery: time grid mismatch");
  std::vector<FieldSeries> series;
  series.push_back(factors.sigma_dot);
  for (int a = 0; a < grid.dim(); ++a) {
    FieldSeries fs;
    for (const auto& v : factors.Sigma_dot) fs.push_back(v.comp[a]);
    series.push_back(std::move(fs));
  }
  AssemblyRequest req;
  for (const auto& s : series) req.reductions.push_back(&s);
  ControlAssembly as = assemble_control(solver, req, exec);
  FirstOrderSystem sys;
  sys.solver = &solver;
  sys.reductions = std::move(as.reductions);
  sys.rhs = -restrict_interior(grid, apply_C_star(solver, meas.mdot));
  return sys;
}

Eigen::VectorXd apply_compact_part(const FirstOrderSystem& sys, const Eigen::VectorXd& f) {
  const Grid& grid = sys.solver->grid();
  Eigen::VectorXd out = sys.reductions[0].apply_adjoint(f);
  VectorField g = gradient(grid, extend_interior(grid, f));
  for (int a = 0; a < grid.dim(); ++a) out += sys.reductions[1 + a].apply_adjoint(restrict_interior(grid, g.comp[a]));
  return out;
}

namespace {

// Restarted GMRES for (I + B) x = b in the metric diag(w).
Eigen::VectorXd gmres(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& op, const Eigen::VectorXd& b,
                      const Eigen::VectorXd& w, double tol, int max_iter, int restart, int* iters, double* res) {
  const Eigen::VectorXd sw = w.array().sqrt();
  auto A = [&](const Eigen::VectorXd& y) -> Eigen::VectorXd { return sw.cwiseProduct(op(y.cwiseQuotient(sw))); };
  const Eigen::VectorXd bs = sw.cwiseProduct(b);
  const double bn = bs.norm();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
  *iters = 0;
  *res = 0.0;
  if (bn == 0.0) return x;
  while (*iters < max_iter) {
    Eigen::VectorXd r = bs - A(x);
    double beta = r.norm();
    *res = beta / bn;
    if (*res <= tol) break;
    const int m = restart;
    Eigen::MatrixXd V(b.size(), m + 1), H = Eigen::MatrixXd::Zero(m + 1, m);
    Eigen::VectorXd cs(m), sn(m), g = Eigen::VectorXd::Zero(m + 1);
    V.col(0) = r / beta;
    g[0] = beta;
    int j = 0;
    for (; j < m && *iters < max_iter; ++j, ++*iters) {
      Eigen::VectorXd v = A(V.col(j));
      const double v0 = v.norm();
      // modified Gram-Schmidt, twice
      for (int pass = 0; pass < 2; ++pass)
        for (int i = 0; i <= j; ++i) {
          const double hij = V.col(i).dot(v);
          H(i, j) += hij;
          v -= hij * V.col(i);
        }
      H(j + 1, j) = v.norm();
      // Krylov space exhausted: the solution lies in span(V)
      const bool breakdown = H(j + 1, j) <= 1e-13 * v0;
      if (breakdown)
        H(j + 1, j) = 0.0;
      else
        V.col(j + 1) = v / H(j + 1, j);
      for (int i = 0; i < j; ++i) {
        double t = cs[i] * H(i, j) + sn[i] * H(i + 1, j);
        H(i + 1, j) = -sn[i] * H(i, j) + cs[i] * H(i + 1, j);
        H(i, j) = t;
      }
      double d = std::hypot(H(j, j), H(j + 1, j));
      cs[j] = H(j, j) / d;
      sn[j] = H(j + 1, j) / d;
      H(j, j) = d;
      H(j + 1, j) = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      *res = std::abs(g[j + 1]) / bn;
      if (*res <= tol || breakdown) {
        ++j;
        ++*iters;
        break;
      }
    }
    Eigen::VectorXd y = H.topLeftCorner(j, j).triangularView<Eigen::Upper>().solve(g.head(j));
    x += V.leftCols(j) * y;
    *res = (bs - A(x)).norm() / bn;  // true residual, not the rotated estimate
    if (*res <= tol) break;
  }
  return x.cwiseQuotient(sw);
}

}  // namespace

ScalarField solve_recovery_first_order(const FirstOrderSystem& sys, const FirstOrderSolver& transport,
                                       const FirstOrderOptions& opt, FirstOrderReport* report) {
  const Grid& grid = transport.grid();
  const Eigen::VectorXd& w = sys.solver->field_weights();
  auto sinv = [&](const Eigen::VectorXd& r) {
    return restrict_interior(grid, transport.solve(extend_interior(grid, r), true));
  };
  auto wn = [&](const Eigen::VectorXd& v) { return std::sqrt(v.dot(w.cwiseProduct(v))); };
  FirstOrderReport rep;
  const Eigen::VectorXd base = sinv(sys.rhs);
  Eigen::VectorXd f = base;

  bool need_gmres = opt.method == FirstOrderMethod::Gmres;
  if (opt.method != FirstOrderMethod::Gmres) {
    rep.method = "fixed-point";
    double prev = std::numeric_limits<double>::infinity();
    int growth = 0;
    bool diverged = false;
    for (int it = 1; it <= opt.max_iter; ++it) {
      Eigen::VectorXd next = base - sinv(apply_compact_part(sys, f));
      double upd = wn(next - f), fn = wn(next);
      rep.iterations = it;
      if (std::isfinite(prev) && prev > 0.0) rep.spectral_radius = upd / prev;
      rep.update = fn > 0.0 ? upd / fn : upd;
      f = std::move(next);
      if (rep.update <= opt.tol || fn == 0.0) {
        rep.converged = true;
        break;
      }
      growth = upd > prev ? growth + 1 : 0;
      prev = upd;
      if (growth >= 3 || !f.allFinite()) {
        diverged = true;
        break;
      }
    }
    if (!rep.converged) {
      if (opt.method == FirstOrderMethod::FixedPoint) {
        std::ostringstream os;
        os << "first-order recovery: fixed-point iteration " << (diverged ? "diverged" : "did not converge")
           << " (spectral radius estimate " << rep.spectral_radius << ")";
        throw NumericalError(os.str());
      }
      need_gmres = true;
    }
  }
  if (need_gmres) {
    auto op = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(x + sinv(apply_compact_part(sys, x))); };
    int its = 0;
    double res = 0.0;
    f = gmres(op, base, w, opt.tol, std::max(opt.max_iter, 1), opt.gmres_restart, &its, &res);
    rep.method = rep.method.empty() ? "gmres" : rep.method + "->gmres";
    rep.iterations = its;
    rep.update = res;
    rep.converged = res <= opt.tol;
    if (!rep.converged) {
      std::ostringstream os;
      os << "first-order recovery: GMRES stalled at relative residual " << res;
      throw NumericalError(os.str());
    }
  }
  ScalarField out = extend_interior(grid, f);
  ScalarField h = extend_interior(grid, sys.rhs - apply_compact_part(sys, f));
  rep.transport_residual = transport.residual(out, h);
  if (report) *report = rep;
  return out;
}

}  // namespace confwave
