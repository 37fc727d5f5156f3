#include "confwave/gcc.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "confwave/errors.hpp"

namespace confwave {

const char* to_string(RayFate f) { return f == RayFate::Escaped ? "escaped" : "survived"; }

namespace {

double dot(const Vec3& a, const Vec3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }

SymMat axpy(const SymMat& a, double s, const SymMat& b) {
  return {a.xx + s * b.xx, a.yy + s * b.yy, a.zz + s * b.zz,
          a.xy + s * b.xy, a.xz + s * b.xz, a.yz + s * b.yz};
}

// Nodal B = c^2 g^{-1} with multilinear interpolation and its cellwise gradient.
class MetricField {
 public:
  MetricField(const Grid& grid, const CoefficientSet& coeffs) : grid_(grid), B_(grid.size()) {
    for (std::size_t i = 0; i < grid.size(); ++i)
      B_[i] = coeffs.g[i].inverse(grid.dim()).scaled(coeffs.c[i] * coeffs.c[i]);
  }

  // value and derivatives along each axis
  void eval(const Vec3& x, SymMat& B, std::array<SymMat, 3>& dB) const {
    const int dim = grid_.dim();
    Index3 base{0, 0, 0};
    Vec3 t{0, 0, 0};
    for (int a = 0; a < dim; ++a) {
      const double s = std::clamp(x[a], 0.0, grid_.extent(a)) / grid_.h(a);
      int i = std::min(static_cast<int>(std::floor(s)), grid_.count(a) - 2);
      base[a] = std::max(i, 0);
      t[a] = s - base[a];
    }
    B = SymMat{0, 0, 0, 0, 0, 0};
    for (auto& d : dB) d = SymMat{0, 0, 0, 0, 0, 0};
    const int corners = 1 << dim;
    for (int c = 0; c < corners; ++c) {
      Index3 ijk = base;
      double w = 1.0;
      Vec3 dw{1.0, 1.0, 1.0};
      for (int a = 0; a < dim; ++a) {
        const int bit = (c >> a) & 1;
        ijk[a] += bit;
        const double f = bit ? t[a] : 1.0 - t[a];
        const double df = (bit ? 1.0 : -1.0) / grid_.h(a);
        for (int b = 0; b < dim; ++b) dw[b] *= (a == b) ? df : f;
        w *= f;
      }
      const SymMat& Bn = B_[grid_.index(ijk)];
      B = axpy(B, w, Bn);
      for (int a = 0; a < dim; ++a) dB[a] = axpy(dB[a], dw[a], Bn);
    }
    if (dim == 2) B.zz = 1.0;
  }

  SymMat at(const Vec3& x) const {
    SymMat B;
    std::array<SymMat, 3> dB;
    eval(x, B, dB);
    return B;
  }

 private:
  const Grid& grid_;
  std::vector<SymMat> B_;
};

double hamiltonian(const SymMat& B, const Vec3& p) { return 0.5 * dot(p, B.mul(p)); }

Vec3 grad_x_hamiltonian(const std::array<SymMat, 3>& dB, const Vec3& p, int dim) {
  Vec3 g{0, 0, 0};
  for (int a = 0; a < dim; ++a) g[a] = 0.5 * dot(p, dB[a].mul(p));
  return g;
}

Vec3 restrict_dim(Vec3 v, int dim) {
  for (int a = dim; a < 3; ++a) v[a] = 0.0;
  return v;
}

}  // namespace

Vec3 reflect_momentum(const SymMat& B, const Vec3& n, const Vec3& p, int dim) {
  const Vec3 Bn = restrict_dim(B.mul(n), dim);
  const double s = 2.0 * dot(Bn, p) / dot(n, Bn);
  Vec3 r = p;
  for (int a = 0; a < dim; ++a) r[a] -= s * n[a];
  return r;
}

double verify_metric_reflection(const RayEvent& e) {
  const double h_in = hamiltonian(e.B, e.p_in), h_out = hamiltonian(e.B, e.p_out);
  const double energy = std::abs(h_out - h_in) / std::max(h_in, 1e-300);
  // tangential part of the covector is unchanged: p_out - p_in parallel to n
  Vec3 d{e.p_out[0] - e.p_in[0], e.p_out[1] - e.p_in[1], e.p_out[2] - e.p_in[2]};
  const double dn = dot(d, e.normal);
  double tang = 0.0;
  for (int a = 0; a < 3; ++a) tang = std::max(tang, std::abs(d[a] - dn * e.normal[a]));
  const double pn = std::sqrt(dot(e.p_in, e.p_in));
  tang /= std::max(pn, 1e-300);
  // normal velocity flips
  const double vin = dot(e.normal, e.B.mul(e.p_in)), vout = dot(e.normal, e.B.mul(e.p_out));
  const double flip = std::abs(vin + vout) / std::max(std::sqrt(2.0 * h_in * dot(e.normal, e.B.mul(e.normal))), 1e-300);
  return std::max({energy, tang, flip});
}

Ray trace_ray(const Grid& grid, const CoefficientSet& coeffs, const Vec3& x0, const Vec3& direction,
              const RayOptions& opt) {
  const int dim = grid.dim();
  const MetricField metric(grid, coeffs);
  const double dt = opt.dt > 0.0 ? opt.dt : grid.h_min() / (4.0 * coeffs.c_max());
  const double t_max = opt.t_max > 0.0 ? opt.t_max : 10.0 * grid.diameter() / coeffs.c_min();

  Vec3 x = restrict_dim(x0, dim);
  for (int a = 0; a < dim; ++a) {
    if (x[a] < 0.0 || x[a] > grid.extent(a)) throw ValidationError("trace_ray: start point outside the domain");
  }
  Vec3 v = restrict_dim(direction, dim);
  if (dot(v, v) == 0.0) throw ValidationError("trace_ray: zero direction");

  SymMat B;
  std::array<SymMat, 3> dB;
  metric.eval(x, B, dB);
  // unit speed in c^-2 g: v^T B^{-1} v = 1, p = B^{-1} v
  Vec3 p = restrict_dim(B.inverse(dim).mul(v), dim);
  {
    const double s = 1.0 / std::sqrt(dot(p, B.mul(p)));
    for (auto& q : p) q *= s;
  }
  const double H0 = hamiltonian(B, p);

  Ray ray;
  double t = 0.0;
  auto record = [&] {
    if (!opt.record_path) return;
    ray.x.push_back(x);
    ray.p.push_back(p);
    ray.t.push_back(t);
  };
  record();

  const long max_steps = static_cast<long>(std::ceil(t_max / dt)) + 1;
  for (long step = 0; step < max_steps && t < t_max; ++step) {
    // Stormer-Verlet, explicit in the momentum half steps
    metric.eval(x, B, dB);
    Vec3 gx = grad_x_hamiltonian(dB, p, dim);
    Vec3 ph = p;
    for (int a = 0; a < dim; ++a) ph[a] -= 0.5 * dt * gx[a];
    const Vec3 vel = restrict_dim(B.mul(ph), dim);
    Vec3 xn = x;
    for (int a = 0; a < dim; ++a) xn[a] += dt * vel[a];

    // first face crossed within the step
    double theta = 2.0;
    int axis = -1, side = 0;
    for (int a = 0; a < dim; ++a) {
      if (xn[a] < 0.0 && vel[a] < 0.0) {
        const double th = (0.0 - x[a]) / (xn[a] - x[a]);
        if (th < theta) theta = th, axis = a, side = 0;
      } else if (xn[a] > grid.extent(a) && vel[a] > 0.0) {
        const double th = (grid.extent(a) - x[a]) / (xn[a] - x[a]);
        if (th < theta) theta = th, axis = a, side = 1;
      }
    }

    if (axis < 0) {
      for (int a = 0; a < dim; ++a) xn[a] = std::clamp(xn[a], 0.0, grid.extent(a));
      metric.eval(xn, B, dB);
      gx = grad_x_hamiltonian(dB, ph, dim);
      Vec3 pn = ph;
      for (int a = 0; a < dim; ++a) pn[a] -= 0.5 * dt * gx[a];
      const double Hn = hamiltonian(B, pn);
      ray.max_step_drift = std::max(ray.max_step_drift, std::abs(Hn - H0) / H0);
      if (opt.project_energy) {
        const double s = std::sqrt(H0 / Hn);
        for (auto& q : pn) q *= s;
      }
      x = xn;
      p = pn;
      t += dt;
      ray.energy_defect = std::max(ray.energy_defect, std::abs(hamiltonian(B, p) - H0) / H0);
      record();
      continue;
    }

    // move to the boundary point
    theta = std::clamp(theta, 0.0, 1.0);
    for (int a = 0; a < dim; ++a) x[a] = std::clamp(x[a] + theta * dt * vel[a], 0.0, grid.extent(a));
    x[axis] = side ? grid.extent(axis) : 0.0;
    t += theta * dt;
    B = metric.at(x);
    p = ph;
    if (opt.project_energy) {
      const double s = std::sqrt(H0 / hamiltonian(B, p));
      for (auto& q : p) q *= s;
    }

    Vec3 n{0, 0, 0};
    n[axis] = side ? 1.0 : -1.0;
    const double nBp = dot(n, B.mul(p));
    const double cosi = nBp / (std::sqrt(dot(n, B.mul(n))) * std::sqrt(dot(p, B.mul(p))));

    // Gamma membership of the boundary point: nearest node of the face, kept off the
    // face's own rim so that corners shared with another face do not decide
    Index3 ijk{0, 0, 0};
    for (int a = 0; a < dim; ++a)
      ijk[a] = std::clamp(static_cast<int>(std::lround(x[a] / grid.h(a))), 1, grid.count(a) - 2);
    ijk[axis] = side ? grid.count(axis) - 1 : 0;
    const bool on_gamma = grid.in_gamma(grid.index(ijk));

    RayEvent ev;
    ev.t = t;
    ev.x = x;
    ev.normal = n;
    ev.p_in = p;
    ev.B = B;
    ev.cos_incidence = cosi;
    if (on_gamma && std::abs(cosi) >= opt.angle_tol) {
      ev.p_out = p;
      ray.fate = RayFate::Escaped;
      ray.exit_time = t;
      ray.exit_cos = cosi;
      record();
      return ray;
    }
    p = reflect_momentum(B, n, p, dim);
    ev.p_out = p;
    (on_gamma ? ray.grazing : ray.reflections).push_back(ev);
    ray.energy_defect = std::max(ray.energy_defect, std::abs(hamiltonian(B, p) - H0) / H0);
    record();
  }
  ray.fate = RayFate::Survived;
  ray.exit_time = t;
  return ray;
}

std::string GccReport::summary() const {
  std::ostringstream os;
  os << "GCC " << (pass ? "PASS" : "FAIL") << ": " << escaped << "/" << rays << " rays escaped";
  if (survived) os << ", " << survived << " survived to T_max=" << t_max;
  if (grazing_hits) os << ", " << grazing_hits << " grazing Gamma hits (diffractive-suspect)";
  os << "; max escape time " << max_escape << ", tau_est " << tau_est;
  if (!worst.x.empty()) {
    const Vec3& s = worst.x.front();
    os << "; worst ray starts at (" << s[0] << ", " << s[1] << ", " << s[2] << ")";
  }
  return os.str();
}

GccReport estimate_control_time(const Grid& grid, const CoefficientSet& coeffs, const GccOptions& opt, Exec exec) {
  coeffs.validate(grid);
  const int dim = grid.dim();
  if (opt.points_per_axis < 2 || opt.directions < 1) throw ValidationError("gcc: need >= 2 points per axis and >= 1 direction");

  std::vector<Vec3> starts;
  const int m = opt.points_per_axis;
  const int mz = dim == 3 ? m : 1;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < mz; ++k) {
        Vec3 x{grid.extent(0) * i / (m - 1), grid.extent(1) * j / (m - 1), 0.0};
        if (dim == 3) x[2] = grid.extent(2) * k / (m - 1);
        starts.push_back(x);
      }

  std::vector<Vec3> dirs;
  if (dim == 2) {
    for (int k = 0; k < opt.directions; ++k) {
      const double a = 2.0 * std::numbers::pi * (k + opt.direction_offset) / opt.directions;
      dirs.push_back({std::cos(a), std::sin(a), 0.0});
    }
  } else {
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    for (int k = 0; k < opt.directions; ++k) {
      const double z = 1.0 - 2.0 * (k + 0.5) / opt.directions;
      const double r = std::sqrt(1.0 - z * z);
      dirs.push_back({r * std::cos(golden * k), r * std::sin(golden * k), z});
    }
  }

  RayOptions ro = opt.ray;
  if (ro.t_max <= 0.0) ro.t_max = 10.0 * grid.diameter() / coeffs.c_min();
  ro.record_path = false;

  // (start, direction) pairs; on the boundary only strictly inward directions are
  // kept, tangential ones would glide along the face
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < starts.size(); ++i)
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      bool inward = true;
      for (int a = 0; a < dim; ++a) {
        if (starts[i][a] == 0.0 && dirs[d][a] <= 1e-12) inward = false;
        if (starts[i][a] == grid.extent(a) && dirs[d][a] >= -1e-12) inward = false;
      }
      if (inward) pairs.emplace_back(static_cast<int>(i), static_cast<int>(d));
    }

  const long total = static_cast<long>(pairs.size());
  std::vector<RayFate> fate(total);
  std::vector<double> time(total), defect(total);
  std::vector<std::size_t> grazing(total);
#pragma omp parallel for schedule(dynamic, 8) if (exec == Exec::Parallel)
  for (long r = 0; r < total; ++r) {
    const Ray ray = trace_ray(grid, coeffs, starts[pairs[r].first], dirs[pairs[r].second], ro);
    fate[r] = ray.fate;
    time[r] = ray.exit_time;
    defect[r] = ray.energy_defect;
    grazing[r] = ray.grazing.size();
  }

  GccReport rep;
  rep.t_max = ro.t_max;
  rep.rays = total;
  long worst = -1;
  for (long r = 0; r < total; ++r) {
    rep.grazing_hits += grazing[r];
    rep.max_energy_defect = std::max(rep.max_energy_defect, defect[r]);
    if (fate[r] == RayFate::Escaped) {
      ++rep.escaped;
      if (time[r] > rep.max_escape) rep.max_escape = time[r];
      if (rep.survived == 0 && (worst < 0 || time[r] > time[worst])) worst = r;
    } else {
      if (rep.survived == 0) worst = r;
      ++rep.survived;
    }
  }
  rep.pass = rep.survived == 0;
  rep.tau_est = opt.margin * rep.max_escape;
  if (worst >= 0) {
    RayOptions full = ro;
    full.record_path = true;
    rep.worst = trace_ray(grid, coeffs, starts[pairs[worst].first], dirs[pairs[worst].second], full);
  }
  return rep;
}

}  // namespace confwave
