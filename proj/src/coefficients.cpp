#include "confwave/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "confwave/errors.hpp"

namespace confwave {

ScalarField& ScalarField::operator+=(const ScalarField& o) {
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] += o.v_[i];
  return *this;
}
ScalarField& ScalarField::operator-=(const ScalarField& o) {
  for (std::size_t i = 0; i < v_.size(); ++i) v_[i] -= o.v_[i];
  return *this;
}
ScalarField& ScalarField::operator*=(double s) {
  for (double& x : v_) x *= s;
  return *this;
}
bool ScalarField::all_finite() const {
  return std::all_of(v_.begin(), v_.end(), [](double x) { return std::isfinite(x); });
}
ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
ScalarField operator*(double s, ScalarField a) { return a *= s; }

ScalarField sample(const Grid& grid, const std::function<double(const Vec3&)>& fn) {
  ScalarField f(grid.size());
  for (std::size_t n = 0; n < grid.size(); ++n) f[n] = fn(grid.coords(n));
  return f;
}

Eigen::VectorXd restrict_interior(const Grid& grid, const ScalarField& f) {
  const auto& in = grid.interior();
  Eigen::VectorXd v(in.size());
  for (std::size_t s = 0; s < in.size(); ++s) v[s] = f[in[s]];
  return v;
}

ScalarField extend_interior(const Grid& grid, const Eigen::VectorXd& v) {
  ScalarField f(grid.size());
  const auto& in = grid.interior();
  for (std::size_t s = 0; s < in.size(); ++s) f[in[s]] = v[s];
  return f;
}

double SymMat::operator()(int i, int j) const {
  if (i > j) std::swap(i, j);
  if (i == j) return i == 0 ? xx : (i == 1 ? yy : zz);
  if (i == 0) return j == 1 ? xy : xz;
  return yz;
}

double SymMat::det(int dim) const {
  if (dim == 2) return xx * yy - xy * xy;
  return xx * (yy * zz - yz * yz) - xy * (xy * zz - yz * xz) + xz * (xy * yz - yy * xz);
}

SymMat SymMat::inverse(int dim) const {
  double d = det(dim);
  if (dim == 2) return {yy / d, xx / d, 1.0, -xy / d, 0.0, 0.0};
  SymMat r;
  r.xx = (yy * zz - yz * yz) / d;
  r.yy = (xx * zz - xz * xz) / d;
  r.zz = (xx * yy - xy * xy) / d;
  r.xy = (xz * yz - xy * zz) / d;
  r.xz = (xy * yz - xz * yy) / d;
  r.yz = (xy * xz - xx * yz) / d;
  return r;
}

namespace {
// eigenvalues ascending, closed form
std::array<double, 3> eigenvalues(const SymMat& m, int dim) {
  if (dim == 2) {
    double tr = m.xx + m.yy, df = m.xx - m.yy;
    double r = std::sqrt(0.25 * df * df + m.xy * m.xy);
    return {0.5 * tr - r, 0.5 * tr + r, 0.0};
  }
  double p1 = m.xy * m.xy + m.xz * m.xz + m.yz * m.yz;
  if (p1 == 0.0) {
    std::array<double, 3> e{m.xx, m.yy, m.zz};
    std::sort(e.begin(), e.end());
    return e;
  }
  double q = (m.xx + m.yy + m.zz) / 3.0;
  double p2 = (m.xx - q) * (m.xx - q) + (m.yy - q) * (m.yy - q) + (m.zz - q) * (m.zz - q) + 2.0 * p1;
  double p = std::sqrt(p2 / 6.0);
  SymMat b{(m.xx - q) / p, (m.yy - q) / p, (m.zz - q) / p, m.xy / p, m.xz / p, m.yz / p};
  double r = std::clamp(b.det(3) / 2.0, -1.0, 1.0);
  double phi = std::acos(r) / 3.0;
  double e1 = q + 2.0 * p * std::cos(phi);
  double e3 = q + 2.0 * p * std::cos(phi + 2.0 * std::numbers::pi / 3.0);
  double e2 = 3.0 * q - e1 - e3;
  return {e3, e2, e1};
}
}  // namespace

double SymMat::min_eigenvalue(int dim) const { return eigenvalues(*this, dim)[0]; }
double SymMat::max_eigenvalue(int dim) const { return eigenvalues(*this, dim)[dim - 1]; }

Vec3 SymMat::mul(const Vec3& v) const {
  return {xx * v[0] + xy * v[1] + xz * v[2], xy * v[0] + yy * v[1] + yz * v[2],
          xz * v[0] + yz * v[1] + zz * v[2]};
}

CoefficientSet::CoefficientSet(const Grid& grid)
    : g(grid.size(), SymMat::identity()), mu(grid.size(), 1.0), c(grid.size(), 1.0) {}

void CoefficientSet::validate(const Grid& grid, double eps_spd) const {
  const std::size_t n = grid.size();
  if (g.size() != n || mu.size() != n || c.size() != n || (c_ref && c_ref->size() != n))
    throw ValidationError("coefficients: size does not match grid");
  for (std::size_t i = 0; i < n; ++i) {
    double lmin = g[i].min_eigenvalue(grid.dim());
    if (!(lmin >= eps_spd))
      throw ValidationError("coefficients: metric not SPD at node " + std::to_string(i) +
                            " (min eigenvalue " + std::to_string(lmin) + ")");
    if (!(mu[i] > 0.0) || !std::isfinite(mu[i]))
      throw ValidationError("coefficients: mu not positive at node " + std::to_string(i));
    if (!(c[i] > 0.0) || !std::isfinite(c[i]))
      throw ValidationError("coefficients: c not positive at node " + std::to_string(i));
    if (c_ref && (!((*c_ref)[i] > 0.0) || !std::isfinite((*c_ref)[i])))
      throw ValidationError("coefficients: reference speed not positive at node " + std::to_string(i));
  }
}

CoefficientSet CoefficientSet::with_speed(const ScalarField& speed) const {
  CoefficientSet out = *this;
  out.c = speed;
  return out;
}

CoefficientSet CoefficientSet::reference() const {
  if (!c_ref) throw ValidationError("coefficients: no reference speed set");
  return with_speed(*c_ref);
}

double CoefficientSet::c_min() const {
  double m = *std::min_element(c.values().begin(), c.values().end());
  if (c_ref) m = std::min(m, *std::min_element(c_ref->values().begin(), c_ref->values().end()));
  return m;
}

double CoefficientSet::c_max() const {
  double m = *std::max_element(c.values().begin(), c.values().end());
  if (c_ref) m = std::max(m, *std::max_element(c_ref->values().begin(), c_ref->values().end()));
  return m;
}

double CoefficientSet::max_ginv_eigenvalue(int dim) const {
  double m = 0.0;
  for (const SymMat& s : g) m = std::max(m, 1.0 / s.min_eigenvalue(dim));
  return m;
}

}  // namespace confwave
