#pragma once

#include <cmath>
#include <numbers>
#include <random>

#include "confwave/coefficients.hpp"
#include "confwave/geometry.hpp"
#include "confwave/grid.hpp"

namespace testsupport {

using namespace confwave;
inline constexpr double pi = std::numbers::pi;

// random combination of low sine modes: smooth and zero on the boundary of the unit box
inline ScalarField random_dirichlet_field(const Grid& grid, unsigned seed, int modes = 4) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int n3 = grid.dim() == 3 ? modes : 1;
  std::vector<double> a(modes * modes * n3);
  for (double& v : a) v = nd(rng);
  return sample(grid, [&](const Vec3& x) {
    double s = 0.0;
    int m = 0;
    for (int p = 1; p <= modes; ++p)
      for (int q = 1; q <= modes; ++q)
        for (int r = 1; r <= n3; ++r) {
          double term = std::sin(p * pi * x[0] / grid.extent(0)) * std::sin(q * pi * x[1] / grid.extent(1));
          if (grid.dim() == 3) term *= std::sin(r * pi * x[2] / grid.extent(2));
          s += a[m++] * term / (p * p + q * q + r * r);
        }
    return s;
  });
}

inline ScalarField random_nodal_field(const Grid& grid, unsigned seed, bool zero_boundary) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  ScalarField f(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) f[i] = (zero_boundary && grid.on_boundary(i)) ? 0.0 : nd(rng);
  return f;
}

inline double max_interior_abs(const Grid& grid, const ScalarField& f) {
  double m = 0.0;
  for (std::size_t n : grid.interior()) m = std::max(m, std::abs(f[n]));
  return m;
}

}  // namespace testsupport

namespace testsupport {

// c~ = 1 and c = 1 + amp * Gaussian bump centered at (0.5, 0.45)
inline CoefficientSet bump_coefficients(const Grid& grid, double amp, double width = 0.12) {
  CoefficientSet cs(grid);
  cs.c_ref = ScalarField(grid.size(), 1.0);
  cs.c = sample(grid, [&](const Vec3& x) {
    double r2 = (x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.45) * (x[1] - 0.45);
    if (grid.dim() == 3) r2 += (x[2] - 0.5) * (x[2] - 0.5);
    return 1.0 + amp * std::exp(-r2 / (2 * width * width));
  });
  return cs;
}

inline ScalarField true_contrast(const CoefficientSet& cs) {
  ScalarField f(cs.c.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = cs.c[i] * cs.c[i] - (*cs.c_ref)[i] * (*cs.c_ref)[i];
  return f;
}

}  // namespace testsupport
