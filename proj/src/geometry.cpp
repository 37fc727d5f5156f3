#include "confwave/geometry.hpp"

#include <cmath>
#include <string>

#include "confwave/errors.hpp"

namespace confwave {

const char* to_string(SpaceTag t) {
  switch (t) {
    case SpaceTag::InteriorField: return "interior-field";
    case SpaceTag::FullField: return "full-field";
    case SpaceTag::GammaTrace: return "gamma-trace";
    case SpaceTag::GammaSpaceTime: return "gamma-space-time";
    case SpaceTag::InteriorSpaceTime: return "interior-space-time";
  }
  return "?";
}

ScalarField metric_density(const Grid& grid, const CoefficientSet& coeffs, bool speed_weighted) {
  const int n = grid.dim();
  ScalarField w(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double d = coeffs.mu[i] * std::sqrt(coeffs.g[i].det(n));
    if (speed_weighted) d *= std::pow(coeffs.c[i], -n);
    w[i] = d;
  }
  return w;
}

ScalarField quadrature_weights(const Grid& grid, const CoefficientSet& coeffs, bool speed_weighted) {
  ScalarField w = metric_density(grid, coeffs, speed_weighted);
  for (std::size_t i = 0; i < grid.size(); ++i) w[i] *= grid.node_weight(i);
  return w;
}

DiscreteOperator assemble_laplace_beltrami(const Grid& grid, const CoefficientSet& coeffs,
                                           bool speed_weighted) {
  coeffs.validate(grid);
  const int n = grid.dim();
  const std::size_t N = grid.size();

  DiscreteOperator op;
  op.speed_weighted = speed_weighted;
  op.density = metric_density(grid, coeffs, speed_weighted);
  op.quad = op.density;
  for (std::size_t i = 0; i < N; ++i) op.quad[i] *= grid.node_weight(i);

  // K = w G^{-1}; with G = c^-2 g this is w c^2 g^{-1}
  std::vector<SymMat> K(N);
  for (std::size_t i = 0; i < N; ++i) {
    double s = op.density[i];
    if (speed_weighted) s *= coeffs.c[i] * coeffs.c[i];
    K[i] = coeffs.g[i].inverse(n).scaled(s);
  }

  std::vector<Triplet> t;
  t.reserve(grid.interior().size() * (n == 2 ? 9 : 19));
  for (std::size_t node : grid.interior()) {
    const int row = static_cast<int>(node);
    const double inv_w = 1.0 / op.density[node];
    for (int a = 0; a < n; ++a) {
      const std::size_t sa = grid.stride(a);
      const double ha2 = grid.h(a) * grid.h(a);
      for (int s = -1; s <= 1; s += 2) {
        std::size_t nb = s > 0 ? node + sa : node - sa;
        double kf = 0.5 * (K[node](a, a) + K[nb](a, a)) / ha2 * inv_w;
        t.push_back({row, static_cast<int>(nb), kf});
        t.push_back({row, row, -kf});
      }
      for (int b = 0; b < n; ++b) {
        if (b == a) continue;
        const std::size_t sb = grid.stride(b);
        const double scale = inv_w / (4.0 * grid.h(a) * grid.h(b));
        for (int s = -1; s <= 1; s += 2) {
          std::size_t j = s > 0 ? node + sa : node - sa;
          double k = s * K[j](a, b) * scale;
          if (k == 0.0) continue;
          t.push_back({row, static_cast<int>(j + sb), k});
          t.push_back({row, static_cast<int>(j - sb), -k});
        }
      }
    }
  }
  op.matrix = Csr::from_triplets(static_cast<int>(N), static_cast<int>(N), std::move(t));
  return op;
}

ScalarField DiscreteOperator::apply(const ScalarField& u, Exec exec) const {
  ScalarField out(u.size());
  matrix.apply(u.data(), out.data(), exec);
  return out;
}

Csr DiscreteOperator::interior_block(const Grid& grid) const {
  std::vector<Triplet> t;
  const auto& in = grid.interior();
  for (std::size_t s = 0; s < in.size(); ++s) {
    std::size_t r = in[s];
    for (auto k = matrix.ptr[r]; k < matrix.ptr[r + 1]; ++k) {
      int col = grid.interior_slot(matrix.idx[k]);
      if (col >= 0) t.push_back({static_cast<int>(s), col, matrix.val[k]});
    }
  }
  return Csr::from_triplets(static_cast<int>(in.size()), static_cast<int>(in.size()), std::move(t));
}

Csr DiscreteOperator::gamma_block(const Grid& grid) const {
  std::vector<Triplet> t;
  const auto& in = grid.interior();
  for (std::size_t s = 0; s < in.size(); ++s) {
    std::size_t r = in[s];
    for (auto k = matrix.ptr[r]; k < matrix.ptr[r + 1]; ++k) {
      int col = grid.gamma_slot(matrix.idx[k]);
      if (col >= 0) t.push_back({static_cast<int>(s), col, matrix.val[k]});
    }
  }
  return Csr::from_triplets(static_cast<int>(in.size()), static_cast<int>(grid.gamma().size()),
                            std::move(t));
}

VectorField gradient(const Grid& grid, const ScalarField& f) {
  const int n = grid.dim();
  VectorField out(n, grid.size());
  for (std::size_t node = 0; node < grid.size(); ++node) {
    Index3 p = grid.ijk(node);
    for (int a = 0; a < n; ++a) {
      const std::size_t s = grid.stride(a);
      const double h = grid.h(a);
      double d;
      if (p[a] == 0)
        d = (-3.0 * f[node] + 4.0 * f[node + s] - f[node + 2 * s]) / (2.0 * h);
      else if (p[a] == grid.count(a) - 1)
        d = (3.0 * f[node] - 4.0 * f[node - s] + f[node - 2 * s]) / (2.0 * h);
      else
        d = (f[node + s] - f[node - s]) / (2.0 * h);
      out.comp[a][node] = d;
    }
  }
  return out;
}

VectorField grad_g(const Grid& grid, const ScalarField& f, const CoefficientSet& coeffs) {
  const int n = grid.dim();
  VectorField e = gradient(grid, f);
  VectorField out(n, grid.size());
  for (std::size_t node = 0; node < grid.size(); ++node) {
    Vec3 v = coeffs.g[node].inverse(n).mul(e.at(node));
    for (int a = 0; a < n; ++a) out.comp[a][node] = v[a];
  }
  return out;
}

double weighted_inner_product(const ScalarField& u, const ScalarField& v, const Grid& grid,
                              const CoefficientSet& coeffs, bool speed_weighted) {
  if (u.size() != grid.size() || v.size() != grid.size())
    throw ValidationError("inner product: field size does not match grid");
  ScalarField w = quadrature_weights(grid, coeffs, speed_weighted);
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) s += u[i] * v[i] * w[i];
  return s;
}

double weighted_norm(const ScalarField& u, const Grid& grid, const CoefficientSet& coeffs,
                     bool speed_weighted) {
  return std::sqrt(weighted_inner_product(u, u, grid, coeffs, speed_weighted));
}

double verify_conformal_identity(const CoefficientSet& coeffs, const Grid& grid, const ScalarField& w) {
  const int n = grid.dim();
  ScalarField lhs = assemble_laplace_beltrami(grid, coeffs, true).apply(w);
  ScalarField ag = assemble_laplace_beltrami(grid, coeffs, false).apply(w);
  ScalarField c2(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) c2[i] = coeffs.c[i] * coeffs.c[i];
  VectorField dc2 = gradient(grid, c2);
  VectorField gw = grad_g(grid, w, coeffs);
  const double factor = 0.5 * (2 - n);
  ScalarField qw = quadrature_weights(grid, coeffs, false);

  double num = 0.0, den = 0.0;
  for (std::size_t node : grid.interior()) {
    double rhs = c2[node] * ag[node];
    if (factor != 0.0) {
      double dot = 0.0;
      for (int a = 0; a < n; ++a) dot += dc2.comp[a][node] * gw.comp[a][node];
      rhs += factor * dot;
    }
    double r = lhs[node] - rhs;
    num += qw[node] * r * r;
    den += qw[node] * lhs[node] * lhs[node];
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

}  // namespace confwave
