#pragma once

#include <optional>
#include <vector>

#include "confwave/fields.hpp"
#include "confwave/grid.hpp"

namespace confwave {

// Symmetric 3x3 (2x2 uses xx, yy, xy). Components xx, yy, zz, xy, xz, yz.
struct SymMat {
  double xx = 1.0, yy = 1.0, zz = 1.0, xy = 0.0, xz = 0.0, yz = 0.0;

  static SymMat identity() { return {}; }
  static SymMat diag(double a, double b, double c = 1.0) { return {a, b, c, 0.0, 0.0, 0.0}; }
  double operator()(int i, int j) const;
  double det(int dim) const;
  SymMat inverse(int dim) const;
  double min_eigenvalue(int dim) const;
  double max_eigenvalue(int dim) const;
  SymMat scaled(double s) const { return {s * xx, s * yy, s * zz, s * xy, s * xz, s * yz}; }
  Vec3 mul(const Vec3& v) const;
};

struct CoefficientSet {
  std::vector<SymMat> g;
  ScalarField mu;
  ScalarField c;
  std::optional<ScalarField> c_ref;

  CoefficientSet() = default;
  // g = I, mu = 1, c = 1, no reference speed
  explicit CoefficientSet(const Grid& grid);

  // Throws ValidationError naming the first offending node.
  void validate(const Grid& grid, double eps_spd = 1e-10) const;

  // Same g, mu with c replaced (c_ref kept).
  CoefficientSet with_speed(const ScalarField& speed) const;
  // Speed set to the reference speed.
  CoefficientSet reference() const;

  double c_min() const;
  double c_max() const;
  // max over nodes of lambda_max(g^{-1})
  double max_ginv_eigenvalue(int dim) const;
};

}  // namespace confwave
