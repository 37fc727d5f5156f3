#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstddef>
#include <functional>
#include <vector>

#include "confwave/grid.hpp"

namespace confwave {

// Per-node scalar over the full grid (interior and boundary nodes).
class ScalarField {
 public:
  ScalarField() = default;
  explicit ScalarField(std::size_t n, double value = 0.0) : v_(n, value) {}
  explicit ScalarField(std::vector<double> v) : v_(std::move(v)) {}

  std::size_t size() const { return v_.size(); }
  double& operator[](std::size_t i) { return v_[i]; }
  double operator[](std::size_t i) const { return v_[i]; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  ScalarField& operator+=(const ScalarField& o);
  ScalarField& operator-=(const ScalarField& o);
  ScalarField& operator*=(double s);
  bool all_finite() const;

 private:
  std::vector<double> v_;
};

ScalarField operator+(ScalarField a, const ScalarField& b);
ScalarField operator-(ScalarField a, const ScalarField& b);
ScalarField operator*(double s, ScalarField a);

struct VectorField {
  int dim = 2;
  std::array<ScalarField, 3> comp;

  VectorField() = default;
  VectorField(int d, std::size_t n) : dim(d) {
    for (int a = 0; a < d; ++a) comp[a] = ScalarField(n);
  }
  Vec3 at(std::size_t node) const {
    Vec3 v{0.0, 0.0, 0.0};
    for (int a = 0; a < dim; ++a) v[a] = comp[a][node];
    return v;
  }
};

using FieldSeries = std::vector<ScalarField>;

ScalarField sample(const Grid& grid, const std::function<double(const Vec3&)>& fn);

// interior-node vector in Grid::interior() order
Eigen::VectorXd restrict_interior(const Grid& grid, const ScalarField& f);
ScalarField extend_interior(const Grid& grid, const Eigen::VectorXd& v);

}  // namespace confwave
