#include <cmath>

#include "confwave/errors.hpp"
#include "confwave/grid.hpp"
#include "doctest.h"

using namespace confwave;

TEST_CASE("grid spacing, indexing and classification") {
  Grid g = Grid::unit(2, 11);
  CHECK(g.size() == 121);
  CHECK(g.h(0) == doctest::Approx(0.1));
  CHECK(g.interior().size() == 81);
  CHECK(g.boundary().size() == 40);
  CHECK(g.gamma().size() == 40);
  std::size_t node = g.index(3, 7);
  CHECK(g.ijk(node)[0] == 3);
  CHECK(g.ijk(node)[1] == 7);
  CHECK(g.coords(node)[1] == doctest::Approx(0.7));
}

TEST_CASE("grid invariants are enforced") {
  CHECK_THROWS_AS(Grid::unit(2, 7), ValidationError);
  CHECK_THROWS_AS(Grid(2, {1.0, -1.0, 0.0}, {9, 9, 1}, GammaSpec::full(2)), ValidationError);
  // opposite faces only: Gamma not edge-connected
  GammaSpec two;
  two.regions = {{0, 0}, {0, 1}};
  CHECK_THROWS_AS(Grid::unit(2, 9, two), ValidationError);
  // a window that selects nothing
  FaceRegion r{1, 0};
  r.lo[0] = 2.0;
  r.hi[0] = 3.0;
  CHECK_THROWS_AS(Grid::unit(2, 9, GammaSpec{{r}}), ValidationError);
}

TEST_CASE("normals are unit and outward") {
  Grid g = Grid::unit(3, 8);
  for (std::size_t b : g.boundary()) {
    Vec3 nu = g.normal(b);
    CHECK(std::sqrt(nu[0] * nu[0] + nu[1] * nu[1] + nu[2] * nu[2]) == doctest::Approx(1.0));
    Vec3 x = g.coords(b);
    double out = 0.0;
    for (int a = 0; a < 3; ++a) out += nu[a] * (x[a] - 0.5);
    CHECK(out > 0.0);
  }
}

TEST_CASE("quadrature weights integrate area and perimeter") {
  Grid g(2, {2.0, 1.0, 0.0}, {21, 11, 1}, GammaSpec::full(2));
  double area = 0.0, perim = 0.0;
  for (std::size_t n = 0; n < g.size(); ++n) area += g.node_weight(n);
  for (std::size_t b : g.boundary()) perim += g.surface_weight(b);
  CHECK(area == doctest::Approx(2.0));
  CHECK(perim == doctest::Approx(6.0));

  Grid c = Grid::unit(3, 9);
  double surf = 0.0;
  for (std::size_t b : c.boundary()) surf += c.surface_weight(b);
  CHECK(surf == doctest::Approx(6.0));
}

TEST_CASE("partial Gamma with a coordinate window") {
  FaceRegion r{1, 0};
  r.lo[0] = 0.25;
  r.hi[0] = 0.75;
  Grid g = Grid::unit(2, 9, GammaSpec{{r}});
  CHECK(g.gamma().size() == 5);
  for (std::size_t s : g.gamma()) CHECK(g.on_face(s, 1, 0));
  // adjacency is a path: 4 edges
  CHECK(g.gamma_edges().size() == 4);
}
