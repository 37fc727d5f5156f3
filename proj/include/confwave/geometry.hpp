#pragma once

#include "confwave/coefficients.hpp"
#include "confwave/csr.hpp"
#include "confwave/fields.hpp"
#include "confwave/grid.hpp"

namespace confwave {

enum class SpaceTag { InteriorField, FullField, GammaTrace, GammaSpaceTime, InteriorSpaceTime };

const char* to_string(SpaceTag t);

// Discretization of A = (1/w) div(K grad .) with w = mu sqrt|G|, K = w G^{-1}
// and G = g (plain) or c^{-2} g (speed weighted). Rows of boundary nodes are
// empty (homogeneous Dirichlet); interior rows may reference boundary columns,
// which is how Dirichlet data is lifted in.
struct DiscreteOperator {
  Csr matrix;               // size x size over all grid nodes
  ScalarField density;      // w per node
  ScalarField quad;         // w * trapezoid node weight: the inner-product diagonal
  SpaceTag domain = SpaceTag::FullField;
  SpaceTag codomain = SpaceTag::FullField;
  bool symmetric = true;    // w.r.t. quad on fields vanishing on the boundary
  bool speed_weighted = false;

  ScalarField apply(const ScalarField& u, Exec exec = Exec::Parallel) const;

  // interior rows x interior columns (slots of Grid::interior())
  Csr interior_block(const Grid& grid) const;
  // interior rows x Gamma columns (slots of Grid::gamma())
  Csr gamma_block(const Grid& grid) const;
};

DiscreteOperator assemble_laplace_beltrami(const Grid& grid, const CoefficientSet& coeffs,
                                           bool speed_weighted);

// Density w (mu sqrt det of the weighting metric) and quadrature diagonal w * node weight.
ScalarField metric_density(const Grid& grid, const CoefficientSet& coeffs, bool speed_weighted);
ScalarField quadrature_weights(const Grid& grid, const CoefficientSet& coeffs, bool speed_weighted);

// Euclidean gradient: centered inside, second-order one-sided on boundary layers.
VectorField gradient(const Grid& grid, const ScalarField& f);
// g^{-1} (Euclidean gradient)
VectorField grad_g(const Grid& grid, const ScalarField& f, const CoefficientSet& coeffs);

double weighted_inner_product(const ScalarField& u, const ScalarField& v, const Grid& grid,
                              const CoefficientSet& coeffs, bool speed_weighted);
double weighted_norm(const ScalarField& u, const Grid& grid, const CoefficientSet& coeffs,
                     bool speed_weighted);

// Relative residual of A_{c^-2 g} w = c^2 A_g w + (2-n)/2 grad(c^2) . grad_g w on interior nodes.
double verify_conformal_identity(const CoefficientSet& coeffs, const Grid& grid, const ScalarField& w);

}  // namespace confwave
