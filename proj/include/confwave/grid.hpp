#pragma once

#include <array>
#include <cstddef>
#include <limits>
#include <vector>

namespace confwave {

using Vec3 = std::array<double, 3>;
using Index3 = std::array<int, 3>;

// One face of the box (axis, side 0 = min / 1 = max), optionally restricted to a
// coordinate window on the tangential axes. Window bounds are indexed by axis.
struct FaceRegion {
  int axis = 0;
  int side = 0;
  Vec3 lo{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};
  Vec3 hi{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
};

struct GammaSpec {
  std::vector<FaceRegion> regions;

  static GammaSpec full(int dim);
  static GammaSpec face(int axis, int side);
  // every face except (axis, side)
  static GammaSpec all_but(int dim, int axis, int side);
};

// Rectangular lattice on [0,L1]x[0,L2](x[0,L3]). Node (i,j,k) has linear index
// (i*n2 + j)*n3 + k, i.e. row-major with the last axis fastest. In 2D n3 = 1.
class Grid {
 public:
  Grid(int dim, Vec3 extents, Index3 nodes, GammaSpec gamma);

  static Grid unit(int dim, int n, const GammaSpec& gamma);
  static Grid unit(int dim, int n) { return unit(dim, n, GammaSpec::full(dim)); }

  int dim() const { return dim_; }
  int count(int axis) const { return n_[axis]; }
  const Index3& counts() const { return n_; }
  double h(int axis) const { return h_[axis]; }
  const Vec3& spacing() const { return h_; }
  double extent(int axis) const { return L_[axis]; }
  double h_min() const;
  double diameter() const;
  std::size_t size() const { return size_; }

  std::size_t index(int i, int j, int k = 0) const {
    return (static_cast<std::size_t>(i) * n_[1] + j) * n_[2] + k;
  }
  std::size_t index(const Index3& ijk) const { return index(ijk[0], ijk[1], ijk[2]); }
  Index3 ijk(std::size_t node) const;
  Vec3 coords(std::size_t node) const;
  std::size_t stride(int axis) const { return stride_[axis]; }

  bool on_boundary(std::size_t node) const { return interior_slot_[node] < 0; }
  bool in_gamma(std::size_t node) const { return gamma_slot_[node] >= 0; }

  const std::vector<std::size_t>& interior() const { return interior_; }
  const std::vector<std::size_t>& boundary() const { return boundary_; }
  const std::vector<std::size_t>& gamma() const { return gamma_; }
  int interior_slot(std::size_t node) const { return interior_slot_[node]; }
  int gamma_slot(std::size_t node) const { return gamma_slot_[node]; }

  // Unit outward normal; at edges/corners the normalized sum of face normals.
  Vec3 normal(std::size_t node) const;

  double cell_volume() const;
  // Trapezoid quadrature weight of the node (cell volume times 1/2 per boundary axis).
  double node_weight(std::size_t node) const;
  // Surface quadrature weight of a boundary node, summed over the faces it lies on.
  double surface_weight(std::size_t node) const;

  // Gamma adjacency (slots), one entry per lattice edge between two Gamma nodes,
  // with the edge length.
  struct GammaEdge {
    int a, b;
    double length;
  };
  const std::vector<GammaEdge>& gamma_edges() const { return gamma_edges_; }

  bool same_shape(const Grid& other) const;
  bool on_face(std::size_t node, int axis, int side) const;

 private:
  int dim_;
  Vec3 L_{};
  Index3 n_{1, 1, 1};
  Vec3 h_{1.0, 1.0, 1.0};
  std::array<std::size_t, 3> stride_{};
  std::size_t size_ = 0;
  std::vector<int> interior_slot_;
  std::vector<int> gamma_slot_;
  std::vector<std::size_t> interior_, boundary_, gamma_;
  std::vector<GammaEdge> gamma_edges_;
};

}  // namespace confwave
