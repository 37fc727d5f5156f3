#include "confwave/grid.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <string>

#include "confwave/errors.hpp"

namespace confwave {

namespace {
constexpr double kCoordTol = 1e-12;
}

GammaSpec GammaSpec::full(int dim) {
  GammaSpec s;
  for (int a = 0; a < dim; ++a)
    for (int side = 0; side < 2; ++side) s.regions.push_back({a, side});
  return s;
}

GammaSpec GammaSpec::face(int axis, int side) {
  GammaSpec s;
  s.regions.push_back({axis, side});
  return s;
}

GammaSpec GammaSpec::all_but(int dim, int axis, int side) {
  GammaSpec s;
  for (int a = 0; a < dim; ++a)
    for (int sd = 0; sd < 2; ++sd)
      if (a != axis || sd != side) s.regions.push_back({a, sd});
  return s;
}

Grid::Grid(int dim, Vec3 extents, Index3 nodes, GammaSpec gamma) : dim_(dim) {
  if (dim != 2 && dim != 3) throw ValidationError("grid: dimension must be 2 or 3");
  for (int a = 0; a < 3; ++a) {
    if (a >= dim) {
      n_[a] = 1;
      L_[a] = 0.0;
      h_[a] = 1.0;
      continue;
    }
    if (nodes[a] < 8)
      throw ValidationError("grid: axis " + std::to_string(a) + " has " + std::to_string(nodes[a]) +
                            " nodes, need at least 8");
    if (!(extents[a] > 0.0)) throw ValidationError("grid: extents must be positive");
    n_[a] = nodes[a];
    L_[a] = extents[a];
    h_[a] = extents[a] / (nodes[a] - 1);
  }
  stride_ = {static_cast<std::size_t>(n_[1]) * n_[2], static_cast<std::size_t>(n_[2]), 1};
  size_ = static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];

  interior_slot_.assign(size_, -1);
  gamma_slot_.assign(size_, -1);
  for (std::size_t node = 0; node < size_; ++node) {
    Index3 p = ijk(node);
    bool bnd = false;
    for (int a = 0; a < dim_; ++a) bnd = bnd || p[a] == 0 || p[a] == n_[a] - 1;
    if (bnd) {
      boundary_.push_back(node);
    } else {
      interior_slot_[node] = static_cast<int>(interior_.size());
      interior_.push_back(node);
    }
  }

  for (std::size_t node : boundary_) {
    Vec3 x = coords(node);
    bool hit = false;
    for (const FaceRegion& r : gamma.regions) {
      if (r.axis < 0 || r.axis >= dim_ || (r.side != 0 && r.side != 1))
        throw ValidationError("grid: Gamma face outside the box");
      if (!on_face(node, r.axis, r.side)) continue;
      bool inside = true;
      for (int a = 0; a < dim_; ++a) {
        if (a == r.axis) continue;
        inside = inside && x[a] >= r.lo[a] - kCoordTol && x[a] <= r.hi[a] + kCoordTol;
      }
      hit = hit || inside;
    }
    if (hit) {
      gamma_slot_[node] = static_cast<int>(gamma_.size());
      gamma_.push_back(node);
    }
  }
  if (gamma_.empty()) throw ValidationError("grid: Gamma is empty");

  for (std::size_t node : gamma_) {
    Index3 p = ijk(node);
    for (int a = 0; a < dim_; ++a) {
      if (p[a] + 1 >= n_[a]) continue;
      std::size_t nb = node + stride_[a];
      if (gamma_slot_[nb] >= 0) gamma_edges_.push_back({gamma_slot_[node], gamma_slot_[nb], h_[a]});
    }
  }

  // edge-connectivity of Gamma
  std::vector<std::vector<int>> adj(gamma_.size());
  for (const GammaEdge& e : gamma_edges_) {
    adj[e.a].push_back(e.b);
    adj[e.b].push_back(e.a);
  }
  std::vector<char> seen(gamma_.size(), 0);
  std::queue<int> q;
  q.push(0);
  seen[0] = 1;
  std::size_t reached = 1;
  while (!q.empty()) {
    int s = q.front();
    q.pop();
    for (int t : adj[s])
      if (!seen[t]) {
        seen[t] = 1;
        ++reached;
        q.push(t);
      }
  }
  if (reached != gamma_.size())
    throw ValidationError("grid: Gamma is not edge-connected (" + std::to_string(reached) + " of " +
                          std::to_string(gamma_.size()) + " nodes reachable)");
}

Grid Grid::unit(int dim, int n, const GammaSpec& gamma) {
  return Grid(dim, {1.0, 1.0, 1.0}, {n, n, n}, gamma);
}

double Grid::h_min() const {
  double m = h_[0];
  for (int a = 1; a < dim_; ++a) m = std::min(m, h_[a]);
  return m;
}

double Grid::diameter() const {
  double s = 0.0;
  for (int a = 0; a < dim_; ++a) s += L_[a] * L_[a];
  return std::sqrt(s);
}

Index3 Grid::ijk(std::size_t node) const {
  Index3 p{};
  p[2] = static_cast<int>(node % n_[2]);
  node /= n_[2];
  p[1] = static_cast<int>(node % n_[1]);
  p[0] = static_cast<int>(node / n_[1]);
  return p;
}

Vec3 Grid::coords(std::size_t node) const {
  Index3 p = ijk(node);
  Vec3 x{0.0, 0.0, 0.0};
  for (int a = 0; a < dim_; ++a) x[a] = p[a] * h_[a];
  return x;
}

bool Grid::on_face(std::size_t node, int axis, int side) const {
  int p = ijk(node)[axis];
  return side == 0 ? p == 0 : p == n_[axis] - 1;
}

Vec3 Grid::normal(std::size_t node) const {
  Index3 p = ijk(node);
  Vec3 nu{0.0, 0.0, 0.0};
  double s = 0.0;
  for (int a = 0; a < dim_; ++a) {
    if (p[a] == 0) nu[a] = -1.0;
    if (p[a] == n_[a] - 1) nu[a] = 1.0;
    s += nu[a] * nu[a];
  }
  if (s > 0.0)
    for (double& v : nu) v /= std::sqrt(s);
  return nu;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (int a = 0; a < dim_; ++a) v *= h_[a];
  return v;
}

double Grid::node_weight(std::size_t node) const {
  Index3 p = ijk(node);
  double w = cell_volume();
  for (int a = 0; a < dim_; ++a)
    if (p[a] == 0 || p[a] == n_[a] - 1) w *= 0.5;
  return w;
}

double Grid::surface_weight(std::size_t node) const {
  Index3 p = ijk(node);
  double total = 0.0;
  for (int a = 0; a < dim_; ++a) {
    if (p[a] != 0 && p[a] != n_[a] - 1) continue;
    int faces = (p[a] == 0) + (p[a] == n_[a] - 1);
    double w = 1.0;
    for (int t = 0; t < dim_; ++t) {
      if (t == a) continue;
      w *= h_[t];
      if (p[t] == 0 || p[t] == n_[t] - 1) w *= 0.5;
    }
    total += faces * w;
  }
  return total;
}

bool Grid::same_shape(const Grid& other) const {
  return dim_ == other.dim_ && n_ == other.n_ && L_ == other.L_;
}

}  // namespace confwave
