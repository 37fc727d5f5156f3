#pragma once

#include <string>
#include <vector>

#include "confwave/coefficients.hpp"
#include "confwave/csr.hpp"
#include "confwave/grid.hpp"

namespace confwave {

struct RayEvent {
  double t = 0.0;
  Vec3 x{};
  Vec3 normal{};     // outward unit normal of the face hit
  Vec3 p_in{}, p_out{};
  SymMat B;          // c^2 g^{-1} at x
  double cos_incidence = 0.0;
};

enum class RayFate { Escaped, Survived };
const char* to_string(RayFate f);

struct Ray {
  std::vector<Vec3> x, p;
  std::vector<double> t;
  std::vector<RayEvent> reflections;
  std::vector<RayEvent> grazing;   // Gamma hits below the angle threshold (reflected, not escapes)
  RayFate fate = RayFate::Survived;
  double exit_time = 0.0;
  double exit_cos = 0.0;
  double max_step_drift = 0.0;     // relative change of H within one step, before projection
  double energy_defect = 0.0;      // max relative deviation of H over the stored states
};

struct RayOptions {
  double dt = 0.0;        // 0: h_min / (4 c_max)
  double t_max = 0.0;     // 0: 10 diam / c_min
  double angle_tol = 0.05;
  bool project_energy = true;
  bool record_path = true;
};

// H = 1/2 p^T B(x) p, B = c^2 g^{-1} interpolated multilinearly. Stormer-Verlet steps,
// specular metric reflection on the boundary outside Gamma; stops on a transversal Gamma hit.
// The direction is rescaled to unit speed in c^-2 g.
Ray trace_ray(const Grid& grid, const CoefficientSet& coeffs, const Vec3& x0, const Vec3& direction,
              const RayOptions& opt = {});

// max of: relative H defect, tangential momentum defect, normal velocity sum defect
double verify_metric_reflection(const RayEvent& e);
// p - 2 (n.Bp / n.Bn) n
Vec3 reflect_momentum(const SymMat& B, const Vec3& n, const Vec3& p, int dim);

struct GccOptions {
  int points_per_axis = 10;   // start lattice including the boundary (inward directions only there)
  int directions = 32;        // 2D: uniform angles; 3D: Fibonacci sphere
  double direction_offset = 0.0;  // fraction of the angular step (2D)
  double margin = 1.2;
  RayOptions ray;
};

struct GccReport {
  bool pass = false;
  double tau_est = 0.0;
  double max_escape = 0.0;
  double t_max = 0.0;
  std::size_t rays = 0, escaped = 0, survived = 0, grazing_hits = 0;
  double max_energy_defect = 0.0;
  Ray worst;                  // longest escape, or a survivor when the verdict fails
  std::string summary() const;
};

GccReport estimate_control_time(const Grid& grid, const CoefficientSet& coeffs, const GccOptions& opt = {},
                                Exec exec = Exec::Parallel);

}  // namespace confwave
