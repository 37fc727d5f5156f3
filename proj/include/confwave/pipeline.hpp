#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "confwave/gcc.hpp"
#include "confwave/recovery.hpp"
#include "confwave/scenario.hpp"
#include "json.hpp"

namespace confwave {

using Json = nlohmann::json;

struct PipelineOptions {
  Exec exec = Exec::Parallel;
  bool write_outputs = true;
  int snapshot_stride = 0;  // > 0: also write numbered FLD1 snapshots of the true-speed run
  std::function<void(const std::string&)> log;  // progress lines (timings included)
};

// Grid, coefficients and the control horizon of a scenario.
struct Setup {
  Scenario scenario;
  Grid grid;
  CoefficientSet coeffs;
  double tau = 0.0;
  std::optional<GccReport> gcc;   // when tau was estimated
};

// Stage "setup": builds the grid and coefficients; runs the ray sweep when tau = auto
// (a FAIL verdict refuses the scenario).
Setup prepare(const Scenario& sc, Exec exec = Exec::Parallel);
ControlProblem control_problem(const Setup& s);

// Illuminations used by the scenario's mode (one for fredholm-2d/transport, several for multi).
std::vector<Illumination> make_illuminations(const Setup& s);
// beta and beta~ of illumination i; seeds are derived from the scenario seed.
std::pair<ScalarField, ScalarField> make_velocities(const Setup& s, int i);
std::uint64_t velocity_seed(std::uint64_t seed, int illumination, bool reference);

struct PipelineResult {
  Json summary;               // deterministic for a fixed scenario, seed and thread count
  std::string report;         // human-readable, with timings
  ScalarField f, f_true, c_rec;
  double f_error = 0.0;       // relative weighted L2 error (or |f| / |c~^2| when f_true = 0)
};

// synthesize -> control -> recover; writes f, c_rec, traces, report.txt and summary.json.
// Errors are re-thrown with the stage name prefixed, keeping their type.
PipelineResult run_pipeline(const Scenario& sc, const PipelineOptions& opt = {});

// Sigma0 from alpha through the reference-speed source factors at t = 0, and the flow report.
struct IlluminationReport {
  Illumination illum;
  ScalarField sigma0;
  VectorField Sigma0;
  std::optional<FlowReport> flow;  // n >= 3
  double alpha_min = 0.0, alpha_max = 0.0;
};
IlluminationReport illumination_report(const Setup& s, const Illumination& il);

}  // namespace confwave
