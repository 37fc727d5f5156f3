#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "confwave/coefficients.hpp"
#include "confwave/control.hpp"
#include "confwave/expr.hpp"
#include "confwave/gcc.hpp"
#include "confwave/grid.hpp"
#include "confwave/recovery.hpp"
#include "confwave/transport.hpp"

namespace confwave {

// Flat "key = value" text with [section] headers; '#' and ';' start comments.
// Keys are stored as "section.key".
class IniFile {
 public:
  static IniFile parse(const std::string& text, const std::string& origin = "<string>");
  static IniFile load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  double number(const std::string& key, double fallback) const;
  long integer(const std::string& key, long fallback) const;
  bool flag(const std::string& key, bool fallback) const;
  // keys never read through the accessors above
  std::vector<std::string> unused() const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

 private:
  std::map<std::string, std::string> values_;
  mutable std::map<std::string, bool> used_;
  std::string origin_;
};

enum class RecoveryMode { Fredholm2d, Multi, Transport };
const char* to_string(RecoveryMode m);
RecoveryMode parse_mode(const std::string& s);

// A scalar coefficient given as an expression in x, y, z or as an FLD1 file.
struct FieldSpec {
  std::string text = "1";
  std::optional<std::filesystem::path> file;
  ScalarField realize(const Grid& grid) const;
};

struct IlluminationSpec {
  std::string kind = "poisson";   // poisson | harmonic | linear-ramp | file
  double delta = 1.0;
  double value = -1.0;            // harmonic without data: alpha on Gamma
  int band = 3;
  std::optional<std::string> data;  // harmonic: Gamma data expression
  std::optional<std::filesystem::path> file;
  bool ramp = true;
};

struct VelocitySpec {
  std::string text = "random";    // "random", an expression, or file:<path>
  std::optional<std::filesystem::path> file;
};

struct Scenario {
  std::filesystem::path source_dir = ".";
  std::string name = "scenario";

  int dim = 2;
  Vec3 extent{1.0, 1.0, 1.0};
  Index3 nodes{24, 24, 1};
  std::string gamma_text = "full";
  GammaSpec gamma;

  FieldSpec c, c_ref, mu;
  std::array<FieldSpec, 6> g;     // xx yy zz xy xz yz

  std::optional<double> tau;      // empty: estimate by ray tracing
  double cfl = 0.5;
  double epsilon = 1e-8, kappa = 0.25, cg_tol = 1e-3;
  int cg_max_iter = 200;
  std::size_t assembly_cap = 1600;

  IlluminationSpec illumination;
  VelocitySpec beta, beta_ref;
  double beta_amplitude = 0.05;
  std::uint64_t seed = 1;

  RecoveryMode mode = RecoveryMode::Fredholm2d;
  double noise = 0.0;
  double delta_required = 0.5;
  double c_floor = 0.1;
  FirstOrderOptions first_order;

  GccOptions gcc;
  std::filesystem::path out = "out";

  static Scenario from_ini(const IniFile& ini, const std::filesystem::path& source_dir = ".");
  static Scenario load(const std::filesystem::path& path);

  // Mode/dimension compatibility and value ranges; throws ValidationError.
  void validate() const;

  Grid make_grid() const;
  // c, c_ref, mu, g on the grid; checks c = c_ref on the boundary.
  CoefficientSet make_coefficients(const Grid& grid) const;
};

// "full", "all-but z1", or a list of faces x0 x1 y0 y1 z0 z1, each optionally
// windowed as face@axis:lo:hi (repeatable), e.g. "y0@x:0.2:0.8".
GammaSpec parse_gamma(const std::string& text, int dim);

// Smooth random field: Gaussian coefficients on low sine modes (zero on the boundary),
// scaled to max-abs `amplitude`.
ScalarField random_smooth_field(const Grid& grid, std::uint64_t seed, double amplitude, int modes = 4);

}  // namespace confwave
