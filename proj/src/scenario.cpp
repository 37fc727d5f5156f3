#include "confwave/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "confwave/errors.hpp"
#include "confwave/io.hpp"

namespace confwave {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::vector<std::string> split_ws(const std::string& s) {
  std::istringstream is(s);
  std::vector<std::string> out;
  std::string t;
  while (is >> t) out.push_back(t);
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (trim(v.substr(used)).empty()) return d;
  } catch (const std::exception&) {
  }
  throw ValidationError("config: '" + key + "' expects a number, got '" + v + "'");
}

std::filesystem::path resolve(const std::filesystem::path& dir, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : dir / path;
}

FieldSpec field_spec(const IniFile& ini, const std::string& key, const std::string& fallback,
                     const std::filesystem::path& dir) {
  FieldSpec f;
  f.text = ini.get(key, fallback);
  if (f.text.rfind("file:", 0) == 0) {
    f.file = resolve(dir, trim(f.text.substr(5)));
    if (!std::filesystem::exists(*f.file)) throw ValidationError("config: " + key + ": file not found: " + f.file->string());
  } else {
    try {
      Expression::parse(f.text);
    } catch (const ValidationError& e) {
      throw ValidationError("config: " + key + ": " + e.what());
    }
  }
  return f;
}

}  // namespace

// ---------------------------------------------------------------- IniFile

IniFile IniFile::parse(const std::string& text, const std::string& origin) {
  IniFile ini;
  ini.origin_ = origin;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      section = lower(trim(line.substr(1, line.size() - 2)));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = lower(trim(line.substr(0, eq)));
    if (key.empty()) throw ValidationError(origin + ":" + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (ini.values_.count(full)) throw ValidationError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + full + "'");
    ini.values_[full] = trim(line.substr(eq + 1));
  }
  return ini;
}

IniFile IniFile::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read scenario " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse(ss.str(), path.string());
}

std::string IniFile::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  used_[key] = true;
  return it->second;
}

std::string IniFile::require(const std::string& key) const {
  if (!has(key)) throw ValidationError(origin_ + ": missing required key '" + key + "'");
  return get(key, "");
}

double IniFile::number(const std::string& key, double fallback) const {
  return has(key) ? to_double(key, get(key, "")) : fallback;
}

long IniFile::integer(const std::string& key, long fallback) const {
  if (!has(key)) return fallback;
  const double d = to_double(key, get(key, ""));
  if (d != std::floor(d)) throw ValidationError("config: '" + key + "' expects an integer");
  return static_cast<long>(d);
}

bool IniFile::flag(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = lower(get(key, ""));
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ValidationError("config: '" + key + "' expects true/false, got '" + v + "'");
}

std::vector<std::string> IniFile::unused() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : values_)
    if (!used_.count(k)) out.push_back(k);
  return out;
}

// ---------------------------------------------------------------- parsing helpers

const char* to_string(RecoveryMode m) {
  switch (m) {
    case RecoveryMode::Fredholm2d: return "fredholm-2d";
    case RecoveryMode::Multi: return "multi";
    case RecoveryMode::Transport: return "transport";
  }
  return "?";
}

RecoveryMode parse_mode(const std::string& s) {
  const std::string v = lower(trim(s));
  if (v == "fredholm-2d") return RecoveryMode::Fredholm2d;
  if (v == "multi") return RecoveryMode::Multi;
  if (v == "transport") return RecoveryMode::Transport;
  throw ValidationError("unknown recovery mode '" + s + "' (fredholm-2d | multi | transport)");
}

GammaSpec parse_gamma(const std::string& text, int dim) {
  const std::vector<std::string> tok = split_ws(lower(text));
  if (tok.empty()) throw ValidationError("gamma: empty specification");
  auto face = [&](const std::string& t) {
    if (t.size() != 2 || t[0] < 'x' || t[0] > 'z' || (t[1] != '0' && t[1] != '1'))
      throw ValidationError("gamma: bad face '" + t + "' (x0 x1 y0 y1 z0 z1)");
    const int axis = t[0] - 'x';
    if (axis >= dim) throw ValidationError("gamma: face '" + t + "' does not exist in " + std::to_string(dim) + "D");
    return std::pair<int, int>{axis, t[1] - '0'};
  };
  if (tok.size() == 1 && tok[0] == "full") return GammaSpec::full(dim);
  if (tok[0] == "all-but") {
    if (tok.size() != 2) throw ValidationError("gamma: 'all-but' takes one face");
    auto [a, s] = face(tok[1]);
    return GammaSpec::all_but(dim, a, s);
  }
  GammaSpec g;
  for (const std::string& t : tok) {
    std::vector<std::string> parts;
    std::stringstream ss(t);
    std::string p;
    while (std::getline(ss, p, '@')) parts.push_back(p);
    auto [a, s] = face(parts[0]);
    FaceRegion r;
    r.axis = a;
    r.side = s;
    for (std::size_t i = 1; i < parts.size(); ++i) {
      // axis:lo:hi
      std::vector<std::string> w;
      std::stringstream ws(parts[i]);
      while (std::getline(ws, p, ':')) w.push_back(p);
      if (w.size() != 3 || w[0].size() != 1 || w[0][0] < 'x' || w[0][0] - 'x' >= dim || w[0][0] - 'x' == a)
        throw ValidationError("gamma: bad window '" + parts[i] + "' (tangential axis:lo:hi)");
      const int wa = w[0][0] - 'x';
      r.lo[wa] = to_double("gamma", w[1]);
      r.hi[wa] = to_double("gamma", w[2]);
      if (!(r.lo[wa] < r.hi[wa])) throw ValidationError("gamma: empty window '" + parts[i] + "'");
    }
    g.regions.push_back(r);
  }
  return g;
}

ScalarField FieldSpec::realize(const Grid& grid) const {
  if (file) return read_fld1(*file, grid);
  const Expression e = Expression::parse(text);
  ScalarField f = sample(grid, [&](const Vec3& x) { return e(x); });
  if (!f.all_finite()) throw ValidationError("expression '" + text + "' is not finite on the grid");
  return f;
}

ScalarField random_smooth_field(const Grid& grid, std::uint64_t seed, double amplitude, int modes) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  const int n3 = grid.dim() == 3 ? modes : 1;
  std::vector<double> a(static_cast<std::size_t>(modes) * modes * n3);
  for (double& v : a) v = nd(rng);
  const double pi = std::numbers::pi;
  ScalarField f = sample(grid, [&](const Vec3& x) {
    double s = 0.0;
    int m = 0;
    for (int p = 1; p <= modes; ++p)
      for (int q = 1; q <= modes; ++q)
        for (int r = 1; r <= n3; ++r) {
          double term = std::sin(p * pi * x[0] / grid.extent(0)) * std::sin(q * pi * x[1] / grid.extent(1));
          if (grid.dim() == 3) term *= std::sin(r * pi * x[2] / grid.extent(2));
          s += a[m++] * term / (p * p + q * q + (grid.dim() == 3 ? r * r : 0));
        }
    return s;
  });
  double mx = 0.0;
  for (double v : f.values()) mx = std::max(mx, std::abs(v));
  if (mx > 0.0) f *= amplitude / mx;
  return f;
}

// ---------------------------------------------------------------- Scenario

Scenario Scenario::from_ini(const IniFile& ini, const std::filesystem::path& dir) {
  Scenario s;
  s.source_dir = dir;
  s.name = ini.get("name", ini.get("scenario.name", "scenario"));

  s.dim = static_cast<int>(ini.integer("grid.dim", 2));
  if (s.dim != 2 && s.dim != 3) throw ValidationError("config: grid.dim must be 2 or 3");
  {
    std::vector<std::string> n = split_ws(ini.get("grid.nodes", "24"));
    if (n.size() != 1 && n.size() != static_cast<std::size_t>(s.dim))
      throw ValidationError("config: grid.nodes expects 1 or " + std::to_string(s.dim) + " values");
    for (int a = 0; a < s.dim; ++a) {
      const double v = to_double("grid.nodes", n[n.size() == 1 ? 0 : a]);
      if (v != std::floor(v)) throw ValidationError("config: grid.nodes must be integers");
      s.nodes[a] = static_cast<int>(v);
    }
    std::vector<std::string> e = split_ws(ini.get("grid.extent", "1"));
    if (e.size() != 1 && e.size() != static_cast<std::size_t>(s.dim))
      throw ValidationError("config: grid.extent expects 1 or " + std::to_string(s.dim) + " values");
    for (int a = 0; a < s.dim; ++a) s.extent[a] = to_double("grid.extent", e[e.size() == 1 ? 0 : a]);
  }
  s.gamma_text = ini.get("grid.gamma", "full");
  s.gamma = parse_gamma(s.gamma_text, s.dim);

  s.c = field_spec(ini, "coefficients.c", "1", dir);
  s.c_ref = field_spec(ini, "coefficients.c_ref", "1", dir);
  s.mu = field_spec(ini, "coefficients.mu", "1", dir);
  const char* comp[] = {"g_xx", "g_yy", "g_zz", "g_xy", "g_xz", "g_yz"};
  for (int i = 0; i < 6; ++i) s.g[i] = field_spec(ini, std::string("coefficients.") + comp[i], i < 3 ? "1" : "0", dir);

  const std::string tau = lower(ini.get("control.tau", "auto"));
  if (tau != "auto") s.tau = to_double("control.tau", tau);
  s.cfl = ini.number("control.cfl", s.cfl);
  s.epsilon = ini.number("control.epsilon", s.epsilon);
  s.kappa = ini.number("control.kappa", s.kappa);
  s.cg_tol = ini.number("control.cg_tol", s.cg_tol);
  s.cg_max_iter = static_cast<int>(ini.integer("control.cg_max_iter", s.cg_max_iter));
  s.assembly_cap = static_cast<std::size_t>(ini.integer("control.assembly_cap", static_cast<long>(s.assembly_cap)));

  IlluminationSpec& il = s.illumination;
  il.kind = lower(ini.get("illumination.kind", "poisson"));
  il.delta = ini.number("illumination.delta", il.delta);
  il.value = ini.number("illumination.value", il.value);
  il.band = static_cast<int>(ini.integer("illumination.band", il.band));
  il.ramp = ini.flag("illumination.ramp", il.ramp);
  if (ini.has("illumination.data")) {
    il.data = ini.get("illumination.data", "");
    Expression::parse(*il.data);
  }
  if (ini.has("illumination.file")) {
    il.file = resolve(dir, ini.get("illumination.file", ""));
    if (!std::filesystem::exists(*il.file)) throw ValidationError("config: illumination.file not found: " + il.file->string());
  }

  auto velocity = [&](const std::string& key) {
    VelocitySpec v;
    v.text = ini.get(key, "random");
    if (v.text.rfind("file:", 0) == 0) {
      v.file = resolve(dir, trim(v.text.substr(5)));
      if (!std::filesystem::exists(*v.file)) throw ValidationError("config: " + key + ": file not found: " + v.file->string());
    } else if (lower(v.text) != "random") {
      Expression::parse(v.text);
    }
    return v;
  };
  s.beta = velocity("velocity.beta");
  s.beta_ref = velocity("velocity.beta_ref");
  s.beta_amplitude = ini.number("velocity.amplitude", s.beta_amplitude);
  {
    const double seed = ini.number("velocity.seed", 1.0);
    if (seed < 0 || seed != std::floor(seed)) throw ValidationError("config: velocity.seed must be a non-negative integer");
    s.seed = static_cast<std::uint64_t>(seed);
  }

  s.mode = parse_mode(ini.get("recovery.mode", s.dim == 2 ? "fredholm-2d" : "multi"));
  s.noise = ini.number("recovery.noise", s.noise);
  s.delta_required = ini.number("recovery.delta_min", s.delta_required);
  s.c_floor = ini.number("recovery.c_floor", s.c_floor);
  {
    const std::string m = lower(ini.get("recovery.solver", "auto"));
    if (m == "auto") s.first_order.method = FirstOrderMethod::Auto;
    else if (m == "fixed-point") s.first_order.method = FirstOrderMethod::FixedPoint;
    else if (m == "gmres") s.first_order.method = FirstOrderMethod::Gmres;
    else throw ValidationError("config: recovery.solver must be auto | fixed-point | gmres");
    s.first_order.tol = ini.number("recovery.tol", s.first_order.tol);
    s.first_order.max_iter = static_cast<int>(ini.integer("recovery.max_iter", s.first_order.max_iter));
  }

  s.gcc.points_per_axis = static_cast<int>(ini.integer("gcc.points", s.dim == 2 ? 10 : 5));
  s.gcc.directions = static_cast<int>(ini.integer("gcc.directions", 32));
  s.gcc.direction_offset = ini.number("gcc.offset", 0.0);
  s.gcc.ray.angle_tol = ini.number("gcc.angle_tol", 0.05);

  s.out = resolve(dir, ini.get("output.dir", "out"));

  const std::vector<std::string> extra = ini.unused();
  if (!extra.empty()) {
    std::string msg = "config: unknown key(s):";
    for (const auto& k : extra) msg += " " + k;
    throw ValidationError(msg);
  }
  s.validate();
  return s;
}

Scenario Scenario::load(const std::filesystem::path& path) {
  IniFile ini = IniFile::load(path);
  Scenario s = from_ini(ini, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
  if (s.name == "scenario") s.name = path.stem().string();
  return s;
}

void Scenario::validate() const {
  if (mode == RecoveryMode::Transport && dim < 3)
    throw ValidationError(
        "transport mode requires n >= 3: in dimension 2 the drift Sigma0 vanishes identically, so the "
        "flow assumption cannot hold (use fredholm-2d or multi)");
  if (mode == RecoveryMode::Fredholm2d && dim != 2)
    throw ValidationError("fredholm-2d mode requires n = 2: for n >= 3 the gradient term does not drop (use multi or transport)");
  const std::string& k = illumination.kind;
  if (k != "poisson" && k != "harmonic" && k != "linear-ramp" && k != "file")
    throw ValidationError("config: illumination.kind must be poisson | harmonic | linear-ramp | file");
  if (k == "linear-ramp" && dim < 3) throw ValidationError("linear-ramp illumination requires n >= 3");
  if (k == "file" && !illumination.file) throw ValidationError("file illumination needs illumination.file");
  if (k == "poisson" && !(illumination.delta > 0.0)) throw ValidationError("poisson illumination needs delta > 0");
  if (mode == RecoveryMode::Multi && k == "file")
    throw ValidationError("multi mode generates its own illuminations; illumination.kind = file is not supported");
  if (mode == RecoveryMode::Transport && k == "poisson")
    throw ValidationError("transport mode needs a drift Sigma0 != 0: use harmonic or linear-ramp illumination");
  if (tau && !(*tau > 0.0)) throw ValidationError("config: control.tau must be positive or 'auto'");
  for (int a = 0; a < dim; ++a) {
    if (!(extent[a] > 0.0)) throw ValidationError("config: grid.extent must be positive");
    if (nodes[a] < 8) throw ValidationError("config: grid.nodes must be >= 8 per axis");
  }
  if (!(cfl > 0.0 && cfl <= 1.0)) throw ValidationError("config: control.cfl must lie in (0, 1]");
  if (!(noise >= 0.0)) throw ValidationError("config: recovery.noise must be >= 0");
  if (!(delta_required > 0.0)) throw ValidationError("config: recovery.delta_min must be > 0");
  if (!(c_floor > 0.0)) throw ValidationError("config: recovery.c_floor must be > 0");
  if (!(beta_amplitude >= 0.0)) throw ValidationError("config: velocity.amplitude must be >= 0");
  if (gamma.regions.empty()) throw ValidationError("config: Gamma is empty");
}

Grid Scenario::make_grid() const { return Grid(dim, extent, nodes, gamma); }

CoefficientSet Scenario::make_coefficients(const Grid& grid) const {
  CoefficientSet cs(grid);
  cs.c = c.realize(grid);
  cs.c_ref = c_ref.realize(grid);
  cs.mu = mu.realize(grid);
  std::array<ScalarField, 6> gc;
  for (int i = 0; i < 6; ++i) gc[i] = g[i].realize(grid);
  for (std::size_t n = 0; n < grid.size(); ++n) cs.g[n] = SymMat{gc[0][n], gc[1][n], dim == 3 ? gc[2][n] : 1.0,
                                                                gc[3][n], dim == 3 ? gc[4][n] : 0.0,
                                                                dim == 3 ? gc[5][n] : 0.0};
  cs.validate(grid);
  CoefficientSet ref = cs.reference();
  ref.validate(grid);

  // the unknown f = c^2 - c~^2 is carried on interior nodes only
  double fmax = 0.0, fbnd = 0.0;
  std::size_t worst = 0;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const double f = std::abs(cs.c[n] * cs.c[n] - (*cs.c_ref)[n] * (*cs.c_ref)[n]);
    fmax = std::max(fmax, f);
    if (grid.on_boundary(n) && f > fbnd) fbnd = f, worst = n;
  }
  if (fbnd > 0.05 * fmax + 1e-12) {
    const Vec3 x = grid.coords(worst);
    std::ostringstream os;
    os << "c must equal c_ref on the boundary: |c^2 - c_ref^2| = " << fbnd << " at node " << worst << " ("
       << x[0] << ", " << x[1] << (dim == 3 ? ", " + std::to_string(x[2]) : std::string()) << "), "
       << "more than 5% of its interior maximum " << fmax;
    throw ValidationError(os.str());
  }
  return cs;
}

}  // namespace confwave
