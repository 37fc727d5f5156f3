#include "confwave/io.hpp"

#include <cstdio>
#include <fstream>
#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <sstream>

#include "confwave/errors.hpp"

namespace confwave {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read " + path.string());
  return is;
}

std::vector<double> read_values(std::istream& is, std::size_t count, const fs::path& path) {
  std::vector<double> v(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::string tok;
    if (!(is >> tok)) throw ValidationError(path.string() + ": expected " + std::to_string(count) + " values, got " + std::to_string(i));
    try {
      std::size_t used = 0;
      v[i] = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ValidationError(path.string() + ": bad number '" + tok + "'");
    }
  }
  std::string extra;
  if (is >> extra) throw ValidationError(path.string() + ": trailing data after " + std::to_string(count) + " values");
  return v;
}

SpaceTag parse_tag(const std::string& s) {
  for (SpaceTag t : {SpaceTag::InteriorField, SpaceTag::FullField, SpaceTag::GammaTrace, SpaceTag::GammaSpaceTime,
                     SpaceTag::InteriorSpaceTime})
    if (s == to_string(t)) return t;
  throw ValidationError("unknown space tag '" + s + "'");
}

}  // namespace

bool FieldFile::matches(const Grid& grid) const {
  if (dim != grid.dim()) return false;
  for (int a = 0; a < dim; ++a) {
    if (n[a] != grid.count(a)) return false;
    if (std::abs(h[a] - grid.h(a)) > 1e-12 * grid.h(a)) return false;
  }
  return true;
}

FieldFile field_file(const Grid& grid, const ScalarField& f) {
  if (f.size() != grid.size()) throw ValidationError("field size does not match the grid");
  FieldFile out;
  out.dim = grid.dim();
  for (int a = 0; a < grid.dim(); ++a) {
    out.n[a] = grid.count(a);
    out.h[a] = grid.h(a);
  }
  out.values = f.values();
  return out;
}

void write_fld1(const fs::path& path, const FieldFile& f) {
  if (f.values.size() != f.size()) throw ValidationError("FLD1: value count does not match the lattice");
  std::ofstream os = open_out(path);
  os << "FLD1 " << f.dim;
  for (int a = 0; a < f.dim; ++a) os << ' ' << f.n[a];
  for (int a = 0; a < f.dim; ++a) os << ' ' << format_double(f.h[a]);
  os << '\n';
  for (double v : f.values) os << format_double(v) << '\n';
}

void write_fld1(const fs::path& path, const Grid& grid, const ScalarField& f) { write_fld1(path, field_file(grid, f)); }

FieldFile read_fld1(const fs::path& path) {
  std::ifstream is = open_in(path);
  std::string magic;
  FieldFile f;
  if (!(is >> magic >> f.dim) || magic != "FLD1") throw ValidationError(path.string() + ": not an FLD1 file");
  if (f.dim < 1 || f.dim > 3) throw ValidationError(path.string() + ": dimension must be 1..3");
  for (int a = 0; a < f.dim; ++a)
    if (!(is >> f.n[a]) || f.n[a] < 1) throw ValidationError(path.string() + ": bad node count");
  for (int a = 0; a < f.dim; ++a)
    if (!(is >> f.h[a]) || !(f.h[a] > 0.0)) throw ValidationError(path.string() + ": bad spacing");
  f.values = read_values(is, f.size(), path);
  return f;
}

ScalarField read_fld1(const fs::path& path, const Grid& grid) {
  FieldFile f = read_fld1(path);
  if (!f.matches(grid)) throw ValidationError(path.string() + ": lattice does not match the scenario grid");
  return ScalarField(std::move(f.values));
}

void write_trc1(const fs::path& path, const BoundaryTrace& t) {
  std::ofstream os = open_out(path);
  os << "TRC1 " << t.nt << ' ' << format_double(t.dt) << ' ' << t.n_gamma << '\n';
  for (int k = 0; k <= t.nt; ++k) {
    for (int s = 0; s < t.n_gamma; ++s) os << (s ? " " : "") << format_double(t.at(k, s));
    os << '\n';
  }
}

BoundaryTrace read_trc1(const fs::path& path) {
  std::ifstream is = open_in(path);
  std::string magic;
  int nt = 0, ng = 0;
  double dt = 0.0;
  if (!(is >> magic >> nt >> dt >> ng) || magic != "TRC1") throw ValidationError(path.string() + ": not a TRC1 file");
  if (nt < 0 || ng < 0) throw ValidationError(path.string() + ": bad TRC1 header");
  BoundaryTrace t(dt, nt, ng);
  t.data = read_values(is, t.data.size(), path);
  return t;
}

void write_mat1(const fs::path& path, const AssembledOperator& op) {
  {
    std::ofstream os = open_out(path);
    os << "MAT1 " << op.matrix.rows() << ' ' << op.matrix.cols() << '\n';
    for (Eigen::Index i = 0; i < op.matrix.rows(); ++i)
      for (Eigen::Index j = 0; j < op.matrix.cols(); ++j) os << format_double(op.matrix(i, j)) << '\n';
  }
  std::ofstream gs = open_out(fs::path(path.string() + ".gram"));
  gs << "GRAM1 " << op.domain_gram.size() << ' ' << op.codomain_gram.size() << ' ' << to_string(op.domain) << ' '
     << to_string(op.codomain) << '\n';
  for (double v : op.domain_gram) gs << format_double(v) << '\n';
  for (double v : op.codomain_gram) gs << format_double(v) << '\n';
}

AssembledOperator read_mat1(const fs::path& path) {
  AssembledOperator op;
  {
    std::ifstream is = open_in(path);
    std::string magic;
    long r = 0, c = 0;
    if (!(is >> magic >> r >> c) || magic != "MAT1" || r < 0 || c < 0) throw ValidationError(path.string() + ": not a MAT1 file");
    std::vector<double> v = read_values(is, static_cast<std::size_t>(r * c), path);
    op.matrix = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(v.data(), r, c);
  }
  const fs::path gp(path.string() + ".gram");
  std::ifstream gs = open_in(gp);
  std::string magic, dtag, ctag;
  long nd = 0, nc = 0;
  if (!(gs >> magic >> nd >> nc >> dtag >> ctag) || magic != "GRAM1") throw ValidationError(gp.string() + ": not a GRAM1 file");
  if (nd != op.matrix.cols() || nc != op.matrix.rows()) throw ValidationError(gp.string() + ": Gram sizes do not match the matrix");
  op.domain = parse_tag(dtag);
  op.codomain = parse_tag(ctag);
  std::vector<double> v = read_values(gs, static_cast<std::size_t>(nd + nc), gp);
  op.domain_gram = Eigen::Map<Eigen::VectorXd>(v.data(), nd);
  op.codomain_gram = Eigen::Map<Eigen::VectorXd>(v.data() + nd, nc);
  return op;
}

std::vector<fs::path> write_series(const fs::path& dir, const std::string& stem, const Grid& grid,
                                   const FieldSeries& series, int stride) {
  if (stride < 1) throw ValidationError("write_series: stride must be >= 1");
  std::vector<fs::path> out;
  const int last = static_cast<int>(series.size()) - 1;
  for (int k = 0; k <= last; ++k) {
    if (k % stride != 0 && k != last) continue;
    char name[64];
    std::snprintf(name, sizeof name, "_%05d.fld", k);
    out.push_back(dir / (stem + name));
    write_fld1(out.back(), grid, series[k]);
  }
  return out;
}

void write_field_csv(const fs::path& path, const FieldFile& f) {
  if (f.values.size() != f.size()) throw ValidationError("CSV export: value count does not match the lattice");
  std::ofstream os = open_out(path);
  const char* axes[] = {"x", "y", "z"};
  for (int a = 0; a < f.dim; ++a) os << axes[a] << ',';
  os << "value\n";
  std::size_t m = 0;
  for (int i = 0; i < f.n[0]; ++i)
    for (int j = 0; j < f.n[1]; ++j)
      for (int k = 0; k < f.n[2]; ++k, ++m) {
        const int idx[3] = {i, j, k};
        for (int a = 0; a < f.dim; ++a) os << format_double(idx[a] * f.h[a]) << ',';
        os << format_double(f.values[m]) << '\n';
      }
}

FieldFile read_field_csv(const fs::path& path) {
  std::ifstream is = open_in(path);
  std::string line;
  if (!std::getline(is, line)) throw ValidationError(path.string() + ": empty CSV");
  const int dim = static_cast<int>(std::count(line.begin(), line.end(), ','));
  if (dim < 1 || dim > 3) throw ValidationError(path.string() + ": expected 2-4 columns");
  std::array<std::set<double>, 3> coords;
  std::vector<double> values;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    for (int a = 0; a <= dim; ++a) {
      if (!std::getline(ss, cell, ',')) throw ValidationError(path.string() + ": short row '" + line + "'");
      const double v = std::stod(cell);
      if (a < dim) coords[a].insert(v);
      else values.push_back(v);
    }
  }
  FieldFile f;
  f.dim = dim;
  for (int a = 0; a < dim; ++a) {
    f.n[a] = static_cast<int>(coords[a].size());
    f.h[a] = f.n[a] > 1 ? *coords[a].rbegin() / (f.n[a] - 1) : 1.0;
  }
  if (values.size() != f.size()) throw ValidationError(path.string() + ": rows do not form a full lattice");
  f.values = std::move(values);
  return f;
}

void write_trace_csv(const fs::path& path, const BoundaryTrace& t) {
  std::ofstream os = open_out(path);
  os << "t,node,value\n";
  if (t.n_gamma == 0 || t.data.empty()) return;
  for (int k = 0; k <= t.nt; ++k) {
    const std::string tk = format_double(k * t.dt);
    for (int s = 0; s < t.n_gamma; ++s) os << tk << ',' << s << ',' << format_double(t.at(k, s)) << '\n';
  }
}

void write_rays_csv(const fs::path& path, const std::vector<Ray>& rays, int dim) {
  std::ofstream os = open_out(path);
  const char* axes[] = {"x", "y", "z"};
  os << "ray,step,t";
  for (int a = 0; a < dim; ++a) os << ',' << axes[a];
  os << '\n';
  for (std::size_t r = 0; r < rays.size(); ++r)
    for (std::size_t s = 0; s < rays[r].x.size(); ++s) {
      os << r << ',' << s << ',' << format_double(rays[r].t[s]);
      for (int a = 0; a < dim; ++a) os << ',' << format_double(rays[r].x[s][a]);
      os << '\n';
    }
}

}  // namespace confwave
