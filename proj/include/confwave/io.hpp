#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <string>
#include <vector>

#include "confwave/control.hpp"
#include "confwave/fields.hpp"
#include "confwave/gcc.hpp"
#include "confwave/grid.hpp"
#include "confwave/wave.hpp"

namespace confwave {

namespace fs = std::filesystem;

// FLD1: "FLD1 <dim> <n1> [n2 [n3]] <h1> [h2 [h3]]", then one value per line, row-major.
struct FieldFile {
  int dim = 2;
  Index3 n{1, 1, 1};
  Vec3 h{1.0, 1.0, 1.0};
  std::vector<double> values;

  std::size_t size() const { return static_cast<std::size_t>(n[0]) * n[1] * n[2]; }
  // true when the lattice matches the grid (counts exactly, spacings to 1e-12 relative)
  bool matches(const Grid& grid) const;
};

FieldFile field_file(const Grid& grid, const ScalarField& f);
void write_fld1(const fs::path& path, const FieldFile& f);
void write_fld1(const fs::path& path, const Grid& grid, const ScalarField& f);
FieldFile read_fld1(const fs::path& path);
// Throws ValidationError when the file's lattice differs from the grid.
ScalarField read_fld1(const fs::path& path, const Grid& grid);

// TRC1: "TRC1 <nt> <dt> <nGamma>", then nt+1 lines of nGamma values.
void write_trc1(const fs::path& path, const BoundaryTrace& t);
BoundaryTrace read_trc1(const fs::path& path);

// MAT1: "MAT1 <rows> <cols>", row-major values. The Gram weights go to <path>.gram:
// "GRAM1 <n_domain> <n_codomain>", domain weights, then codomain weights.
void write_mat1(const fs::path& path, const AssembledOperator& op);
AssembledOperator read_mat1(const fs::path& path);

// Numbered FLD1 snapshots <dir>/<stem>_<k>.fld every `stride` levels (and the last).
std::vector<fs::path> write_series(const fs::path& dir, const std::string& stem, const Grid& grid,
                                   const FieldSeries& series, int stride = 1);

// CSV exports with fixed ordering and %.17g values.
void write_field_csv(const fs::path& path, const FieldFile& f);          // x,y[,z],value
FieldFile read_field_csv(const fs::path& path);                          // inverse of the above
void write_trace_csv(const fs::path& path, const BoundaryTrace& t);      // t,node,value
void write_rays_csv(const fs::path& path, const std::vector<Ray>& rays, int dim);  // ray,step,t,x,y[,z]

// %.17g
std::string format_double(double v);

}  // namespace confwave
