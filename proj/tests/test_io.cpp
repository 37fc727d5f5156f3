#include <filesystem>
#include <fstream>

#include "confwave/errors.hpp"
#include "confwave/io.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace confwave;

namespace {

fs::path scratch(const std::string& name) {
  fs::path d = fs::temp_directory_path() / "confwave_io_test";
  fs::create_directories(d);
  return d / name;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  std::string s;
  while (std::getline(is, s)) ++n;
  return n;
}

}  // namespace

TEST_CASE("FLD1 round trip is exact") {
  Grid g(2, {1.0, 0.7, 0.0}, {9, 8, 1}, GammaSpec::full(2));
  ScalarField f = testsupport::random_nodal_field(g, 3, false);
  f[0] = 1.0 / 3.0;
  f[1] = -1e-300;
  write_fld1(scratch("a.fld"), g, f);
  ScalarField back = read_fld1(scratch("a.fld"), g);
  CHECK(back.values() == f.values());

  std::ifstream is(scratch("a.fld"));
  std::string header;
  std::getline(is, header);
  CHECK(header.rfind("FLD1 2 9 8 ", 0) == 0);

  Grid other = Grid::unit(2, 9);
  CHECK_THROWS_AS(read_fld1(scratch("a.fld"), other), ValidationError);

  Grid c = Grid::unit(3, 8);
  ScalarField f3 = testsupport::random_nodal_field(c, 4, false);
  write_fld1(scratch("b.fld"), c, f3);
  FieldFile ff = read_fld1(scratch("b.fld"));
  CHECK(ff.dim == 3);
  CHECK(ff.matches(c));
  CHECK(ff.values == f3.values());
}

TEST_CASE("malformed files are rejected") {
  {
    std::ofstream os(scratch("bad.fld"));
    os << "FLD1 2 3 3 0.5 0.5\n1\n2\n";
  }
  CHECK_THROWS_AS(read_fld1(scratch("bad.fld")), ValidationError);
  {
    std::ofstream os(scratch("bad2.fld"));
    os << "FLD2 1 2 1.0\n1\n2\n";
  }
  CHECK_THROWS_AS(read_fld1(scratch("bad2.fld")), ValidationError);
  {
    std::ofstream os(scratch("bad3.fld"));
    os << "FLD1 1 2 1.0\n1\nabc\n";
  }
  CHECK_THROWS_AS(read_fld1(scratch("bad3.fld")), ValidationError);
  CHECK_THROWS_AS(read_fld1(scratch("missing.fld")), ValidationError);
}

TEST_CASE("TRC1 round trip") {
  BoundaryTrace t(0.0125, 7, 5);
  for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = std::sin(0.37 * i) / 7.0;
  write_trc1(scratch("m.trc"), t);
  BoundaryTrace b = read_trc1(scratch("m.trc"));
  CHECK(b.nt == 7);
  CHECK(b.n_gamma == 5);
  CHECK(b.dt == t.dt);
  CHECK(b.data == t.data);
  CHECK(line_count(scratch("m.trc")) == 9);
}

TEST_CASE("MAT1 round trip with Gram weights") {
  AssembledOperator op;
  op.matrix = Eigen::MatrixXd::Random(4, 3);
  op.domain_gram = Eigen::VectorXd::LinSpaced(3, 0.5, 1.5);
  op.codomain_gram = Eigen::VectorXd::LinSpaced(4, 1.0, 2.0);
  op.codomain = SpaceTag::GammaSpaceTime;
  write_mat1(scratch("c.mat"), op);
  CHECK(fs::exists(scratch("c.mat.gram")));
  AssembledOperator b = read_mat1(scratch("c.mat"));
  CHECK(b.matrix == op.matrix);
  CHECK(b.domain_gram == op.domain_gram);
  CHECK(b.codomain_gram == op.codomain_gram);
  CHECK(b.codomain == SpaceTag::GammaSpaceTime);
  CHECK(b.domain == SpaceTag::InteriorField);
}

TEST_CASE("CSV exports") {
  Grid g = Grid::unit(2, 32);
  ScalarField f = testsupport::random_nodal_field(g, 9, false);
  write_field_csv(scratch("f.csv"), field_file(g, f));
  CHECK(line_count(scratch("f.csv")) == 1 + 1024);

  // FLD1 -> CSV -> FLD1 keeps the values bit for bit
  FieldFile back = read_field_csv(scratch("f.csv"));
  CHECK(back.dim == 2);
  CHECK(back.matches(g));
  CHECK(back.values == f.values());
  write_fld1(scratch("f2.fld"), back);
  CHECK(read_fld1(scratch("f2.fld"), g).values() == f.values());

  BoundaryTrace empty;
  write_trace_csv(scratch("e.csv"), empty);
  CHECK(line_count(scratch("e.csv")) == 1);

  BoundaryTrace t(0.1, 2, 3);
  write_trace_csv(scratch("t.csv"), t);
  CHECK(line_count(scratch("t.csv")) == 1 + 9);

  Ray r;
  r.x = {{0, 0, 0}, {0.5, 0.25, 0}};
  r.t = {0.0, 0.5};
  write_rays_csv(scratch("r.csv"), {r, r}, 2);
  CHECK(line_count(scratch("r.csv")) == 5);
}

TEST_CASE("numbered series") {
  Grid g = Grid::unit(2, 8);
  FieldSeries s(7, ScalarField(g.size(), 1.0));
  auto files = write_series(scratch("series"), "u", g, s, 3);
  REQUIRE(files.size() == 3);  // 0, 3, 6
  CHECK(files.back().filename() == "u_00006.fld");
}
