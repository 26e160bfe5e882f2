#include <doctest.h>

#include <limits>
#include <sstream>

#include "scl/csv_io.hpp"
#include "scl/design.hpp"
#include "scl/errors.hpp"

using namespace scl;

TEST_CASE("doubles round-trip through their shortest text") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.125, 2.0}) CHECK(std::stod(format_double(v)) == v);
}

TEST_CASE("csv parsing skips comments and handles quotes") {
  std::istringstream in("a,b\n# note\n\n1,\"x,y\"\n2,\"say \"\"hi\"\"\"\n");
  const auto t = parse_csv(in);
  CHECK(t.header == std::vector<std::string>{"a", "b"});
  REQUIRE(t.rows.size() == 2);
  CHECK(t.rows[0][1] == "x,y");
  CHECK(t.rows[1][1] == "say \"hi\"");
  CHECK(t.column("b") == 1);
  CHECK_THROWS_AS(t.column("c"), InvalidInput);
}

TEST_CASE("coordinate populations round-trip exactly") {
  const auto sp = uniform_disk_population(25, 4);
  std::stringstream buf;
  write_population(buf, sp);
  const auto back = parse_population(parse_csv(buf));
  CHECK(back.size() == 25);
  CHECK(back.coords() == sp.coords());
}

TEST_CASE("distance-table populations") {
  std::istringstream in("i,j,dist\n0,1,1.5\n1,0,2\n0,2,3\n2,0,3\n1,2,1\n2,1,1\n");
  const auto sp = parse_population(parse_csv(in));
  CHECK(sp.size() == 3);
  CHECK(sp.distance(1, 0) == 2.0);
  CHECK(sp.rule() == RadiusRule::identity);
  std::istringstream missing("i,j,dist\n0,1,1\n");
  CHECK_THROWS_AS(parse_population(parse_csv(missing)), InvalidInput);
}

TEST_CASE("cluster files round-trip and are validated") {
  const auto part = partition_from_assignment(std::vector<int>{0, 1, 1, 2, 0});
  std::stringstream buf;
  write_clusters(buf, part);
  CHECK(parse_clusters(parse_csv(buf), 5).assignment == part.assignment);
  std::istringstream wrong("unit_id,cluster_id\n0,0\n0,1\n");
  CHECK_THROWS_AS(parse_clusters(parse_csv(wrong), 2), InvalidInput);
}

TEST_CASE("matrices round-trip exactly") {
  Matrix m(2, 3);
  m << 1.0 / 3.0, -0.0, 5e-17, 2.0, std::numeric_limits<double>::min(), -7.25;
  std::stringstream buf;
  write_matrix(buf, m);
  CHECK(parse_matrix(parse_csv(buf)) == m);
}
