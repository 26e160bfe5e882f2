#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "scl/design.hpp"
#include "scl/errors.hpp"
#include "scl/estimators.hpp"
#include "scl/oracle.hpp"
#include "scl/outcomes.hpp"
#include "scl/owopt.hpp"
#include "scl/rng.hpp"

using namespace scl;

namespace {

struct Small {
  PremetricSpace space;
  ClusterPartition partition;
  SizeGrid grid;
  double h;
};

Small small(std::size_t n, int clusters, std::uint64_t seed) {
  auto sp = uniform_disk_population(n, seed);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i) % clusters;
  auto part = partition_from_assignment(labels);
  const double h = scaling_rule(n, 1.0);
  auto grid = make_size_grid(sp, default_ow_sizes(h));
  return {std::move(sp), std::move(part), std::move(grid), h};
}

SaturationTables one_unit_tables(double s) {
  SaturationTables t;
  t.grid.sizes = {s};
  t.marg = Matrix::Ones(1, 1);
  t.partners = {{0}};
  t.blocks = {{Matrix::Ones(1, 1)}};
  return t;
}

}  // namespace

TEST_CASE("single-cluster tables put all mass at the top size") {
  const auto inst = small(12, 1, 3);
  const auto t = saturation_tables(inst.space, inst.partition, inst.grid, 0.5);
  for (std::size_t i = 0; i < 12; ++i) CHECK(t.marg(static_cast<Eigen::Index>(i), t.sizes() - 1) == doctest::Approx(1.0));
}

TEST_CASE("exact tables: row sums, marginalization and symmetry") {
  const auto inst = small(10, 5, 8);
  const auto t = saturation_tables(inst.space, inst.partition, inst.grid, 0.35);
  const auto S = t.sizes();
  for (std::size_t i = 0; i < t.units(); ++i) {
    CHECK(t.marg.row(static_cast<Eigen::Index>(i)).sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t k = 0; k < t.partners[i].size(); ++k) {
      const auto j = static_cast<std::size_t>(t.partners[i][k]);
      const Matrix& B = t.blocks[i][k];
      CHECK((B.rowwise().sum() - t.marg.row(static_cast<Eigen::Index>(i)).transpose()).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((B.colwise().sum() - t.marg.row(static_cast<Eigen::Index>(j))).cwiseAbs().maxCoeff() < 1e-9);
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t u = 0; u < S; ++u) CHECK(t.joint(i, s, j, u) == doctest::Approx(t.joint(j, u, i, s)));
    }
  }
}

TEST_CASE("tables are invariant under swapping treated and untreated labels") {
  const auto inst = small(10, 4, 2);
  const auto a = saturation_tables(inst.space, inst.partition, inst.grid, 0.3);
  const auto b = saturation_tables(inst.space, inst.partition, inst.grid, 0.7);
  CHECK((a.marg - b.marg).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("production tables agree with the unit-level oracle") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto inst = small(9, 4, seed);
    const auto t = saturation_tables(inst.space, inst.partition, inst.grid, 0.5);
    const auto o = exact_saturation_tables(inst.partition, inst.space, inst.grid, 0.5);
    CHECK((t.marg - o.marg).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(t.partners == o.partners);
    for (std::size_t i = 0; i < t.units(); ++i)
      for (std::size_t k = 0; k < t.partners[i].size(); ++k)
        CHECK((t.blocks[i][k] - o.blocks[i][k]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("monte carlo tables converge to the exact tables") {
  const auto inst = small(8, 4, 5);
  TableOptions mc;
  mc.method = TableMethod::monte_carlo;
  mc.draws = 200000;
  mc.seed = 17;
  const auto a = saturation_tables(inst.space, inst.partition, inst.grid, 0.5, mc);
  const auto e = saturation_tables(inst.space, inst.partition, inst.grid, 0.5);
  CHECK((a.marg - e.marg).cwiseAbs().maxCoeff() < 0.01);
  for (std::size_t i = 0; i < a.units(); ++i)
    for (std::size_t k = 0; k < a.partners[i].size(); ++k)
      CHECK((a.blocks[i][k] - e.blocks[i][k]).cwiseAbs().maxCoeff() < 0.01);
  CHECK(a.draws == 200000);
}

TEST_CASE("exact tables refuse more than 20 clusters") {
  const auto sp = uniform_disk_population(25, 1);
  const auto part = singleton_partition(25);
  const auto grid = make_size_grid(sp, default_ow_sizes(3.0));
  CHECK_THROWS_AS(saturation_tables(sp, part, grid, 0.5), InvalidInput);
}

TEST_CASE("objective on one unit and one size") {
  InterferenceBudget budget;
  budget.eta = 1.5;
  budget.k1 = 0.7;
  budget.ybar = 2.0;
  budget.k_effects = 1.0;
  const double s = 3.0;
  const Matrix Q = assemble_objective(one_unit_tables(s), budget);
  REQUIRE(Q.rows() == 1);
  CHECK(Q(0, 0) == doctest::Approx(2.0 * 4.0 + 0.49 * std::pow(s, -3.0)));

  const auto res = solve_qp(Q, Matrix::Constant(1, 1, 0.4), 0.5);
  CHECK(res.W(0, 0) == doctest::Approx(1.0 / (0.5 * 1 * 0.4)));
}

TEST_CASE("objective matches a direct double sum over the tables") {
  const auto inst = small(6, 3, 4);
  const auto t = saturation_tables(inst.space, inst.partition, inst.grid, 0.5);
  InterferenceBudget budget;
  budget.k1 = 1.3;
  budget.ybar = 1.1;
  const Matrix Q = assemble_objective(t, budget);
  CounterRng rng(4, Stream::audit);
  Matrix W(6, static_cast<Eigen::Index>(t.sizes()));
  for (auto& x : W.reshaped()) x = rng.uniform();
  double direct = 0.0;
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t s = 0; s < t.sizes(); ++s)
        for (std::size_t u = 0; u < t.sizes(); ++u) {
          const double k = 2.0 * 1.1 * 1.1 + 1.3 * 1.3 / (t.grid.sizes[s] * t.grid.sizes[u]);
          direct += t.joint(i, s, j, u) * W(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) *
                    W(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(u)) * k;
        }
  CHECK(objective_value(Q, W) == doctest::Approx(direct).epsilon(1e-10));

  budget.k1 = 0.0;
  const Matrix Q0 = assemble_objective(t, budget);
  const std::size_t S = t.sizes();
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t j = 0; j < 6; ++j)
      for (std::size_t s = 0; s < S; ++s)
        for (std::size_t u = 0; u < S; ++u)
          CHECK(Q0(static_cast<Eigen::Index>(i * S + s), static_cast<Eigen::Index>(j * S + u)) ==
                doctest::Approx(2.0 * 1.1 * 1.1 * t.joint(i, s, j, u)));
}

TEST_CASE("weighted simplex projection") {
  CounterRng rng(6, Stream::audit);
  for (int trial = 0; trial < 50; ++trial) {
    Vector v(5), a(5);
    for (int k = 0; k < 5; ++k) {
      v(k) = rng.normal();
      a(k) = rng.uniform(0.1, 1.0);
    }
    const double r = rng.uniform(0.1, 2.0);
    const Vector w = project_weighted_simplex(v, a, r);
    CHECK(w.minCoeff() >= 0.0);
    CHECK(a.dot(w) == doctest::Approx(r).epsilon(1e-12));
    // Any other feasible point is at least as far from v.
    for (int k = 0; k < 20; ++k) {
      Vector u(5);
      for (auto& x : u) x = rng.uniform();
      u *= r / a.dot(u);
      CHECK((w - v).norm() <= (u - v).norm() + 1e-12);
    }
  }
}

TEST_CASE("optimized weights are feasible and improve on the ipw start") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const auto inst = small(10, 5, seed);
    const double p = seed % 2 ? 0.5 : 0.3;
    const auto t = saturation_tables(inst.space, inst.partition, inst.grid, p);
    InterferenceBudget budget;
    budget.k1 = 1.0;
    budget.ybar = 1.0;
    const auto res = optimize_weights(t, budget, inst.h, p);
    CHECK(res.converged);
    CHECK(res.kkt_residual < 1e-7);
    CHECK(res.W.minCoeff() >= 0.0);
    const Vector lhs = (res.W.array() * t.marg.array()).rowwise().sum();
    CHECK((lhs.array() - 1.0 / (p * 10.0)).abs().maxCoeff() < 1e-8);
    CHECK(res.objective <= res.start_objective + 1e-12);
    const Matrix ipw = ipw_weight_table(t, inst.h, p);
    CHECK(res.start_objective == doctest::Approx(objective_value(assemble_objective(t, budget), ipw)));
  }
}

TEST_CASE("ipw table reproduces horvitz-thompson at p = 1/2") {
  const auto inst = small(10, 5, 7);
  const auto t = saturation_tables(inst.space, inst.partition, inst.grid, 0.5);
  OwWeightTable table;
  table.grid = inst.grid;
  table.W = ipw_weight_table(t, inst.h, 0.5);
  const auto out = make_sim_dgp(inst.space, 7);
  const auto sets = neighborhood_clusters(inst.space, inst.partition, inst.h);
  const auto e = enumerate(inst.partition, 0.5);
  for (std::size_t k = 0; k < e.size(); ++k) {
    const auto b = e.bits(k);
    const auto d = unit_treatments(inst.partition, b);
    const Vector Y = realize(out, d);
    const auto prof = saturation(inst.space, d, inst.grid);
    CHECK(ow_estimate(Y, d, prof, table).estimate == doctest::Approx(ipw_ht(Y, b, sets, 0.5).estimate).epsilon(1e-12));
    CHECK(ow_estimate(Vector::Zero(10), d, prof, table).estimate == 0.0);
  }
}

TEST_CASE("conditional expectation of the optimized weights is 1/(pn)") {
  const auto inst = small(8, 4, 9);
  const auto t = saturation_tables(inst.space, inst.partition, inst.grid, 0.5);
  InterferenceBudget budget;
  const auto res = optimize_weights(t, budget, inst.h, 0.5);
  const auto e = enumerate(inst.partition, 0.5);
  for (std::size_t i = 0; i < 8; ++i) {
    const auto fn = [&](std::span<const std::uint8_t> b) -> std::optional<double> {
      const auto d = unit_treatments(inst.partition, b);
      if (!d[i]) return std::nullopt;
      const auto prof = saturation(inst.space, d, inst.grid);
      return res.W(static_cast<Eigen::Index>(i), prof.index[i]);
    };
    const auto ex = exact_expectation(fn, e);
    CHECK(ex.p_defined == doctest::Approx(0.5));
    CHECK(ex.value == doctest::Approx(1.0 / (0.5 * 8)).epsilon(1e-8));
  }
}

TEST_CASE("ow estimate rejects a profile on another grid") {
  const auto inst = small(8, 4, 1);
  OwWeightTable table;
  table.grid = inst.grid;
  table.W = Matrix::Ones(8, static_cast<Eigen::Index>(inst.grid.size()));
  const auto other = make_size_grid(inst.space, std::vector<double>{1.0, 2.0});
  const std::vector<std::uint8_t> d(8, 1);
  CHECK_THROWS_AS(ow_estimate(Vector::Ones(8), d, saturation(inst.space, d, other), table), InvalidInput);
}
