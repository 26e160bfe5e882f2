#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "scl/errors.hpp"
#include "scl/geometry.hpp"
#include "scl/outcomes.hpp"
#include "scl/rng.hpp"

using namespace scl;

namespace {

PremetricSpace line(int n, double spacing = 1.0) {
  Matrix c(n, 1);
  for (int i = 0; i < n; ++i) c(i, 0) = spacing * i;
  return PremetricSpace::from_coords(c);
}

}  // namespace

TEST_CASE("collinear distances and neighborhoods") {
  const auto sp = line(3);
  CHECK(sp.distance(0, 2) == 2.0);
  CHECK(neighborhood(sp, 0, 1.0) == std::vector<int>{0, 1});
  CHECK(neighborhood(sp, 1, 1.0) == std::vector<int>{0, 1, 2});
  CHECK(neighborhood(sp, 0, 0.5) == std::vector<int>{0});
  CHECK(neighborhood(sp, 0, 10.0) == std::vector<int>{0, 1, 2});
}

TEST_CASE("singleton space") {
  Matrix c(1, 2);
  c << 0.0, 0.0;
  const auto sp = PremetricSpace::from_coords(c);
  for (double s : {0.1, 1.0, 100.0}) CHECK(neighborhood(sp, 0, s) == std::vector<int>{0});
}

TEST_CASE("invalid input is rejected") {
  Matrix dup(2, 2);
  dup << 1.0, 1.0, 1.0, 1.0;
  CHECK_THROWS_AS(PremetricSpace::from_coords(dup), InvalidInput);
  Matrix bad(1, 1);
  bad << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(PremetricSpace::from_coords(bad), InvalidInput);
  CHECK_THROWS_AS(neighborhood(line(3), 0, 0.0), InvalidInput);
  CHECK_THROWS_AS(neighborhood(line(3), 0, -1.0), InvalidInput);
  CHECK_THROWS_AS(PremetricSpace::from_distances({0.0, 0.0, 1.0, 0.0}, 2), InvalidInput);
}

TEST_CASE("euclidean radius rule uses s^(1/q)") {
  const auto sp = uniform_disk_population(50, 3);
  CHECK(sp.radius(9.0) == doctest::Approx(3.0));
  CHECK(sp.size_for_radius(3.0) == doctest::Approx(9.0));
}

TEST_CASE("distance tables use the identity radius and may be asymmetric") {
  const auto sp = PremetricSpace::from_distances({0.0, 1.0, 3.0, 2.0, 0.0, 1.0, 1.0, 5.0, 0.0}, 3);
  CHECK(sp.rule() == RadiusRule::identity);
  CHECK_FALSE(sp.symmetric());
  CHECK(neighborhood(sp, 0, 1.0) == std::vector<int>{0, 1});
  CHECK(neighborhood(sp, 1, 1.0) == std::vector<int>{1, 2});
  CHECK(reverse_neighborhood(sp, 0, 1.0) == std::vector<int>{0, 2});
}

TEST_CASE("neighborhoods are reflexive, monotone and match a direct scan") {
  const auto sp = uniform_disk_population(300, 11);
  CounterRng rng(5, Stream::audit);
  for (int trial = 0; trial < 200; ++trial) {
    const auto i = static_cast<std::size_t>(rng.below(sp.size()));
    double s1 = rng.uniform(0.01, 40.0);
    double s2 = rng.uniform(0.01, 40.0);
    if (s1 > s2) std::swap(s1, s2);
    const auto a = neighborhood(sp, i, s1);
    const auto b = neighborhood(sp, i, s2);
    CHECK(std::binary_search(a.begin(), a.end(), static_cast<int>(i)));
    CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    std::size_t direct = 0;
    for (std::size_t j = 0; j < sp.size(); ++j) {
      const double dx = sp.coords()(i, 0) - sp.coords()(j, 0);
      const double dy = sp.coords()(i, 1) - sp.coords()(j, 1);
      if (std::sqrt(dx * dx + dy * dy) <= std::sqrt(s1)) ++direct;
    }
    CHECK(a.size() == direct);
  }
}

TEST_CASE("audit on a unit-spaced line") {
  const auto sp = line(20);
  const std::vector<double> grid{4.0};
  const auto audit = audit_geometry(sp, grid);
  CHECK(audit.k3_hat == doctest::Approx(2.0));
}

TEST_CASE("audit of a single unit") {
  Matrix c(1, 2);
  c << 0.0, 0.0;
  const auto sp = PremetricSpace::from_coords(c);
  const std::vector<double> grid{1.0, 2.0};
  const auto audit = audit_geometry(sp, grid);
  CHECK(audit.k3_hat == 0.0);
  CHECK(audit.k5_hat == 1.0);
}

TEST_CASE("bounded density holds with the audited constant on a 500-unit disk") {
  const auto sp = uniform_disk_population(500, 500);
  std::vector<double> grid;
  for (int s = 1; s <= 50; ++s) grid.push_back(s);
  AuditOptions options;
  options.max_centers = 50;
  const auto audit = audit_geometry(sp, grid, {}, options);
  for (std::size_t i = 0; i < sp.size(); ++i)
    for (double s : grid) CHECK(sp.neighborhood_size(i, s) <= audit.k3_hat * s + 1.0 + 1e-9);
  CHECK(audit.k5_hat <= 9.0);
}

TEST_CASE("greedy cover and packing validity") {
  const auto sp = uniform_disk_population(200, 17);
  std::vector<int> all(sp.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  for (double s : {1.0, 4.0, 9.0}) {
    const auto cover = greedy_subset_cover(sp, all, s);
    for (std::size_t j = 0; j < sp.size(); ++j) {
      bool covered = false;
      for (int c : cover) covered = covered || sp.distance(static_cast<std::size_t>(c), j) <= sp.radius(s);
      CHECK(covered);
    }
    const auto packing = greedy_packing(sp, all, s);
    for (std::size_t i = 0; i < sp.size(); ++i) {
      int hits = 0;
      for (int c : packing) hits += sp.distance(i, static_cast<std::size_t>(c)) <= sp.radius(s);
      CHECK(hits <= 1);
    }
  }
}

TEST_CASE("interference audit") {
  const auto sp = uniform_disk_population(100, 4);
  InterferenceBudget budget;
  budget.k1 = 0.0;
  CHECK(audit_interference(Matrix::Zero(100, 100), sp, budget).pass);
  Matrix diag = Matrix::Zero(100, 100);
  diag.diagonal().setConstant(3.0);
  budget.eta = 5.0;
  CHECK(audit_interference(diag, sp, budget).pass);

  const auto out = make_sim_dgp(sp, 4);
  budget.eta = 1.0;
  budget.k1 = fit_interference_constant(out.A, sp, 1.0);
  CHECK(std::isfinite(budget.k1));
  CHECK(audit_interference(out.A, sp, budget).pass);
  budget.k1 *= 0.9;
  CHECK_FALSE(audit_interference(out.A, sp, budget).pass);
}

TEST_CASE("budget validation") {
  InterferenceBudget budget;
  budget.k_effects = 2.0;
  budget.ybar = 1.0;
  CHECK_THROWS_AS(budget.validate(), InvalidInput);
}
