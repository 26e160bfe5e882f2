#pragma once
// Optimized weights (OW).
//
// Weights depend on a unit's own treatment and its saturation size s_tilde:
// w_i(s, d) = (2d - 1) W[i][s] with W >= 0 and E[W[i][s_tilde_i]] = 1/(p n).
// W minimizes the MSE bound sum_ij sum_st P(s_i = s, s_j = t) W_is W_jt
// (2 Ybar^2 + K1^2 (s t)^-eta), a convex QP over the saturation tables.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scl/design.hpp"
#include "scl/estimators.hpp"
#include "scl/geometry.hpp"

namespace scl {

enum class TableMethod { exact, monte_carlo };

struct TableOptions {
  TableMethod method = TableMethod::exact;
  std::size_t draws = 100000;  // Monte Carlo only
  std::uint64_t seed = 0;
};

// Largest cluster count accepted by exhaustive enumeration.
inline constexpr std::size_t kMaxExactClusters = 20;

struct SaturationTables {
  SizeGrid grid;
  Matrix marg;  // n x |S|, P(s_tilde_i = s)
  // partners[i]: units j (ascending, i included) whose max-grid neighborhoods
  // share a cluster with i's; blocks[i][k] is the |S| x |S| table
  // P(s_tilde_i = s, s_tilde_j = t) for j = partners[i][k].
  std::vector<std::vector<int>> partners;
  std::vector<std::vector<Matrix>> blocks;
  TableMethod method = TableMethod::exact;
  std::size_t draws = 0;
  std::uint64_t seed = 0;

  std::size_t units() const { return static_cast<std::size_t>(marg.rows()); }
  std::size_t sizes() const { return static_cast<std::size_t>(marg.cols()); }
  // Null for non-interacting pairs.
  const Matrix* block(std::size_t i, std::size_t j) const;
  // Tabulated value, or the product of marginals for non-interacting pairs.
  double joint(std::size_t i, std::size_t s, std::size_t j, std::size_t t) const;
};

SaturationTables saturation_tables(const PremetricSpace& space, const ClusterPartition& partition,
                                   const SizeGrid& grid, double p, const TableOptions& options = {});

// Dense quadratic form over (i, s) flattened row-major as i * |S| + s.
Matrix assemble_objective(const SaturationTables& tables, const InterferenceBudget& budget);

// Flattening of an n x |S| weight table into the QP variable.
Vector flatten(const Matrix& W);
Matrix unflatten(const Vector& w, std::size_t n, std::size_t sizes);
double objective_value(const Matrix& Q, const Matrix& W);

// IPW weights as a table: c_i 1{s >= h}, c_i chosen so the expectation
// constraint holds exactly. Falls back to the largest reachable size when
// P(s_tilde_i >= h) = 0.
Matrix ipw_weight_table(const SaturationTables& tables, double h, double p);

struct SolverOptions {
  double tolerance = 1e-7;
  std::size_t max_iterations = 50000;
  std::size_t polish_every = 100;
};

struct OwWeightTable {
  SizeGrid grid;
  Matrix W;  // n x |S|, nonnegative
  double objective = 0.0;
  double start_objective = 0.0;
  double kkt_residual = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

// min w'Qw s.t. sum_s W[i][s] marg[i][s] = 1/(p n), W >= 0. Accelerated
// projected gradient from `start` (the constant feasible table when empty)
// with periodic equality-constrained polishing on the active support.
OwWeightTable solve_qp(const Matrix& Q, const Matrix& marg, double p, const Matrix& start = {},
                       const SolverOptions& options = {});

// Assembles the objective and solves from the IPW table at size h.
OwWeightTable optimize_weights(const SaturationTables& tables, const InterferenceBudget& budget,
                               double h, double p, const SolverOptions& options = {});

// Projection of v onto {w >= 0, a'w = r} for a > 0 (entries with a = 0 are
// zeroed). Exact, by sorting breakpoints.
Vector project_weighted_simplex(const Vector& v, const Vector& a, double r);

// ||W - P(W - grad)||_inf for the constraint set of solve_qp.
double kkt_residual(const Matrix& Q, const Matrix& marg, double p, const Matrix& W);

// sum_i (2 d_i - 1) W[i][s_tilde_i] Y_i.
EstimateReport ow_estimate(const Vector& Y, std::span<const std::uint8_t> d,
                           const SaturationProfile& profile, const OwWeightTable& weights);

}  // namespace scl
