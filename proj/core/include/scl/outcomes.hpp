#pragma once
// Potential-outcome models.
//
// LinearOutcomes is Y(d) = beta0 + A d + eps with sum(eps) = 0, so the average
// global effect is 1'A1/n. OutcomeOracle wraps an arbitrary deterministic map
// d -> Y(d) for nonlinear experiments.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "scl/design.hpp"
#include "scl/geometry.hpp"

namespace scl {

struct LinearOutcomes {
  double beta0 = 0.0;
  Matrix A;
  Vector eps;
  double theta = 0.0;  // 1'A1 / n

  std::size_t size() const { return static_cast<std::size_t>(A.rows()); }
};

// Validates shapes and the residual centering, and caches theta.
LinearOutcomes make_linear_outcomes(double beta0, Matrix A, Vector eps);

struct SimDgpOptions {
  double decay_exponent = 4.0;  // B_ij = (dist + offset)^-decay
  double offset = 1.0;
  double target_theta = 2.0;
};

// Spillover matrix A = theta* B n / 1'B1 and residual sqrt(n)/||A||_F A e,
// e i.i.d. N(0,1) from the noise stream of `seed`, re-centred to sum to 0.
LinearOutcomes make_sim_dgp(const PremetricSpace& space, std::uint64_t seed,
                            const SimDgpOptions& options = {});

struct GuessMatrix {
  Matrix A_hat;
  double strength = 0.0;  // |1'A_hat 1| / n

  double mean_total() const;  // signed 1'A_hat 1 / n
};

struct GuessOptions {
  double distance_scale = 1.1;  // B_ij = (scale * dist + 1)^-exponent * delta_ij
  double exponent = 4.25;
  double delta_lo = 0.9;
  double delta_hi = 1.0;
  double target_total = 2.0;
};

GuessMatrix make_guess(const PremetricSpace& space, std::uint64_t seed,
                       const GuessOptions& options = {});
// Throws ConstructionFailure when the strength is degenerate (<= 1e-12).
GuessMatrix make_guess_from(Matrix A_hat);

class OutcomeOracle {
 public:
  using Evaluator = std::function<Vector(std::span<const std::uint8_t>)>;

  OutcomeOracle(std::size_t n, Evaluator evaluator, double ybar)
      : n_(n), evaluator_(std::move(evaluator)), ybar_(ybar) {}

  std::size_t size() const { return n_; }
  double ybar() const { return ybar_; }
  Vector operator()(std::span<const std::uint8_t> d) const;

 private:
  std::size_t n_;
  Evaluator evaluator_;
  double ybar_;
};

OutcomeOracle as_oracle(const LinearOutcomes& outcomes);

Vector realize(const LinearOutcomes& outcomes, std::span<const std::uint8_t> d);
Vector realize(const OutcomeOracle& outcomes, std::span<const std::uint8_t> d);

double age(const LinearOutcomes& outcomes);
double age(const OutcomeOracle& outcomes);

// max_i (|beta0 + eps_i| + sum_j |A_ij|), a valid outcome bound.
double outcome_bound(const LinearOutcomes& outcomes);

// Row sums of |A| restricted to the complement of N(i, s), summed over i and
// divided by n: the share of the estimand carried by off-neighborhood spill.
double off_neighborhood_total(const Matrix& A, const PremetricSpace& space, double s);

// Y(d) for cluster-constant d, precomputed as base + (A P) b where P maps
// clusters to member indicators. Costs O(n C) per draw instead of O(n^2).
class ClusterResponse {
 public:
  ClusterResponse(const LinearOutcomes& outcomes, const ClusterPartition& partition);
  // Same construction for a bare matrix (no intercept or residual).
  ClusterResponse(const Matrix& A, const ClusterPartition& partition);

  Vector realize(std::span<const std::uint8_t> b) const;
  std::size_t clusters() const { return static_cast<std::size_t>(aggregated_.cols()); }

 private:
  Matrix aggregated_;  // n x C
  Vector base_;
};

}  // namespace scl
