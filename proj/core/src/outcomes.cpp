#include "scl/outcomes.hpp"

#include <cmath>

#include "scl/errors.hpp"
#include "scl/rng.hpp"

namespace scl {

LinearOutcomes make_linear_outcomes(double beta0, Matrix A, Vector eps) {
  const auto n = A.rows();
  if (n == 0 || A.cols() != n) throw InvalidInput("spillover matrix must be square and nonempty");
  if (eps.size() != n) throw InvalidInput("residual vector length must match the matrix");
  if (!A.allFinite() || !eps.allFinite() || !std::isfinite(beta0)) {
    throw InvalidInput("outcome model parameters must be finite");
  }
  if (std::abs(eps.sum()) > 1e-9 * static_cast<double>(n)) {
    throw InvalidInput("residuals must sum to zero");
  }
  LinearOutcomes out;
  out.beta0 = beta0;
  out.theta = A.sum() / static_cast<double>(n);
  out.A = std::move(A);
  out.eps = std::move(eps);
  return out;
}

namespace {

Matrix normalized_decay(const PremetricSpace& space, double scale, double offset, double exponent,
                        double target_total, const std::function<double()>& jitter) {
  const auto n = static_cast<Eigen::Index>(space.size());
  Matrix B(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = space.distance(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      B(i, j) = std::pow(scale * d + offset, -exponent) * jitter();
    }
  }
  const double total = B.sum();
  if (!(total > 0.0)) throw ConstructionFailure("decay kernel has zero mass");
  return B * (target_total * static_cast<double>(n) / total);
}

}  // namespace

LinearOutcomes make_sim_dgp(const PremetricSpace& space, std::uint64_t seed,
                            const SimDgpOptions& options) {
  const auto n = static_cast<Eigen::Index>(space.size());
  Matrix A = normalized_decay(space, 1.0, options.offset, options.decay_exponent,
                              options.target_theta, [] { return 1.0; });

  CounterRng rng(seed, Stream::noise);
  Vector e(n);
  for (Eigen::Index i = 0; i < n; ++i) e(i) = rng.normal();
  Vector resid = (std::sqrt(static_cast<double>(n)) / A.norm()) * (A * e);
  resid.array() -= resid.mean();
  return make_linear_outcomes(0.0, std::move(A), std::move(resid));
}

double GuessMatrix::mean_total() const {
  return A_hat.sum() / static_cast<double>(A_hat.rows());
}

GuessMatrix make_guess_from(Matrix A_hat) {
  if (A_hat.rows() == 0 || A_hat.rows() != A_hat.cols()) {
    throw InvalidInput("guess matrix must be square and nonempty");
  }
  if (!A_hat.allFinite()) throw InvalidInput("guess matrix must be finite");
  GuessMatrix guess;
  guess.strength = std::abs(A_hat.sum()) / static_cast<double>(A_hat.rows());
  if (!(guess.strength > 1e-12)) throw ConstructionFailure("guess matrix has degenerate strength");
  guess.A_hat = std::move(A_hat);
  return guess;
}

GuessMatrix make_guess(const PremetricSpace& space, std::uint64_t seed,
                       const GuessOptions& options) {
  if (!(options.delta_lo <= options.delta_hi)) throw InvalidInput("empty perturbation range");
  CounterRng rng(seed, Stream::guess);
  auto jitter = [&] { return rng.uniform(options.delta_lo, options.delta_hi); };
  return make_guess_from(normalized_decay(space, options.distance_scale, 1.0, options.exponent,
                                          options.target_total, jitter));
}

Vector OutcomeOracle::operator()(std::span<const std::uint8_t> d) const {
  if (d.size() != n_) throw InvalidInput("treatment vector length mismatch");
  Vector y = evaluator_(d);
  if (static_cast<std::size_t>(y.size()) != n_) throw InvalidInput("oracle returned wrong length");
  return y;
}

OutcomeOracle as_oracle(const LinearOutcomes& outcomes) {
  return OutcomeOracle(
      outcomes.size(), [&outcomes](std::span<const std::uint8_t> d) { return realize(outcomes, d); },
      outcome_bound(outcomes));
}

Vector realize(const LinearOutcomes& outcomes, std::span<const std::uint8_t> d) {
  const std::size_t n = outcomes.size();
  if (d.size() != n) throw InvalidInput("treatment vector length mismatch");
  Vector dv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] > 1) throw InvalidInput("treatments must be 0 or 1");
    dv(static_cast<Eigen::Index>(i)) = d[i];
  }
  Vector y = outcomes.A * dv + outcomes.eps;
  y.array() += outcomes.beta0;
  return y;
}

Vector realize(const OutcomeOracle& outcomes, std::span<const std::uint8_t> d) {
  return outcomes(d);
}

double age(const LinearOutcomes& outcomes) { return outcomes.theta; }

double age(const OutcomeOracle& outcomes) {
  const std::vector<std::uint8_t> ones(outcomes.size(), 1);
  const std::vector<std::uint8_t> zeros(outcomes.size(), 0);
  return (outcomes(ones) - outcomes(zeros)).mean();
}

double outcome_bound(const LinearOutcomes& outcomes) {
  const Vector base = (outcomes.eps.array() + outcomes.beta0).abs().matrix();
  return (base + outcomes.A.cwiseAbs().rowwise().sum()).maxCoeff();
}

double off_neighborhood_total(const Matrix& A, const PremetricSpace& space, double s) {
  const std::size_t n = space.size();
  if (static_cast<std::size_t>(A.rows()) != n || A.cols() != A.rows()) {
    throw InvalidInput("matrix does not match the population");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto order = space.by_distance(i);
    const std::size_t inside = space.neighborhood_size(i, s);
    for (std::size_t k = inside; k < n; ++k) {
      total += A(static_cast<Eigen::Index>(i), order[k]);
    }
  }
  return total / static_cast<double>(n);
}

ClusterResponse::ClusterResponse(const LinearOutcomes& outcomes, const ClusterPartition& partition)
    : ClusterResponse(outcomes.A, partition) {
  base_ = outcomes.eps;
  base_.array() += outcomes.beta0;
}

ClusterResponse::ClusterResponse(const Matrix& A, const ClusterPartition& partition) {
  const auto n = A.rows();
  if (static_cast<std::size_t>(n) != partition.size()) {
    throw InvalidInput("partition does not match the matrix");
  }
  aggregated_ = Matrix::Zero(n, static_cast<Eigen::Index>(partition.num_clusters()));
  for (std::size_t c = 0; c < partition.num_clusters(); ++c) {
    for (int j : partition.clusters[c]) {
      aggregated_.col(static_cast<Eigen::Index>(c)) += A.col(j);
    }
  }
  base_ = Vector::Zero(n);
}

Vector ClusterResponse::realize(std::span<const std::uint8_t> b) const {
  if (b.size() != clusters()) throw InvalidInput("cluster bit count mismatch");
  Vector y = base_;
  for (std::size_t c = 0; c < b.size(); ++c) {
    if (b[c]) y += aggregated_.col(static_cast<Eigen::Index>(c));
  }
  return y;
}

}  // namespace scl
