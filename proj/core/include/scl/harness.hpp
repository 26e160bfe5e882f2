#pragma once
// Monte Carlo replication experiments.
//
// For every (n, design) a population, outcome model, guess and partition are
// built once; replications then redraw only the cluster treatments.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scl/design.hpp"
#include "scl/errors.hpp"
#include "scl/estimators.hpp"
#include "scl/geometry.hpp"
#include "scl/outcomes.hpp"

namespace scl {

class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

enum class DesignKind { scaling_clusters, iid };

const char* to_string(DesignKind kind);
DesignKind parse_design(std::string_view name);

struct ExperimentConfig {
  std::vector<std::size_t> n_list{100, 400, 900};
  std::vector<DesignKind> designs{DesignKind::scaling_clusters};
  std::vector<EstimatorKind> estimators{EstimatorKind::ht, EstimatorKind::hajek,
                                        EstimatorKind::ols, EstimatorKind::shrinkage};
  double eta = 1.0;
  double c0 = 1.0;
  double p = 0.5;
  std::size_t reps = 2000;
  std::uint64_t base_seed = 1;
  std::vector<int> grid_exponents{-5, -4, -3, -2, -1, 0, 1, 2};  // OW sizes h 2^k
  double ci_level = 0.95;
  double hac_epsilon = 0.1;
  std::optional<double> fixed_h;  // overrides the scaling rule
  std::size_t ow_max_n = 120;
  std::size_t ow_exact_clusters = 12;  // exact tables up to this many clusters
  std::size_t ow_table_draws = 100000;
  bool timing = false;  // when false the seconds column is written as 0

  void validate() const;
};

// key = value lines, lists comma-separated, '#' starts a comment.
ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
// Applies one key = value override.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

struct ResultRow {
  std::size_t n = 0;
  DesignKind design = DesignKind::scaling_clusters;
  EstimatorKind estimator = EstimatorKind::ht;
  std::size_t reps_ok = 0;
  double fail_rate = 0.0;
  double theta = 0.0;
  double mean_est = 0.0;
  double bias = 0.0;
  double rmse = 0.0;
  std::optional<double> coverage;
  double seconds = 0.0;
  double rmse_se = 0.0;  // delta method
  double mean_se = 0.0;  // sd(estimates) / sqrt(reps_ok)
  double variance = 0.0; // of the estimates, 1/reps_ok normalisation
};

struct SlopeRow {
  DesignKind design = DesignKind::scaling_clusters;
  EstimatorKind estimator = EstimatorKind::ht;
  double slope = 0.0;
  std::size_t points = 0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<SlopeRow> slopes;
};

// Everything fixed across replications for one (n, design).
struct Scenario {
  std::size_t n = 0;
  DesignKind design = DesignKind::scaling_clusters;
  std::uint64_t population_seed = 0;
  double h = 0.0;
  PremetricSpace space;
  LinearOutcomes outcomes;
  GuessMatrix guess;
  ClusterPartition partition;
};

Scenario build_scenario(const ExperimentConfig& config, std::size_t n, DesignKind design);

// Aggregates of one estimator's replicate estimates.
ResultRow summarize(std::span<const std::optional<double>> estimates,
                    std::span<const std::optional<bool>> covered, double theta);

ExperimentResult run_experiment(const ExperimentConfig& config);

// Least-squares slope of log rmse on log n; needs at least 3 distinct n.
double rate_slope(std::span<const ResultRow> rows);
std::vector<SlopeRow> all_slopes(std::span<const ResultRow> rows);

void write_results_csv(std::ostream& out, std::span<const ResultRow> rows);
void write_slopes_csv(std::ostream& out, std::span<const SlopeRow> slopes);

// Fixed-radius limits of the regression estimators: OLS tends to
// theta - 1'A~1/n and shrinkage to theta (1 - r) / (1 - r_hat), where A~
// keeps the entries outside N(i, h) and r, r_hat are off-neighborhood shares.
struct FixedRadiusTargets {
  double ols = 0.0;
  double shrinkage = 0.0;
  double off_share = 0.0;
  double guess_off_share = 0.0;
};

FixedRadiusTargets fixed_radius_targets(const LinearOutcomes& outcomes, const GuessMatrix& guess,
                                        const PremetricSpace& space, double h);

// Threshold checks on a finished run:
//   slope:EST:DESIGN:LO:HI
//   rmse_lt:A:B:DESIGN:N      (RMSE(A) below RMSE(B) by 3 combined SEs)
//   design_lt:EST:DA:DB:N     (same margin, EST under design DA vs DB)
//   coverage:EST:DESIGN:N:LO:HI
struct AssertOutcome {
  std::string spec;
  bool pass = false;
  std::string detail;
};

AssertOutcome check_assertion(std::string_view spec, const ExperimentResult& result);

}  // namespace scl
