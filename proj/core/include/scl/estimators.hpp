#pragma once
// Point estimators of the average global effect and the HAC variance.
//
// Every estimator here is linear in the outcomes: estimate = weights' Y with
// weights depending on the draw only. Reports carry those weights so the
// variance estimator can be applied uniformly.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "scl/design.hpp"
#include "scl/geometry.hpp"
#include "scl/outcomes.hpp"

namespace scl {

enum class EstimatorKind { ht, hajek, ols, shrinkage, ow };

const char* to_string(EstimatorKind kind);
EstimatorKind parse_estimator(std::string_view name);

struct ConfidenceInterval {
  double level = 0.95;
  double lo = 0.0;
  double hi = 0.0;
};

struct EstimateReport {
  EstimatorKind kind = EstimatorKind::ht;
  double estimate = 0.0;
  double h = 0.0;
  std::optional<double> variance_hat;
  std::optional<ConfidenceInterval> ci;
  bool variance_truncated = false;
  std::size_t phi_max = 0;
  std::size_t saturated = 0;
  std::size_t dissaturated = 0;
  Vector weights;
};

enum class Purity : std::uint8_t { mixed, saturated, dissaturated };

// Purity of a neighborhood given the clusters it meets and the cluster bits.
Purity purity(std::span<const int> clusters, std::span<const std::uint8_t> b);

// Horvitz-Thompson: (1/n) sum_i (S_i / p^phi_i - D_i / (1-p)^phi_i) Y_i.
EstimateReport ipw_ht(const Vector& Y, std::span<const std::uint8_t> b,
                      const NeighborhoodClusters& sets, double p);
EstimateReport ipw_ht(const Vector& Y, std::span<const std::uint8_t> d,
                      const PremetricSpace& space, const ClusterPartition& partition, double h,
                      double p);

// Hajek: saturated and dissaturated weights each renormalised to sum to one.
// Throws EstimationFailure(undefined_draw) when either group is empty.
EstimateReport hajek(const Vector& Y, std::span<const std::uint8_t> b,
                     const NeighborhoodClusters& sets, double p);
EstimateReport hajek(const Vector& Y, std::span<const std::uint8_t> d,
                     const PremetricSpace& space, const ClusterPartition& partition, double h,
                     double p);

struct ExposureVector {
  Vector T;
  int phi_used = 0;
};

// Share of treated clusters among those met by each unit's neighborhood.
Vector treated_fraction(const NeighborhoodClusters& sets, std::span<const std::uint8_t> b);

// Exposure over neighborhoods that already satisfy Uniform Overlap; rejects
// non-uniform incidence.
ExposureVector exposure(const NeighborhoodClusters& sets, std::span<const std::uint8_t> b);
ExposureVector exposure(const ExtendedNeighborhoods& extended, std::span<const std::uint8_t> b);

// x'y/n - mean(x) mean(y).
double empirical_cov(const Vector& x, const Vector& y);

// Cov(T, Y) / Cov(T, T). Throws EstimationFailure(degenerate_exposure) when T is constant.
EstimateReport ols(const Vector& Y, const ExposureVector& T);

// Exposure-instrumented regression on guessed exposures:
// Cov(T, Y) / Cov(T, T_guess) * (1'A_hat 1 / n).
EstimateReport shrinkage(const Vector& Y, const ExposureVector& T, const Vector& T_guess,
                         double guess_total);
EstimateReport shrinkage(const Vector& Y, const ExposureVector& T,
                         std::span<const std::uint8_t> d, const GuessMatrix& guess);

// Ascending neighborhood sizes whose first entry is the floor s0, the size at
// which every neighborhood is the unit alone.
struct SizeGrid {
  std::vector<double> sizes;

  std::size_t size() const { return sizes.size(); }
  double floor() const { return sizes.front(); }
  double back() const { return sizes.back(); }
  std::size_t index_of(double s) const;  // throws if absent
};

// Largest size s with N(i, s) = {i} for all i, up to a relative 1e-9 margin.
double floor_size(const PremetricSpace& space);
// {s0} union {s in sizes : s > s0}, sorted and deduplicated.
SizeGrid make_size_grid(const PremetricSpace& space, std::span<const double> sizes);
// h * 2^k for k = -5..2.
std::vector<double> default_ow_sizes(double h);

struct SaturationProfile {
  SizeGrid grid;
  std::vector<int> index;  // per unit, position of s_tilde in grid

  double s_tilde(std::size_t i) const { return grid.sizes[static_cast<std::size_t>(index[i])]; }
};

// s_tilde[i] = largest grid size whose neighborhood is saturated or dissaturated under d.
SaturationProfile saturation(const PremetricSpace& space, std::span<const std::uint8_t> d,
                             const SizeGrid& grid);

// Cluster-level evaluation of the same profile, O(n C) per draw.
class SaturationPlan {
 public:
  SaturationPlan(const PremetricSpace& space, const ClusterProximity& proximity,
                 const ClusterPartition& partition, SizeGrid grid);

  const SizeGrid& grid() const { return grid_; }
  void indices(std::span<const std::uint8_t> b, std::vector<int>& out) const;
  SaturationProfile profile(std::span<const std::uint8_t> b) const;

 private:
  const ClusterProximity* proximity_;
  std::vector<int> assignment_;
  SizeGrid grid_;
  std::vector<double> radii_;
};

// Units i ~ j when the neighborhoods meet a common cluster (self-loops included).
struct DependencyGraph {
  std::vector<std::vector<int>> adjacency;

  std::size_t size() const { return adjacency.size(); }
  std::size_t edges() const;
};

DependencyGraph dependency_graph(const NeighborhoodClusters& sets, std::size_t num_clusters);
DependencyGraph identity_graph(std::size_t n);
// Graph over kappa^(1+epsilon)-neighborhoods.
DependencyGraph hac_dependency_graph(const PremetricSpace& space, const ClusterProximity& proximity,
                                     double kappa, double epsilon = 0.1);

struct VarianceEstimate {
  double variance_hat = 0.0;
  bool truncated = false;
  ConfidenceInterval ci;
};

// sigma^2 = sum_ij L_ij e_i e_j with e_i = w_i (Y_i - mean(Y) - est (T_i - p)).
// Weights carry the 1/n scale, so the interval is est +- z sigma.
VarianceEstimate variance_ci(const EstimateReport& report, const Vector& Y, const Vector& T,
                             double p, const DependencyGraph& graph, double level = 0.95);
VarianceEstimate variance_ci(const EstimateReport& report, const Vector& Y, const Vector& T,
                             double p, const PremetricSpace& space,
                             const ClusterPartition& partition, double h, double eta,
                             double level = 0.95, double epsilon = 0.1);

void attach(EstimateReport& report, const VarianceEstimate& variance);

// Two-sided standard normal quantile for a confidence level.
double normal_critical_value(double level);

}  // namespace scl
