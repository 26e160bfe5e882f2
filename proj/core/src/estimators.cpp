#include "scl/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "scl/errors.hpp"

namespace scl {

const char* to_string(FailureKind kind) {
  switch (kind) {
    case FailureKind::undefined_draw: return "undefined draw";
    case FailureKind::degenerate_exposure: return "degenerate exposure";
    case FailureKind::weak_instrument: return "weak instrument draw";
  }
  return "unknown failure";
}

const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::ht: return "ht";
    case EstimatorKind::hajek: return "hajek";
    case EstimatorKind::ols: return "ols";
    case EstimatorKind::shrinkage: return "shrinkage";
    case EstimatorKind::ow: return "ow";
  }
  return "unknown";
}

EstimatorKind parse_estimator(std::string_view name) {
  if (name == "ht" || name == "ipw") return EstimatorKind::ht;
  if (name == "hajek") return EstimatorKind::hajek;
  if (name == "ols") return EstimatorKind::ols;
  if (name == "shrinkage" || name == "tsls") return EstimatorKind::shrinkage;
  if (name == "ow") return EstimatorKind::ow;
  throw InvalidInput("unknown estimator '" + std::string(name) + "'");
}

Purity purity(std::span<const int> clusters, std::span<const std::uint8_t> b) {
  if (clusters.empty()) throw InvalidInput("neighborhood meets no cluster");
  const std::uint8_t first = b[static_cast<std::size_t>(clusters.front())];
  for (int c : clusters) {
    if (b[static_cast<std::size_t>(c)] != first) return Purity::mixed;
  }
  return first ? Purity::saturated : Purity::dissaturated;
}

namespace {

void check_probability(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("treatment probability must lie in (0, 1)");
}

void check_length(const Vector& Y, std::size_t n) {
  if (static_cast<std::size_t>(Y.size()) != n) throw InvalidInput("outcome vector length mismatch");
  if (!Y.allFinite()) throw InvalidInput("outcomes must be finite");
}

// Per-unit purity and phi, independent of the cluster-level shortcut.
struct UnitStatus {
  std::vector<Purity> purity;
  std::vector<int> phi;
};

UnitStatus unit_status(std::span<const std::uint8_t> b, const NeighborhoodClusters& sets) {
  UnitStatus st;
  st.purity.resize(sets.sets.size());
  st.phi.resize(sets.sets.size());
  for (std::size_t i = 0; i < sets.sets.size(); ++i) {
    for (int c : sets.sets[i]) {
      if (c < 0 || static_cast<std::size_t>(c) >= b.size()) throw InvalidInput("cluster id out of range");
    }
    st.purity[i] = purity(sets.sets[i], b);
    st.phi[i] = static_cast<int>(sets.sets[i].size());
  }
  return st;
}

UnitStatus unit_status(std::span<const std::uint8_t> d, const PremetricSpace& space,
                       const ClusterPartition& partition, double h) {
  const std::size_t n = space.size();
  if (d.size() != n) throw InvalidInput("treatment vector length mismatch");
  if (!(h > 0.0)) throw InvalidInput("neighborhood size must be positive");
  validate_partition(partition, n);
  cluster_bits_from_units(partition, d);  // rejects draws that split a cluster
  UnitStatus st;
  st.purity.resize(n);
  st.phi.resize(n);
  std::vector<int> seen(partition.num_clusters(), -1);
  for (std::size_t i = 0; i < n; ++i) {
    bool ones = false;
    bool zeros = false;
    int phi = 0;
    for (int j : space.neighborhood_view(i, h)) {
      (d[static_cast<std::size_t>(j)] ? ones : zeros) = true;
      auto& mark = seen[static_cast<std::size_t>(partition.assignment[static_cast<std::size_t>(j)])];
      if (mark != static_cast<int>(i)) {
        mark = static_cast<int>(i);
        ++phi;
      }
    }
    st.phi[i] = phi;
    st.purity[i] = ones && zeros ? Purity::mixed : (ones ? Purity::saturated : Purity::dissaturated);
  }
  return st;
}

EstimateReport weighted_report(EstimatorKind kind, const Vector& Y, const UnitStatus& st,
                               double p, bool normalize) {
  const auto n = static_cast<Eigen::Index>(st.phi.size());
  EstimateReport report;
  report.kind = kind;
  report.weights = Vector::Zero(n);
  double sat_total = 0.0;
  double dis_total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    report.phi_max = std::max(report.phi_max, static_cast<std::size_t>(st.phi[u]));
    if (st.purity[u] == Purity::saturated) {
      report.weights(i) = std::pow(p, -st.phi[u]);
      sat_total += report.weights(i);
      ++report.saturated;
    } else if (st.purity[u] == Purity::dissaturated) {
      report.weights(i) = -std::pow(1.0 - p, -st.phi[u]);
      dis_total -= report.weights(i);
      ++report.dissaturated;
    }
  }
  if (normalize) {
    if (report.saturated == 0 || report.dissaturated == 0) {
      throw EstimationFailure(FailureKind::undefined_draw,
                              "no saturated or no dissaturated neighborhood in this draw");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      report.weights(i) /= report.weights(i) > 0.0 ? sat_total : dis_total;
    }
  } else {
    report.weights /= static_cast<double>(n);
  }
  report.estimate = report.weights.dot(Y);
  return report;
}

}  // namespace

EstimateReport ipw_ht(const Vector& Y, std::span<const std::uint8_t> b,
                      const NeighborhoodClusters& sets, double p) {
  check_probability(p);
  check_length(Y, sets.sets.size());
  auto report = weighted_report(EstimatorKind::ht, Y, unit_status(b, sets), p, false);
  report.h = sets.s;
  return report;
}

EstimateReport ipw_ht(const Vector& Y, std::span<const std::uint8_t> d,
                      const PremetricSpace& space, const ClusterPartition& partition, double h,
                      double p) {
  check_probability(p);
  check_length(Y, space.size());
  auto report = weighted_report(EstimatorKind::ht, Y, unit_status(d, space, partition, h), p, false);
  report.h = h;
  return report;
}

EstimateReport hajek(const Vector& Y, std::span<const std::uint8_t> b,
                     const NeighborhoodClusters& sets, double p) {
  check_probability(p);
  check_length(Y, sets.sets.size());
  auto report = weighted_report(EstimatorKind::hajek, Y, unit_status(b, sets), p, true);
  report.h = sets.s;
  return report;
}

EstimateReport hajek(const Vector& Y, std::span<const std::uint8_t> d,
                     const PremetricSpace& space, const ClusterPartition& partition, double h,
                     double p) {
  check_probability(p);
  check_length(Y, space.size());
  auto report = weighted_report(EstimatorKind::hajek, Y, unit_status(d, space, partition, h), p, true);
  report.h = h;
  return report;
}

Vector treated_fraction(const NeighborhoodClusters& sets, std::span<const std::uint8_t> b) {
  Vector T(static_cast<Eigen::Index>(sets.sets.size()));
  for (std::size_t i = 0; i < sets.sets.size(); ++i) {
    const auto& set = sets.sets[i];
    if (set.empty()) throw InvalidInput("neighborhood meets no cluster");
    int treated = 0;
    for (int c : set) {
      if (c < 0 || static_cast<std::size_t>(c) >= b.size()) throw InvalidInput("cluster id out of range");
      treated += b[static_cast<std::size_t>(c)] ? 1 : 0;
    }
    T(static_cast<Eigen::Index>(i)) = static_cast<double>(treated) / static_cast<double>(set.size());
  }
  return T;
}

ExposureVector exposure(const NeighborhoodClusters& sets, std::span<const std::uint8_t> b) {
  if (sets.sets.empty()) throw InvalidInput("empty population");
  if (!sets.uniform()) {
    throw InvalidInput("neighborhoods violate uniform overlap; extend them first");
  }
  ExposureVector out;
  out.T = treated_fraction(sets, b);
  out.phi_used = static_cast<int>(sets.sets.front().size());
  return out;
}

ExposureVector exposure(const ExtendedNeighborhoods& extended, std::span<const std::uint8_t> b) {
  return exposure(extended.clusters, b);
}

double empirical_cov(const Vector& x, const Vector& y) {
  if (x.size() != y.size() || x.size() == 0) throw InvalidInput("covariance needs equal nonempty vectors");
  const double n = static_cast<double>(x.size());
  return x.dot(y) / n - x.mean() * y.mean();
}

namespace {

// Cov(T, Y) / denom * scale written as weights on Y.
EstimateReport regression_report(EstimatorKind kind, const Vector& Y, const ExposureVector& T,
                                 double denom, double scale) {
  const double n = static_cast<double>(Y.size());
  EstimateReport report;
  report.kind = kind;
  report.phi_max = static_cast<std::size_t>(T.phi_used);
  report.weights = (T.T.array() - T.T.mean()).matrix() * (scale / (n * denom));
  report.estimate = empirical_cov(T.T, Y) / denom * scale;
  for (Eigen::Index i = 0; i < T.T.size(); ++i) {
    if (T.T(i) == 1.0) ++report.saturated;
    if (T.T(i) == 0.0) ++report.dissaturated;
  }
  return report;
}

}  // namespace

EstimateReport ols(const Vector& Y, const ExposureVector& T) {
  check_length(Y, static_cast<std::size_t>(T.T.size()));
  const double var = empirical_cov(T.T, T.T);
  if (!(var > 1e-14)) {
    throw EstimationFailure(FailureKind::degenerate_exposure, "exposure has zero variance");
  }
  return regression_report(EstimatorKind::ols, Y, T, var, 1.0);
}

EstimateReport shrinkage(const Vector& Y, const ExposureVector& T, const Vector& T_guess,
                         double guess_total) {
  check_length(Y, static_cast<std::size_t>(T.T.size()));
  if (T_guess.size() != T.T.size()) throw InvalidInput("guessed exposure length mismatch");
  const double first_stage = empirical_cov(T.T, T_guess);
  if (!(std::abs(first_stage) > 1e-12)) {
    throw EstimationFailure(FailureKind::weak_instrument, "first stage covariance is near zero");
  }
  return regression_report(EstimatorKind::shrinkage, Y, T, first_stage, guess_total);
}

EstimateReport shrinkage(const Vector& Y, const ExposureVector& T,
                         std::span<const std::uint8_t> d, const GuessMatrix& guess) {
  const auto n = guess.A_hat.rows();
  if (static_cast<Eigen::Index>(d.size()) != n) throw InvalidInput("treatment vector length mismatch");
  Vector dv(n);
  for (Eigen::Index i = 0; i < n; ++i) dv(i) = d[static_cast<std::size_t>(i)];
  return shrinkage(Y, T, guess.A_hat * dv, guess.mean_total());
}

std::size_t SizeGrid::index_of(double s) const {
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    if (sizes[k] == s) return k;
  }
  throw InvalidInput("size " + std::to_string(s) + " is not on the grid");
}

double floor_size(const PremetricSpace& space) {
  const double dmin = space.min_positive_distance();
  if (!std::isfinite(dmin)) return 1.0;
  return space.size_for_radius(dmin * (1.0 - 1e-9));
}

SizeGrid make_size_grid(const PremetricSpace& space, std::span<const double> sizes) {
  SizeGrid grid;
  const double s0 = floor_size(space);
  grid.sizes.push_back(s0);
  for (double s : sizes) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidInput("grid sizes must be positive and finite");
    if (s > s0) grid.sizes.push_back(s);
  }
  std::sort(grid.sizes.begin(), grid.sizes.end());
  grid.sizes.erase(std::unique(grid.sizes.begin(), grid.sizes.end()), grid.sizes.end());
  return grid;
}

std::vector<double> default_ow_sizes(double h) {
  if (!(h > 0.0)) throw InvalidInput("h must be positive");
  std::vector<double> out;
  for (int k = -5; k <= 2; ++k) out.push_back(std::ldexp(h, k));
  return out;
}

namespace {

// Largest grid index whose radius stays strictly below the mismatch distance.
int pure_index(const std::vector<double>& radii, double mismatch) {
  const auto it = std::lower_bound(radii.begin(), radii.end(), mismatch);
  const auto k = static_cast<int>(it - radii.begin()) - 1;
  return std::max(k, 0);
}

std::vector<double> grid_radii(const PremetricSpace& space, const SizeGrid& grid) {
  if (grid.sizes.empty()) throw InvalidInput("empty size grid");
  std::vector<double> radii;
  for (double s : grid.sizes) radii.push_back(space.radius(s));
  if (!std::is_sorted(radii.begin(), radii.end())) throw InvalidInput("size grid must be ascending");
  return radii;
}

}  // namespace

SaturationProfile saturation(const PremetricSpace& space, std::span<const std::uint8_t> d,
                             const SizeGrid& grid) {
  const std::size_t n = space.size();
  if (d.size() != n) throw InvalidInput("treatment vector length mismatch");
  const auto radii = grid_radii(space, grid);
  SaturationProfile profile;
  profile.grid = grid;
  profile.index.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mismatch = std::numeric_limits<double>::infinity();
    for (int j : space.by_distance(i)) {
      if (d[static_cast<std::size_t>(j)] != d[i]) {
        mismatch = space.distance(i, static_cast<std::size_t>(j));
        break;
      }
    }
    profile.index[i] = pure_index(radii, mismatch);
  }
  return profile;
}

SaturationPlan::SaturationPlan(const PremetricSpace& space, const ClusterProximity& proximity,
                               const ClusterPartition& partition, SizeGrid grid)
    : proximity_(&proximity), assignment_(partition.assignment), grid_(std::move(grid)) {
  if (proximity.units() != space.size() || proximity.clusters() != partition.num_clusters()) {
    throw InvalidInput("proximity table does not match the partition");
  }
  radii_ = grid_radii(space, grid_);
}

void SaturationPlan::indices(std::span<const std::uint8_t> b, std::vector<int>& out) const {
  const std::size_t n = proximity_->units();
  const std::size_t C = proximity_->clusters();
  if (b.size() != C) throw InvalidInput("cluster bit count mismatch");
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = b[static_cast<std::size_t>(assignment_[i])];
    double mismatch = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < C; ++c) {
      if (b[c] != own) mismatch = std::min(mismatch, proximity_->distance(i, c));
    }
    out[i] = pure_index(radii_, mismatch);
  }
}

SaturationProfile SaturationPlan::profile(std::span<const std::uint8_t> b) const {
  SaturationProfile p;
  p.grid = grid_;
  indices(b, p.index);
  return p;
}

std::size_t DependencyGraph::edges() const {
  std::size_t total = 0;
  for (const auto& row : adjacency) total += row.size();
  return total;
}

DependencyGraph dependency_graph(const NeighborhoodClusters& sets, std::size_t num_clusters) {
  const std::size_t n = sets.sets.size();
  std::vector<std::vector<int>> members(num_clusters);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c : sets.sets[i]) {
      if (c < 0 || static_cast<std::size_t>(c) >= num_clusters) throw InvalidInput("cluster id out of range");
      members[static_cast<std::size_t>(c)].push_back(static_cast<int>(i));
    }
  }
  DependencyGraph graph;
  graph.adjacency.resize(n);
  std::vector<int> mark(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    auto& row = graph.adjacency[i];
    mark[i] = static_cast<int>(i);
    row.push_back(static_cast<int>(i));
    for (int c : sets.sets[i]) {
      for (int j : members[static_cast<std::size_t>(c)]) {
        if (mark[static_cast<std::size_t>(j)] == static_cast<int>(i)) continue;
        mark[static_cast<std::size_t>(j)] = static_cast<int>(i);
        row.push_back(j);
      }
    }
    std::sort(row.begin(), row.end());
  }
  return graph;
}

DependencyGraph identity_graph(std::size_t n) {
  DependencyGraph graph;
  graph.adjacency.resize(n);
  for (std::size_t i = 0; i < n; ++i) graph.adjacency[i] = {static_cast<int>(i)};
  return graph;
}

DependencyGraph hac_dependency_graph(const PremetricSpace& space, const ClusterProximity& proximity,
                                     double kappa, double epsilon) {
  if (!(kappa > 0.0)) throw InvalidInput("kappa must be positive");
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  const auto sets = neighborhood_clusters(space, proximity, std::pow(kappa, 1.0 + epsilon));
  return dependency_graph(sets, proximity.clusters());
}

double normal_critical_value(double level) {
  if (!(level > 0.0 && level < 1.0)) throw InvalidInput("confidence level must lie in (0, 1)");
  const boost::math::normal_distribution<double> standard;
  return boost::math::quantile(standard, 0.5 + level / 2.0);
}

VarianceEstimate variance_ci(const EstimateReport& report, const Vector& Y, const Vector& T,
                             double p, const DependencyGraph& graph, double level) {
  const auto n = Y.size();
  if (report.weights.size() != n || T.size() != n || static_cast<Eigen::Index>(graph.size()) != n) {
    throw InvalidInput("variance inputs have mismatched lengths");
  }
  const double ybar = Y.mean();
  const Vector e = (report.weights.array() *
                    (Y.array() - ybar - report.estimate * (T.array() - p))).matrix();
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j : graph.adjacency[static_cast<std::size_t>(i)]) row += e(j);
    total += e(i) * row;
  }
  VarianceEstimate out;
  out.truncated = total < 0.0;
  out.variance_hat = std::max(total, 0.0);
  const double half = normal_critical_value(level) * std::sqrt(out.variance_hat);
  out.ci = {level, report.estimate - half, report.estimate + half};
  return out;
}

VarianceEstimate variance_ci(const EstimateReport& report, const Vector& Y, const Vector& T,
                             double p, const PremetricSpace& space,
                             const ClusterPartition& partition, double h, double eta,
                             double level, double epsilon) {
  if (!(eta > 0.0)) throw InvalidInput("eta must be positive");
  if (!(epsilon > 0.0 && epsilon < 2.0 * eta / 3.0)) {
    throw InvalidInput("epsilon must lie in (0, 2 eta / 3)");
  }
  const ClusterProximity proximity(space, partition);
  return variance_ci(report, Y, T, p, hac_dependency_graph(space, proximity, h, epsilon), level);
}

void attach(EstimateReport& report, const VarianceEstimate& variance) {
  report.variance_hat = variance.variance_hat;
  report.variance_truncated = variance.truncated;
  report.ci = variance.ci;
}

}  // namespace scl
