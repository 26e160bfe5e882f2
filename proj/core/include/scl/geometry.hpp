#pragma once
// Populations in a premetric space and their s-neighborhoods.
//
// A unit's s-neighborhood is every unit within distance radius(s) of it.
// For points in R^q the radius rule is s -> s^(1/q) (so neighborhood volume
// grows linearly in s); for an abstract distance table it is the identity.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace scl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class RadiusRule { euclidean, identity };

class PremetricSpace {
 public:
  // Rows of `coords` are unit locations. Rejects non-finite and duplicate points.
  static PremetricSpace from_coords(const Matrix& coords);
  // Row-major n x n table with zero diagonal and strictly positive off-diagonal.
  static PremetricSpace from_distances(std::vector<double> dist, std::size_t n);

  std::size_t size() const { return n_; }
  double distance(std::size_t i, std::size_t j) const { return dist_[i * n_ + j]; }
  std::span<const double> distance_row(std::size_t i) const {
    return {dist_.data() + i * n_, n_};
  }

  RadiusRule rule() const { return rule_; }
  std::optional<int> dimension() const { return dim_; }
  bool has_coords() const { return dim_.has_value(); }
  const Matrix& coords() const { return coords_; }
  bool symmetric() const { return symmetric_; }

  double radius(double s) const;
  // Inverse of the radius rule: the size whose radius is r.
  double size_for_radius(double r) const;

  // Units ordered by (distance from i, id); i itself is first.
  std::span<const int> by_distance(std::size_t i) const {
    return {order_.data() + i * n_, n_};
  }
  std::size_t neighborhood_size(std::size_t i, double s) const;
  // N(i, s) in distance order.
  std::span<const int> neighborhood_view(std::size_t i, double s) const {
    return by_distance(i).first(neighborhood_size(i, s));
  }
  // Smallest strictly positive pairwise distance (infinity when n = 1).
  double min_positive_distance() const { return min_dist_; }
  double max_distance() const { return max_dist_; }

 private:
  PremetricSpace() = default;
  void finalize();

  std::size_t n_ = 0;
  RadiusRule rule_ = RadiusRule::identity;
  std::optional<int> dim_;
  Matrix coords_;
  std::vector<double> dist_;
  std::vector<int> order_;
  double min_dist_ = std::numeric_limits<double>::infinity();
  double max_dist_ = 0.0;
  bool symmetric_ = true;
};

PremetricSpace build_space(const Matrix& coords);

// N(i, s) as ascending unit ids. Throws InvalidInput when s <= 0 or i is out of range.
std::vector<int> neighborhood(const PremetricSpace& space, std::size_t i, double s);

// Units j with i in N(j, s).
std::vector<int> reverse_neighborhood(const PremetricSpace& space, std::size_t i, double s);

// Uniform population in the disk of radius sqrt(n) centred at the origin.
PremetricSpace uniform_disk_population(std::size_t n, std::uint64_t seed);
Matrix uniform_disk_coords(std::size_t n, std::uint64_t seed);

// Constants bounding spillovers and outcomes.
struct InterferenceBudget {
  double eta = 1.0;        // geometric decay rate
  double k1 = 1.0;         // interference constant
  double ybar = 1.0;       // outcome bound
  double k_effects = 1.0;  // effect bound, <= ybar

  void validate() const;
};

// Log-spaced sizes from the floor of the space up to the size whose radius
// spans the population.
std::vector<double> default_size_grid(const PremetricSpace& space, std::size_t points = 24);

struct AuditThresholds {
  double k3 = std::numeric_limits<double>::infinity();
  double k4 = std::numeric_limits<double>::infinity();
  double k5 = std::numeric_limits<double>::infinity();
};

struct AuditOptions {
  // Centers used for the covering audit; 0 means every unit.
  std::size_t max_centers = 0;
  // Random subsets Q tried by the packing audit, in addition to the full population.
  std::size_t packing_subsets = 4;
  std::uint64_t seed = 0;
};

// Empirical geometric constants. Cover sizes come from greedy constructions
// and are upper bounds on covering numbers; packings are greedy and give
// lower bounds on packing numbers.
struct GeometryAudit {
  double k3_hat = 0.0;  // bounded density: |N(i,s)| <= k3 s + 1
  double k4_hat = 0.0;  // packing number <= k4 n / s
  double k5_hat = 0.0;  // covering numbers of U(N(i,s),s), V(N(i,s),s)
  AuditThresholds thresholds;
  bool density_pass = true;
  bool packing_pass = true;
  bool covering_pass = true;
  bool approximate = true;
};

GeometryAudit audit_geometry(const PremetricSpace& space, std::span<const double> s_grid,
                             const AuditThresholds& thresholds = {},
                             const AuditOptions& options = {});

// Greedy s-cover of `targets` using members of `targets` as centers. Returns
// the centers; redundant centers are pruned after the greedy pass.
std::vector<int> greedy_subset_cover(const PremetricSpace& space, std::span<const int> targets,
                                     double s);
// Greedy maximal s-packing of `candidates` (visited in the given order).
std::vector<int> greedy_packing(const PremetricSpace& space, std::span<const int> candidates,
                                double s);

struct InterferenceAudit {
  bool pass = true;
  double worst_ratio = 0.0;  // max over (i,s) of off-neighborhood mass / (K1 s^-eta)
  double worst_size = 0.0;
  std::size_t worst_unit = 0;
};

// Checks sum_{j not in N(i,s)} |A_ij| <= K1 s^-eta over `s_grid` (default grid if empty).
InterferenceAudit audit_interference(const Matrix& A, const PremetricSpace& space,
                                     const InterferenceBudget& budget,
                                     std::span<const double> s_grid = {});

// Smallest K1 that passes audit_interference at rate eta on the grid.
double fit_interference_constant(const Matrix& A, const PremetricSpace& space, double eta,
                                 std::span<const double> s_grid = {});

// Off-neighborhood mass sum_{j not in N(i,s)} |A_ij| for every unit.
std::vector<double> off_neighborhood_mass(const Matrix& A, const PremetricSpace& space, double s);

}  // namespace scl
