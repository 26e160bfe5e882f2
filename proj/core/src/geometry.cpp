#include "scl/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "scl/errors.hpp"
#include "scl/rng.hpp"

namespace scl {

PremetricSpace PremetricSpace::from_coords(const Matrix& coords) {
  const auto n = static_cast<std::size_t>(coords.rows());
  const auto q = static_cast<int>(coords.cols());
  if (n == 0) throw InvalidInput("population must contain at least one unit");
  if (q == 0) throw InvalidInput("coordinates must have at least one dimension");
  if (!coords.allFinite()) throw InvalidInput("coordinates must be finite");

  PremetricSpace space;
  space.n_ = n;
  space.rule_ = RadiusRule::euclidean;
  space.dim_ = q;
  space.coords_ = coords;
  space.dist_.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = (coords.row(static_cast<Eigen::Index>(i)) -
                        coords.row(static_cast<Eigen::Index>(j)))
                           .norm();
      if (d == 0.0) {
        throw InvalidInput("duplicate coordinates for units " + std::to_string(i) + " and " +
                           std::to_string(j) + " (distance 0 violates the premetric)");
      }
      space.dist_[i * n + j] = d;
      space.dist_[j * n + i] = d;
    }
  }
  space.symmetric_ = true;
  space.finalize();
  return space;
}

PremetricSpace PremetricSpace::from_distances(std::vector<double> dist, std::size_t n) {
  if (n == 0) throw InvalidInput("population must contain at least one unit");
  if (dist.size() != n * n) throw InvalidInput("distance table must be n x n");
  bool symmetric = true;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double d = dist[i * n + j];
      if (!std::isfinite(d)) throw InvalidInput("distances must be finite");
      if (i == j && d != 0.0) throw InvalidInput("distance from a unit to itself must be 0");
      if (i != j && !(d > 0.0)) {
        throw InvalidInput("distance between distinct units " + std::to_string(i) + " and " +
                           std::to_string(j) + " must be positive");
      }
      if (dist[j * n + i] != d) symmetric = false;
    }
  }
  PremetricSpace space;
  space.n_ = n;
  space.rule_ = RadiusRule::identity;
  space.dist_ = std::move(dist);
  space.symmetric_ = symmetric;
  space.finalize();
  return space;
}

void PremetricSpace::finalize() {
  order_.resize(n_ * n_);
  min_dist_ = std::numeric_limits<double>::infinity();
  max_dist_ = 0.0;
  for (std::size_t i = 0; i < n_; ++i) {
    auto row = order_.begin() + static_cast<std::ptrdiff_t>(i * n_);
    std::iota(row, row + static_cast<std::ptrdiff_t>(n_), 0);
    const double* d = dist_.data() + i * n_;
    // i sorts first because its distance is the unique zero in the row.
    std::sort(row, row + static_cast<std::ptrdiff_t>(n_), [d](int a, int b) {
      return d[a] < d[b] || (d[a] == d[b] && a < b);
    });
    for (std::size_t j = 0; j < n_; ++j) {
      if (j == i) continue;
      min_dist_ = std::min(min_dist_, d[j]);
      max_dist_ = std::max(max_dist_, d[j]);
    }
  }
}

double PremetricSpace::radius(double s) const {
  if (rule_ == RadiusRule::identity) return s;
  switch (*dim_) {
    case 1:
      return s;
    case 2:
      return std::sqrt(s);
    case 3:
      return std::cbrt(s);
    default:
      return std::pow(s, 1.0 / *dim_);
  }
}

double PremetricSpace::size_for_radius(double r) const {
  if (rule_ == RadiusRule::identity) return r;
  return std::pow(r, static_cast<double>(*dim_));
}

std::size_t PremetricSpace::neighborhood_size(std::size_t i, double s) const {
  const double r = radius(s);
  const double* d = dist_.data() + i * n_;
  auto row = by_distance(i);
  auto it = std::partition_point(row.begin(), row.end(), [d, r](int j) { return d[j] <= r; });
  return static_cast<std::size_t>(it - row.begin());
}

PremetricSpace build_space(const Matrix& coords) { return PremetricSpace::from_coords(coords); }

namespace {
void check_query(const PremetricSpace& space, std::size_t i, double s) {
  if (i >= space.size()) throw InvalidInput("unit id out of range");
  if (!(s > 0.0)) throw InvalidInput("neighborhood size must be positive");
}
}  // namespace

std::vector<int> neighborhood(const PremetricSpace& space, std::size_t i, double s) {
  check_query(space, i, s);
  auto view = space.neighborhood_view(i, s);
  std::vector<int> out(view.begin(), view.end());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<int> reverse_neighborhood(const PremetricSpace& space, std::size_t i, double s) {
  check_query(space, i, s);
  if (space.symmetric()) return neighborhood(space, i, s);
  const double r = space.radius(s);
  std::vector<int> out;
  for (std::size_t j = 0; j < space.size(); ++j) {
    if (space.distance(j, i) <= r) out.push_back(static_cast<int>(j));
  }
  return out;
}

Matrix uniform_disk_coords(std::size_t n, std::uint64_t seed) {
  CounterRng rng(seed, Stream::population);
  const double radius = std::sqrt(static_cast<double>(n));
  Matrix coords(static_cast<Eigen::Index>(n), 2);
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const double r = radius * std::sqrt(rng.uniform());
    const double angle = 2.0 * std::numbers::pi * rng.uniform();
    coords(i, 0) = r * std::cos(angle);
    coords(i, 1) = r * std::sin(angle);
  }
  return coords;
}

PremetricSpace uniform_disk_population(std::size_t n, std::uint64_t seed) {
  return PremetricSpace::from_coords(uniform_disk_coords(n, seed));
}

void InterferenceBudget::validate() const {
  if (!(eta > 0.0) || !(ybar > 0.0) || !(k_effects > 0.0)) {
    throw InvalidInput("interference budget constants must be strictly positive");
  }
  if (!(k1 >= 0.0) || !std::isfinite(k1)) throw InvalidInput("interference constant must be finite and >= 0");
  if (k_effects > ybar) throw InvalidInput("effect bound must not exceed the outcome bound");
}

std::vector<double> default_size_grid(const PremetricSpace& space, std::size_t points) {
  if (space.size() < 2 || points < 2) return {1.0};
  const double lo = space.size_for_radius(space.min_positive_distance()) * 0.5;
  const double hi = space.size_for_radius(space.max_distance()) * 1.01;
  std::vector<double> grid(points);
  const double step = std::log(hi / lo) / static_cast<double>(points - 1);
  for (std::size_t k = 0; k < points; ++k) {
    grid[k] = lo * std::exp(step * static_cast<double>(k));
  }
  return grid;
}

std::vector<int> greedy_subset_cover(const PremetricSpace& space, std::span<const int> input,
                                     double s) {
  const std::size_t n = space.size();
  std::vector<int> targets(input.begin(), input.end());
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  std::vector<char> in_target(n, 0);
  for (int t : targets) in_target[static_cast<std::size_t>(t)] = 1;

  std::vector<std::vector<int>> reach(targets.size());
  for (std::size_t k = 0; k < targets.size(); ++k) {
    for (int j : space.neighborhood_view(static_cast<std::size_t>(targets[k]), s)) {
      if (in_target[static_cast<std::size_t>(j)]) reach[k].push_back(j);
    }
  }

  std::vector<int> covered(n, 0);
  std::size_t remaining = targets.size();
  std::vector<std::size_t> chosen;
  std::vector<char> taken(targets.size(), 0);
  while (remaining > 0) {
    std::size_t best = targets.size();
    std::size_t best_gain = 0;
    for (std::size_t k = 0; k < targets.size(); ++k) {
      if (taken[k]) continue;
      std::size_t gain = 0;
      for (int j : reach[k]) gain += covered[static_cast<std::size_t>(j)] == 0 ? 1 : 0;
      // Strict comparison keeps the lowest id among ties.
      if (gain > best_gain) {
        best = k;
        best_gain = gain;
      }
    }
    taken[best] = 1;
    chosen.push_back(best);
    for (int j : reach[best]) {
      if (covered[static_cast<std::size_t>(j)]++ == 0) --remaining;
    }
  }

  // Drop centers whose every target is covered by another chosen center.
  std::vector<char> keep(chosen.size(), 1);
  for (std::size_t c = chosen.size(); c-- > 0;) {
    const auto& r = reach[chosen[c]];
    const bool redundant = std::all_of(r.begin(), r.end(), [&](int j) {
      return covered[static_cast<std::size_t>(j)] >= 2;
    });
    if (redundant) {
      keep[c] = 0;
      for (int j : r) --covered[static_cast<std::size_t>(j)];
    }
  }
  std::vector<int> out;
  for (std::size_t c = 0; c < chosen.size(); ++c) {
    if (keep[c]) out.push_back(targets[chosen[c]]);
  }
  return out;
}

std::vector<int> greedy_packing(const PremetricSpace& space, std::span<const int> candidates,
                                double s) {
  const std::size_t n = space.size();
  const double r = space.radius(s);
  std::vector<char> touched(n, 0);
  std::vector<int> packing;
  std::vector<int> holders;
  for (int q : candidates) {
    holders.clear();
    if (space.symmetric()) {
      auto view = space.neighborhood_view(static_cast<std::size_t>(q), s);
      holders.assign(view.begin(), view.end());
    } else {
      for (std::size_t i = 0; i < n; ++i) {
        if (space.distance(i, static_cast<std::size_t>(q)) <= r) holders.push_back(static_cast<int>(i));
      }
    }
    const bool free = std::none_of(holders.begin(), holders.end(),
                                   [&](int i) { return touched[static_cast<std::size_t>(i)] != 0; });
    if (!free) continue;
    packing.push_back(q);
    for (int i : holders) touched[static_cast<std::size_t>(i)] = 1;
  }
  return packing;
}

GeometryAudit audit_geometry(const PremetricSpace& space, std::span<const double> s_grid,
                             const AuditThresholds& thresholds, const AuditOptions& options) {
  if (s_grid.empty()) throw InvalidInput("audit size grid must be nonempty");
  for (double s : s_grid) {
    if (!(s > 0.0)) throw InvalidInput("audit sizes must be positive");
  }
  const std::size_t n = space.size();
  GeometryAudit audit;
  audit.thresholds = thresholds;

  for (double s : s_grid) {
    for (std::size_t i = 0; i < n; ++i) {
      const double excess = static_cast<double>(space.neighborhood_size(i, s)) - 1.0;
      audit.k3_hat = std::max(audit.k3_hat, excess / s);
    }
  }

  CounterRng rng(options.seed, Stream::audit);
  std::vector<int> centers(n);
  std::iota(centers.begin(), centers.end(), 0);
  if (options.max_centers > 0 && options.max_centers < n) {
    for (std::size_t k = 0; k < options.max_centers; ++k) {
      std::swap(centers[k], centers[k + rng.below(n - k)]);
    }
    centers.resize(options.max_centers);
    std::sort(centers.begin(), centers.end());
  }

  std::vector<char> mark(n);
  std::vector<int> members;
  for (double s : s_grid) {
    const double r = space.radius(s);
    for (int c : centers) {
      auto base = space.neighborhood_view(static_cast<std::size_t>(c), s);
      // U(N(c,s), s)
      std::fill(mark.begin(), mark.end(), 0);
      for (int k : base) {
        for (int j : space.neighborhood_view(static_cast<std::size_t>(k), s)) {
          mark[static_cast<std::size_t>(j)] = 1;
        }
      }
      members.clear();
      for (std::size_t j = 0; j < n; ++j) {
        if (mark[j]) members.push_back(static_cast<int>(j));
      }
      double cover = static_cast<double>(greedy_subset_cover(space, members, s).size());
      if (!space.symmetric()) {
        // V(N(c,s), s): units whose neighborhood meets N(c,s).
        members.clear();
        for (std::size_t j = 0; j < n; ++j) {
          const bool meets = std::any_of(base.begin(), base.end(), [&](int k) {
            return space.distance(j, static_cast<std::size_t>(k)) <= r;
          });
          if (meets) members.push_back(static_cast<int>(j));
        }
        cover = std::max(cover, static_cast<double>(greedy_subset_cover(space, members, s).size()));
      }
      audit.k5_hat = std::max(audit.k5_hat, cover);
    }
  }

  std::vector<std::vector<int>> subsets;
  {
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (std::size_t k = n; k > 1; --k) std::swap(all[k - 1], all[rng.below(k)]);
    subsets.push_back(all);
    for (std::size_t t = 0; t < options.packing_subsets; ++t) {
      std::vector<int> q;
      for (int u : all) {
        if (rng.bernoulli(0.5)) q.push_back(u);
      }
      if (!q.empty()) subsets.push_back(std::move(q));
    }
  }
  for (double s : s_grid) {
    for (const auto& q : subsets) {
      const double packed = static_cast<double>(greedy_packing(space, q, s).size());
      audit.k4_hat = std::max(audit.k4_hat, packed * s / static_cast<double>(n));
    }
  }

  audit.density_pass = audit.k3_hat <= thresholds.k3;
  audit.packing_pass = audit.k4_hat <= thresholds.k4;
  audit.covering_pass = audit.k5_hat <= thresholds.k5;
  return audit;
}

namespace {

// suffix[k] = sum of |A_ij| over the units at positions >= k in i's distance order.
void off_mass_suffix(const Matrix& A, const PremetricSpace& space, std::size_t i,
                     std::vector<double>& suffix) {
  const std::size_t n = space.size();
  auto order = space.by_distance(i);
  suffix.assign(n + 1, 0.0);
  for (std::size_t k = n; k-- > 0;) {
    suffix[k] = suffix[k + 1] +
                std::abs(A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(order[k])));
  }
}

void check_matrix(const Matrix& A, const PremetricSpace& space) {
  const auto n = static_cast<Eigen::Index>(space.size());
  if (A.rows() != n || A.cols() != n) throw InvalidInput("spillover matrix must be n x n");
  if (!A.allFinite()) throw InvalidInput("spillover matrix must be finite");
}

}  // namespace

std::vector<double> off_neighborhood_mass(const Matrix& A, const PremetricSpace& space,
                                          double s) {
  check_matrix(A, space);
  std::vector<double> out(space.size());
  std::vector<double> suffix;
  for (std::size_t i = 0; i < space.size(); ++i) {
    off_mass_suffix(A, space, i, suffix);
    out[i] = suffix[space.neighborhood_size(i, s)];
  }
  return out;
}

InterferenceAudit audit_interference(const Matrix& A, const PremetricSpace& space,
                                     const InterferenceBudget& budget,
                                     std::span<const double> s_grid) {
  check_matrix(A, space);
  std::vector<double> fallback;
  if (s_grid.empty()) {
    fallback = default_size_grid(space);
    s_grid = fallback;
  }
  InterferenceAudit result;
  std::vector<double> suffix;
  for (std::size_t i = 0; i < space.size(); ++i) {
    off_mass_suffix(A, space, i, suffix);
    for (double s : s_grid) {
      const double off = suffix[space.neighborhood_size(i, s)];
      const double bound = budget.k1 * std::pow(s, -budget.eta);
      const double ratio = off == 0.0 ? 0.0 : off / bound;
      if (ratio > result.worst_ratio) {
        result.worst_ratio = ratio;
        result.worst_size = s;
        result.worst_unit = i;
      }
      if (off > bound) result.pass = false;
    }
  }
  return result;
}

double fit_interference_constant(const Matrix& A, const PremetricSpace& space, double eta,
                                 std::span<const double> s_grid) {
  check_matrix(A, space);
  std::vector<double> fallback;
  if (s_grid.empty()) {
    fallback = default_size_grid(space);
    s_grid = fallback;
  }
  double k1 = 0.0;
  std::vector<double> suffix;
  for (std::size_t i = 0; i < space.size(); ++i) {
    off_mass_suffix(A, space, i, suffix);
    for (double s : s_grid) {
      k1 = std::max(k1, suffix[space.neighborhood_size(i, s)] * std::pow(s, eta));
    }
  }
  return k1;
}

}  // namespace scl
