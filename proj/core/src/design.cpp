#include "scl/design.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "scl/errors.hpp"
#include "scl/rng.hpp"

namespace scl {

double scaling_rule(std::size_t n, double eta, double c0) {
  if (n == 0) throw InvalidInput("population size must be at least 1");
  if (!(eta > 0.0)) throw InvalidInput("decay rate eta must be positive");
  if (!(c0 > 0.0)) throw InvalidInput("scale constant c0 must be positive");
  return c0 * std::pow(static_cast<double>(n), 1.0 / (2.0 * eta + 1.0));
}

std::vector<int> greedy_cover(const PremetricSpace& space, double g) {
  if (!(g > 0.0)) throw InvalidInput("cover size g must be positive");
  const std::size_t n = space.size();

  // holders[j]: units u with j in N(u, g).
  std::vector<std::vector<int>> holders(n);
  std::vector<int> gain(n);
  for (std::size_t u = 0; u < n; ++u) {
    auto nb = space.neighborhood_view(u, g);
    gain[u] = static_cast<int>(nb.size());
    for (int j : nb) holders[static_cast<std::size_t>(j)].push_back(static_cast<int>(u));
  }

  std::vector<char> covered(n, 0);
  std::size_t remaining = n;
  std::vector<int> cover;
  while (remaining > 0) {
    std::size_t best = 0;
    for (std::size_t u = 1; u < n; ++u) {
      if (gain[u] > gain[best]) best = u;
    }
    cover.push_back(static_cast<int>(best));
    for (int j : space.neighborhood_view(best, g)) {
      auto& flag = covered[static_cast<std::size_t>(j)];
      if (flag) continue;
      flag = 1;
      --remaining;
      for (int u : holders[static_cast<std::size_t>(j)]) --gain[static_cast<std::size_t>(u)];
    }
  }
  return cover;
}

ClusterPartition scaling_clusters(const PremetricSpace& space, double g) {
  const auto cover = greedy_cover(space, g);
  ClusterPartition partition;
  partition.g = g;
  partition.assignment.assign(space.size(), -1);
  for (int seed : cover) {
    std::vector<int> members;
    for (int j : space.neighborhood_view(static_cast<std::size_t>(seed), g)) {
      if (partition.assignment[static_cast<std::size_t>(j)] < 0) members.push_back(j);
    }
    if (members.empty()) continue;
    std::sort(members.begin(), members.end());
    const int id = static_cast<int>(partition.clusters.size());
    for (int j : members) partition.assignment[static_cast<std::size_t>(j)] = id;
    partition.clusters.push_back(std::move(members));
    partition.seeds.push_back(seed);
  }
  return partition;
}

ClusterPartition singleton_partition(std::size_t n) {
  ClusterPartition partition;
  partition.assignment.resize(n);
  partition.clusters.resize(n);
  partition.seeds.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    partition.assignment[i] = static_cast<int>(i);
    partition.clusters[i] = {static_cast<int>(i)};
    partition.seeds[i] = static_cast<int>(i);
  }
  return partition;
}

ClusterPartition partition_from_assignment(std::span<const int> labels) {
  ClusterPartition partition;
  partition.assignment.resize(labels.size());
  std::vector<std::pair<int, int>> seen;  // (label, dense id)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find_if(seen.begin(), seen.end(),
                           [&](const auto& e) { return e.first == labels[i]; });
    int id;
    if (it == seen.end()) {
      id = static_cast<int>(seen.size());
      seen.emplace_back(labels[i], id);
      partition.clusters.emplace_back();
      partition.seeds.push_back(-1);
    } else {
      id = it->second;
    }
    partition.assignment[i] = id;
    partition.clusters[static_cast<std::size_t>(id)].push_back(static_cast<int>(i));
  }
  return partition;
}

void validate_partition(const ClusterPartition& partition, std::size_t n) {
  if (partition.assignment.size() != n) throw InvalidInput("partition does not match population size");
  std::vector<int> owner(n, -1);
  for (std::size_t c = 0; c < partition.clusters.size(); ++c) {
    if (partition.clusters[c].empty()) throw InvalidInput("partition contains an empty cluster");
    for (int j : partition.clusters[c]) {
      if (j < 0 || static_cast<std::size_t>(j) >= n) throw InvalidInput("cluster member out of range");
      auto& o = owner[static_cast<std::size_t>(j)];
      if (o >= 0) throw InvalidInput("clusters overlap at unit " + std::to_string(j));
      o = static_cast<int>(c);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (owner[i] < 0) throw InvalidInput("unit " + std::to_string(i) + " is in no cluster");
    if (owner[i] != partition.assignment[i]) throw InvalidInput("assignment disagrees with clusters");
  }
}

ClusterProximity::ClusterProximity(const PremetricSpace& space, const ClusterPartition& partition)
    : n_(space.size()), c_(partition.num_clusters()) {
  validate_partition(partition, n_);
  dist_.assign(n_ * c_, std::numeric_limits<double>::infinity());
  nearest_.assign(n_ * c_, -1);
  for (std::size_t i = 0; i < n_; ++i) {
    auto row = space.distance_row(i);
    for (std::size_t j = 0; j < n_; ++j) {
      const auto c = static_cast<std::size_t>(partition.assignment[j]);
      // Strict comparison keeps the lowest id among equidistant members.
      if (row[j] < dist_[i * c_ + c]) {
        dist_[i * c_ + c] = row[j];
        nearest_[i * c_ + c] = static_cast<int>(j);
      }
    }
  }
}

std::size_t NeighborhoodClusters::phi_max() const {
  std::size_t m = 0;
  for (const auto& s : sets) m = std::max(m, s.size());
  return m;
}

bool NeighborhoodClusters::uniform() const {
  return std::all_of(sets.begin(), sets.end(),
                     [&](const auto& s) { return s.size() == sets.front().size(); });
}

NeighborhoodClusters neighborhood_clusters(const PremetricSpace& space,
                                           const ClusterProximity& proximity, double s) {
  if (!(s > 0.0)) throw InvalidInput("neighborhood size must be positive");
  NeighborhoodClusters out;
  out.s = s;
  out.sets.resize(proximity.units());
  const double r = space.radius(s);
  for (std::size_t i = 0; i < proximity.units(); ++i) {
    for (std::size_t c = 0; c < proximity.clusters(); ++c) {
      if (proximity.distance(i, c) <= r) out.sets[i].push_back(static_cast<int>(c));
    }
  }
  return out;
}

NeighborhoodClusters neighborhood_clusters(const PremetricSpace& space,
                                           const ClusterPartition& partition, double s) {
  return neighborhood_clusters(space, ClusterProximity(space, partition), s);
}

IncidenceCounts incidence(const NeighborhoodClusters& sets, std::size_t num_clusters) {
  IncidenceCounts counts;
  counts.phi.resize(sets.sets.size());
  counts.gamma.assign(num_clusters, 0);
  for (std::size_t i = 0; i < sets.sets.size(); ++i) {
    counts.phi[i] = static_cast<int>(sets.sets[i].size());
    for (int c : sets.sets[i]) ++counts.gamma[static_cast<std::size_t>(c)];
  }
  for (int f : counts.phi) counts.phi_max = std::max(counts.phi_max, f);
  for (int g : counts.gamma) {
    counts.gamma_max = std::max(counts.gamma_max, g);
    counts.sum_gamma_sq += static_cast<double>(g) * static_cast<double>(g);
  }
  return counts;
}

IncidenceCounts incidence(const PremetricSpace& space, const ClusterPartition& partition,
                          double s) {
  return incidence(neighborhood_clusters(space, partition, s), partition.num_clusters());
}

ExtendedNeighborhoods extend_uniform_overlap(const ClusterProximity& proximity,
                                             const NeighborhoodClusters& base) {
  ExtendedNeighborhoods ext;
  ext.s = base.s;
  ext.clusters = base;
  ext.extra.resize(base.sets.size());
  const std::size_t target = base.phi_max();
  ext.phi_target = static_cast<int>(target);

  std::vector<int> candidates;
  for (std::size_t i = 0; i < base.sets.size(); ++i) {
    const auto& own = base.sets[i];
    if (own.size() >= target) continue;
    candidates.clear();
    for (std::size_t c = 0; c < proximity.clusters(); ++c) {
      if (!std::binary_search(own.begin(), own.end(), static_cast<int>(c))) {
        candidates.push_back(static_cast<int>(c));
      }
    }
    const std::size_t need = target - own.size();
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(need),
                      candidates.end(), [&](int a, int b) {
                        const double da = proximity.distance(i, static_cast<std::size_t>(a));
                        const double db = proximity.distance(i, static_cast<std::size_t>(b));
                        return da < db || (da == db && a < b);
                      });
    auto& set = ext.clusters.sets[i];
    for (std::size_t k = 0; k < need; ++k) {
      const int c = candidates[k];
      set.push_back(c);
      ext.extra[i].push_back(proximity.nearest_member(i, static_cast<std::size_t>(c)));
    }
    std::sort(set.begin(), set.end());
  }
  return ext;
}

ExtendedNeighborhoods extend_uniform_overlap(const PremetricSpace& space,
                                             const ClusterPartition& partition, double s) {
  const ClusterProximity proximity(space, partition);
  return extend_uniform_overlap(proximity, neighborhood_clusters(space, proximity, s));
}

std::vector<std::uint8_t> draw_cluster_bits(std::size_t num_clusters, double p,
                                            std::uint64_t seed) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("treatment probability must lie in (0, 1)");
  CounterRng rng(seed, Stream::treatment);
  std::vector<std::uint8_t> b(num_clusters);
  for (auto& bit : b) bit = rng.bernoulli(p) ? 1 : 0;
  return b;
}

std::vector<std::uint8_t> unit_treatments(const ClusterPartition& partition,
                                          std::span<const std::uint8_t> b) {
  if (b.size() != partition.num_clusters()) throw InvalidInput("cluster bit count mismatch");
  std::vector<std::uint8_t> d(partition.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] = b[static_cast<std::size_t>(partition.assignment[i])];
  }
  return d;
}

std::vector<std::uint8_t> cluster_bits_from_units(const ClusterPartition& partition,
                                                  std::span<const std::uint8_t> d) {
  if (d.size() != partition.size()) throw InvalidInput("treatment vector length mismatch");
  std::vector<std::uint8_t> b(partition.num_clusters());
  for (std::size_t c = 0; c < b.size(); ++c) {
    const auto& members = partition.clusters[c];
    b[c] = d[static_cast<std::size_t>(members.front())];
    for (int j : members) {
      if (d[static_cast<std::size_t>(j)] > 1) throw InvalidInput("treatments must be 0 or 1");
      if (d[static_cast<std::size_t>(j)] != b[c]) {
        throw InvalidInput("treatment varies within cluster " + std::to_string(c));
      }
    }
  }
  return b;
}

DesignDraw draw_treatments(const ClusterPartition& partition, double p, std::uint64_t seed) {
  DesignDraw draw;
  draw.p = p;
  draw.seed = seed;
  draw.b = draw_cluster_bits(partition.num_clusters(), p, seed);
  draw.d = unit_treatments(partition, draw.b);
  return draw;
}

}  // namespace scl
