#pragma once
// Scaling Clusters design: greedy g-cover, cluster growth from cover seeds,
// cluster/neighborhood incidence, Uniform Overlap extension, and
// cluster-randomized treatment draws.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scl/geometry.hpp"

namespace scl {

// h = c0 * n^(1/(2 eta + 1)).
double scaling_rule(std::size_t n, double eta, double c0 = 1.0);

// Greedy max-coverage g-cover; ties go to the lowest unit id.
std::vector<int> greedy_cover(const PremetricSpace& space, double g);

struct ClusterPartition {
  std::vector<int> assignment;              // unit -> cluster id
  std::vector<std::vector<int>> clusters;   // ascending unit ids
  std::vector<int> seeds;                   // seed unit per cluster, -1 if unknown
  double g = 0.0;

  std::size_t size() const { return assignment.size(); }
  std::size_t num_clusters() const { return clusters.size(); }
};

// Algorithm: walk the greedy cover in order, each seed claims the unassigned
// part of its g-neighborhood. Empty clusters are dropped.
ClusterPartition scaling_clusters(const PremetricSpace& space, double g);

// The i.i.d. benchmark: one cluster per unit.
ClusterPartition singleton_partition(std::size_t n);

// Rebuilds a partition from a unit -> label map (labels are renumbered densely
// in order of first appearance).
ClusterPartition partition_from_assignment(std::span<const int> labels);

// Throws InvalidInput unless clusters are disjoint, exhaustive and agree with
// the assignment.
void validate_partition(const ClusterPartition& partition, std::size_t n);

// Distance from every unit to the nearest member of every cluster.
class ClusterProximity {
 public:
  ClusterProximity(const PremetricSpace& space, const ClusterPartition& partition);

  std::size_t units() const { return n_; }
  std::size_t clusters() const { return c_; }
  double distance(std::size_t i, std::size_t c) const { return dist_[i * c_ + c]; }
  int nearest_member(std::size_t i, std::size_t c) const { return nearest_[i * c_ + c]; }

 private:
  std::size_t n_;
  std::size_t c_;
  std::vector<double> dist_;
  std::vector<int> nearest_;
};

// Clusters intersecting each unit's s-neighborhood, ascending ids.
struct NeighborhoodClusters {
  double s = 0.0;
  std::vector<std::vector<int>> sets;

  std::size_t phi(std::size_t i) const { return sets[i].size(); }
  std::size_t phi_max() const;
  bool uniform() const;
};

NeighborhoodClusters neighborhood_clusters(const PremetricSpace& space,
                                           const ClusterProximity& proximity, double s);
NeighborhoodClusters neighborhood_clusters(const PremetricSpace& space,
                                           const ClusterPartition& partition, double s);

struct IncidenceCounts {
  std::vector<int> phi;    // per unit
  std::vector<int> gamma;  // per cluster
  int phi_max = 0;
  int gamma_max = 0;
  double sum_gamma_sq = 0.0;
};

IncidenceCounts incidence(const NeighborhoodClusters& sets, std::size_t num_clusters);
IncidenceCounts incidence(const PremetricSpace& space, const ClusterPartition& partition,
                          double s);

// Neighborhoods padded with contact points of extra clusters so that every
// unit meets exactly phi_target clusters.
struct ExtendedNeighborhoods {
  double s = 0.0;
  std::vector<std::vector<int>> extra;  // appended units per unit
  NeighborhoodClusters clusters;        // clusters met by the extended neighborhood
  int phi_target = 0;
};

ExtendedNeighborhoods extend_uniform_overlap(const PremetricSpace& space,
                                             const ClusterPartition& partition, double s);
ExtendedNeighborhoods extend_uniform_overlap(const ClusterProximity& proximity,
                                             const NeighborhoodClusters& base);

struct DesignDraw {
  std::vector<std::uint8_t> b;  // per cluster
  std::vector<std::uint8_t> d;  // per unit, d[i] = b[assignment[i]]
  double p = 0.5;
  std::uint64_t seed = 0;
};

// Cluster bits i.i.d. Bernoulli(p) from the treatment stream of `seed`.
std::vector<std::uint8_t> draw_cluster_bits(std::size_t num_clusters, double p,
                                            std::uint64_t seed);
DesignDraw draw_treatments(const ClusterPartition& partition, double p, std::uint64_t seed);

std::vector<std::uint8_t> unit_treatments(const ClusterPartition& partition,
                                          std::span<const std::uint8_t> b);
// Recovers cluster bits from unit treatments; throws if a cluster is split.
std::vector<std::uint8_t> cluster_bits_from_units(const ClusterPartition& partition,
                                                  std::span<const std::uint8_t> d);

}  // namespace scl
