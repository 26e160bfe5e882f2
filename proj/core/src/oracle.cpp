#include "scl/oracle.hpp"

#include <algorithm>
#include <cmath>

#include "scl/errors.hpp"

namespace scl {

std::vector<std::uint8_t> AssignmentEnumeration::bits(std::size_t k) const {
  std::vector<std::uint8_t> b(clusters);
  for (std::size_t c = 0; c < clusters; ++c) b[c] = static_cast<std::uint8_t>((masks[k] >> c) & 1u);
  return b;
}

AssignmentEnumeration enumerate(std::size_t num_clusters, double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("treatment probability must lie in (0, 1)");
  if (num_clusters == 0) throw InvalidInput("need at least one cluster");
  if (num_clusters > kMaxExactClusters) throw InvalidInput("enumeration needs at most 20 clusters");
  AssignmentEnumeration out;
  out.clusters = num_clusters;
  out.p = p;
  const std::size_t total = std::size_t{1} << num_clusters;
  out.masks.resize(total);
  out.probs.resize(total);
  for (std::size_t k = 0; k < total; ++k) {
    out.masks[k] = static_cast<std::uint32_t>(k);
    double prob = 1.0;
    for (std::size_t c = 0; c < num_clusters; ++c) prob *= ((k >> c) & 1u) ? p : 1.0 - p;
    out.probs[k] = prob;
  }
  return out;
}

AssignmentEnumeration enumerate(const ClusterPartition& partition, double p) {
  return enumerate(partition.num_clusters(), p);
}

double stable_sum(std::span<const double> values) {
  double sum = 0.0;
  double comp = 0.0;
  for (double v : values) {
    const double t = sum + v;
    comp += std::abs(sum) >= std::abs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + comp;
}

Expectation exact_expectation(const AssignmentFn& fn, const AssignmentEnumeration& enumeration) {
  const auto total = static_cast<std::ptrdiff_t>(enumeration.size());
  std::vector<double> weighted(enumeration.size(), 0.0);
  std::vector<double> defined(enumeration.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < total; ++k) {
    const auto u = static_cast<std::size_t>(k);
    const auto value = fn(enumeration.bits(u));
    if (value) {
      weighted[u] = *value * enumeration.probs[u];
      defined[u] = enumeration.probs[u];
    }
  }
  Expectation out;
  out.p_defined = stable_sum(defined);
  out.value = out.p_defined > 0.0 ? stable_sum(weighted) / out.p_defined : 0.0;
  return out;
}

SaturationTables exact_saturation_tables(const ClusterPartition& partition,
                                         const PremetricSpace& space, const SizeGrid& grid,
                                         double p) {
  const auto enumeration = enumerate(partition, p);
  const std::size_t n = space.size();
  const std::size_t S = grid.size();
  validate_partition(partition, n);

  // Cluster sets of the largest neighborhoods, straight from the distance table.
  std::vector<std::vector<int>> reach(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (int j : space.neighborhood_view(i, grid.back())) {
      reach[i].push_back(partition.assignment[static_cast<std::size_t>(j)]);
    }
    std::sort(reach[i].begin(), reach[i].end());
    reach[i].erase(std::unique(reach[i].begin(), reach[i].end()), reach[i].end());
  }

  SaturationTables tables;
  tables.grid = grid;
  tables.method = TableMethod::exact;
  tables.partners.resize(n);
  tables.blocks.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      std::vector<int> shared;
      std::set_intersection(reach[i].begin(), reach[i].end(), reach[j].begin(), reach[j].end(),
                            std::back_inserter(shared));
      if (!shared.empty()) tables.partners[i].push_back(static_cast<int>(j));
    }
    tables.blocks[i].assign(tables.partners[i].size(),
                            Matrix::Zero(static_cast<Eigen::Index>(S), static_cast<Eigen::Index>(S)));
  }
  tables.marg = Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(S));

  for (std::size_t k = 0; k < enumeration.size(); ++k) {
    const auto profile = saturation(space, unit_treatments(partition, enumeration.bits(k)), grid);
    const double w = enumeration.probs[k];
    for (std::size_t i = 0; i < n; ++i) {
      const int si = profile.index[i];
      tables.marg(static_cast<Eigen::Index>(i), si) += w;
      for (std::size_t q = 0; q < tables.partners[i].size(); ++q) {
        const int sj = profile.index[static_cast<std::size_t>(tables.partners[i][q])];
        tables.blocks[i][q](si, sj) += w;
      }
    }
  }
  return tables;
}

double saturated_potential_ht(const Vector& y1, const Vector& y0, std::span<const std::uint8_t> b,
                              const NeighborhoodClusters& sets, double p) {
  const std::size_t n = sets.sets.size();
  if (static_cast<std::size_t>(y1.size()) != n || static_cast<std::size_t>(y0.size()) != n) {
    throw InvalidInput("potential outcome length mismatch");
  }
  std::vector<double> terms(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto phi = static_cast<double>(sets.sets[i].size());
    const auto i_ = static_cast<Eigen::Index>(i);
    switch (purity(sets.sets[i], b)) {
      case Purity::saturated: terms[i] = y1(i_) / std::pow(p, phi); break;
      case Purity::dissaturated: terms[i] = -y0(i_) / std::pow(1.0 - p, phi); break;
      case Purity::mixed: break;
    }
  }
  return stable_sum(terms) / static_cast<double>(n);
}

}  // namespace scl
