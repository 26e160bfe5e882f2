#pragma once
// Exhaustive computations over every cluster assignment, for small C.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "scl/design.hpp"
#include "scl/estimators.hpp"
#include "scl/outcomes.hpp"
#include "scl/owopt.hpp"

namespace scl {

struct AssignmentEnumeration {
  std::size_t clusters = 0;
  double p = 0.5;
  std::vector<std::uint32_t> masks;  // bit c of masks[k] is b_c
  std::vector<double> probs;         // p^#treated (1-p)^#untreated

  std::size_t size() const { return masks.size(); }
  std::vector<std::uint8_t> bits(std::size_t k) const;
};

AssignmentEnumeration enumerate(std::size_t num_clusters, double p);
AssignmentEnumeration enumerate(const ClusterPartition& partition, double p);

// Compensated (Neumaier) summation.
double stable_sum(std::span<const double> values);

struct Expectation {
  double value = 0.0;      // E[fn | defined]
  double p_defined = 1.0;  // probability that fn is defined
};

// fn receives cluster bits and may return nullopt where undefined. It is
// evaluated in parallel and must be safe to call concurrently.
using AssignmentFn = std::function<std::optional<double>(std::span<const std::uint8_t>)>;
Expectation exact_expectation(const AssignmentFn& fn, const AssignmentEnumeration& enumeration);

// Tables by enumeration, computed unit by unit from materialized
// neighborhoods rather than the cluster-distance shortcut.
SaturationTables exact_saturation_tables(const ClusterPartition& partition,
                                         const PremetricSpace& space, const SizeGrid& grid,
                                         double p);

// (1/n) sum_i (S_i Y_i(1) / p^phi_i - D_i Y_i(0) / (1-p)^phi_i), the HT
// estimator with observed outcomes replaced by full-saturation potentials.
double saturated_potential_ht(const Vector& y1, const Vector& y0, std::span<const std::uint8_t> b,
                              const NeighborhoodClusters& sets, double p);

}  // namespace scl
