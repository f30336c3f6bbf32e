#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "parapack/linearization.h"

namespace parapack {

struct ClusterAssignment {
  std::vector<std::size_t> labels;  // per cell
  std::vector<double> centers;      // mean eigenvalue per cluster, ascending

  std::size_t n_clusters() const { return centers.size(); }
  /// Cell indices of each cluster, ascending within a cluster.
  std::vector<std::vector<std::size_t>> members() const;
};

struct Cluster {
  std::vector<std::size_t> members;
  CellParams aggregate;
};

/// Each cluster replaced by one fictitious cell carrying the summed
/// capacity and the parallel resistance of its members.
struct ClusteredPack {
  std::vector<Cluster> clusters;

  PackModel as_pack() const;
  std::size_t n_cells() const;
};

/// 1-D single-linkage grouping: eigenvalues are sorted and neighbours whose
/// relative gap is below the threshold share a cluster.
ClusterAssignment cluster_by_eigenvalue(const PackModel& model,
                                        std::span<const double> gammas,
                                        double rel_gap_threshold);

/// Sum of capacities, parallel combination of series resistances and of
/// each RC position (resistances in parallel, capacitances summed).
CellParams aggregate_cluster(std::span<const CellParams> members);

ClusteredPack build_clustered_pack(const PackModel& model,
                                   const ClusterAssignment& assignment);

/// First-order linearized model with one SOC state per cluster. `eq` is
/// indexed by cluster.
StateSpace clustered_state_space(const ClusteredPack& clustered,
                                 const EquilibriumPoint& eq);

/// Capacity-weighted mean SOC of each cluster's members.
std::vector<double> cluster_socs(const ClusteredPack& clustered, const PackModel& model,
                                 std::span<const double> cell_socs);

}  // namespace parapack
