#include "parapack/clustering.h"

#include <algorithm>
#include <numeric>

#include "parapack/errors.h"
#include "parapack/observability.h"

namespace parapack {

std::vector<std::vector<std::size_t>> ClusterAssignment::members() const {
  std::vector<std::vector<std::size_t>> out(n_clusters());
  for (std::size_t i = 0; i < labels.size(); ++i) out.at(labels[i]).push_back(i);
  return out;
}

PackModel ClusteredPack::as_pack() const {
  PackModel pack;
  for (const auto& c : clusters) pack.cells.push_back(c.aggregate);
  return pack;
}

std::size_t ClusteredPack::n_cells() const {
  std::size_t n = 0;
  for (const auto& c : clusters) n += c.members.size();
  return n;
}

ClusterAssignment cluster_by_eigenvalue(const PackModel& model,
                                        std::span<const double> gammas,
                                        double rel_gap_threshold) {
  model.validate();
  if (gammas.size() != model.size()) {
    throw ArgumentError("gamma list does not match the pack size");
  }
  if (!(rel_gap_threshold >= 0.0)) {
    throw ArgumentError("gap threshold must be non-negative");
  }
  const std::size_t n = model.size();
  std::vector<double> lambda(n);
  for (std::size_t k = 0; k < n; ++k) lambda[k] = cell_eigenvalue(model.cells[k], gammas[k]);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return lambda[a] < lambda[b]; });

  ClusterAssignment out;
  out.labels.assign(n, 0);
  std::size_t label = 0;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = order[i];
    if (i > 0 && !(relative_gap(lambda[order[i - 1]], lambda[k]) < rel_gap_threshold)) {
      out.centers.push_back(sum / static_cast<double>(count));
      ++label;
      sum = 0.0;
      count = 0;
    }
    out.labels[k] = label;
    sum += lambda[k];
    ++count;
  }
  out.centers.push_back(sum / static_cast<double>(count));
  return out;
}

CellParams aggregate_cluster(std::span<const CellParams> members) {
  if (members.empty()) throw AggregationError("cannot aggregate an empty cluster");
  const auto& first = members.front();
  first.validate();
  CellParams agg;
  agg.ocv = first.ocv;
  agg.rc_pairs.assign(first.rc_pairs.size(), RcPair{0.0, 0.0});
  double conductance = 0.0;
  std::vector<double> rc_conductance(first.rc_pairs.size(), 0.0);
  for (const auto& m : members) {
    m.validate();
    if (m.ocv != first.ocv && !(*m.ocv == *first.ocv)) {
      throw AggregationError("cluster members have different OCV curves");
    }
    if (m.rc_pairs.size() != first.rc_pairs.size()) {
      throw AggregationError("cluster members have different RC pair counts");
    }
    agg.q += m.q;
    conductance += 1.0 / m.r_s;
    for (std::size_t j = 0; j < m.rc_pairs.size(); ++j) {
      rc_conductance[j] += 1.0 / m.rc_pairs[j].r;
      agg.rc_pairs[j].c += m.rc_pairs[j].c;
    }
  }
  agg.r_s = 1.0 / conductance;
  for (std::size_t j = 0; j < rc_conductance.size(); ++j) {
    agg.rc_pairs[j].r = 1.0 / rc_conductance[j];
  }
  return agg;
}

ClusteredPack build_clustered_pack(const PackModel& model,
                                   const ClusterAssignment& assignment) {
  model.validate();
  if (assignment.labels.size() != model.size()) {
    throw ArgumentError("cluster labels do not match the pack size");
  }
  ClusteredPack out;
  for (auto& idx : assignment.members()) {
    if (idx.empty()) throw ArgumentError("cluster assignment has an empty cluster");
    std::vector<CellParams> cells;
    cells.reserve(idx.size());
    for (std::size_t k : idx) cells.push_back(model.cells[k]);
    out.clusters.push_back({std::move(idx), aggregate_cluster(cells)});
  }
  return out;
}

StateSpace clustered_state_space(const ClusteredPack& clustered,
                                 const EquilibriumPoint& eq) {
  StateSpace ss = linearize_first_order(clustered.as_pack(), eq);
  for (std::size_t c = 0; c < clustered.clusters.size(); ++c) {
    ss.state_labels[c] = "cluster" + std::to_string(c + 1) + ".soc";
  }
  return ss;
}

std::vector<double> cluster_socs(const ClusteredPack& clustered, const PackModel& model,
                                 std::span<const double> cell_socs) {
  if (cell_socs.size() != model.size()) {
    throw ArgumentError("SOC list does not match the pack size");
  }
  std::vector<double> out;
  out.reserve(clustered.clusters.size());
  for (const auto& c : clustered.clusters) {
    double charge = 0.0;
    double capacity = 0.0;
    for (std::size_t k : c.members) {
      charge += model.cells[k].q * cell_socs[k];
      capacity += model.cells[k].q;
    }
    out.push_back(charge / capacity);
  }
  return out;
}

}  // namespace parapack
