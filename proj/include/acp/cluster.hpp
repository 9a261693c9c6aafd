#pragma once

// Channel similarity and density clustering of per-layer feature maps.
//
// Distances are taken between sample-averaged channel maps. For the cosine
// metric the distance is 1 - |cos(a, b)|, so a small eps groups channels
// whose mean maps point in (anti)parallel directions.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "acp/featio.hpp"
#include "acp/structmodel.hpp"

namespace acp {

enum class Metric { Cosine, Euclidean, Manhattan, Chebyshev };

std::string_view to_string(Metric metric) noexcept;
std::optional<Metric> parse_metric(std::string_view name) noexcept;

class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  DistanceMatrix(std::size_t n, Metric metric) : n_(n), metric_(metric), entries_(n * n, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  Metric metric() const noexcept { return metric_; }

  double operator()(std::size_t i, std::size_t j) const { return entries_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double d) {
    entries_[i * n_ + j] = d;
    entries_[j * n_ + i] = d;
  }

 private:
  std::size_t n_ = 0;
  Metric metric_ = Metric::Cosine;
  std::vector<double> entries_;
};

/// Throws ZeroNormChannel (cosine only) and ShapeMismatch on empty maps.
DistanceMatrix pairwise_distance(const AveragedMaps& maps, Metric metric);

inline constexpr int kNoise = -1;

struct ClusterResult {
  std::vector<int> labels;  // cluster id >= 0, or kNoise
  int num_clusters = 0;
  int num_noise = 0;
  double eps = 0.0;
  int min_pts = 1;
};

/// Neighbourhoods are closed balls (d <= eps) and include the point itself.
/// Border points reachable from several clusters take the lowest cluster id.
ClusterResult dbscan(const DistanceMatrix& d, double eps, int min_pts);

/// Channels kept for a layer: one per cluster plus one per noise point.
int pruned_channel_count(const ClusterResult& r) noexcept;

struct ClusterParams {
  double eps = 0.01;
  int min_pts = 5;
  Metric metric = Metric::Cosine;
};

/// Per free group distance matrices, in free-group order. Throws
/// MissingLayer when a group has no dump and ShapeMismatch when a dump's
/// channel count differs from the group's original width.
std::vector<DistanceMatrix> layer_distances(std::span<const FeatureDump> dumps, const ArchTemplate& t,
                                            Metric metric);

struct LayerClustering {
  std::string group_name;
  int original_count = 0;
  ClusterResult result;
};

struct ClusterPruneResult {
  StructureVector structure;
  std::vector<LayerClustering> layers;
};

ClusterPruneResult cluster_distances(const ArchTemplate& t, std::span<const DistanceMatrix> distances, double eps,
                                     int min_pts);

ClusterPruneResult cluster_prune_detailed(std::span<const FeatureDump> dumps, const ArchTemplate& t,
                                          const ClusterParams& params);

StructureVector cluster_prune(std::span<const FeatureDump> dumps, const ArchTemplate& t, const ClusterParams& params);

}  // namespace acp
