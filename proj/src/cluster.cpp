#include "acp/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "acp/error.hpp"

namespace acp {

std::string_view to_string(Metric metric) noexcept {
  switch (metric) {
    case Metric::Cosine: return "cosine";
    case Metric::Euclidean: return "euclidean";
    case Metric::Manhattan: return "manhattan";
    case Metric::Chebyshev: return "chebyshev";
  }
  return "cosine";
}

std::optional<Metric> parse_metric(std::string_view name) noexcept {
  for (Metric m : {Metric::Cosine, Metric::Euclidean, Metric::Manhattan, Metric::Chebyshev}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

namespace {

double cosine_distance(std::span<const double> a, std::span<const double> b, double norm_a2, double norm_b2) {
  double dot = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) dot += a[k] * b[k];
  // sqrt of a product keeps identical vectors at exactly |cos| = 1.
  const double cos = dot / std::sqrt(norm_a2 * norm_b2);
  return std::clamp(1.0 - std::abs(cos), 0.0, 1.0);
}

double lp_distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = std::abs(a[k] - b[k]);
    switch (metric) {
      case Metric::Euclidean: acc += diff * diff; break;
      case Metric::Manhattan: acc += diff; break;
      default: acc = std::max(acc, diff); break;
    }
  }
  return metric == Metric::Euclidean ? std::sqrt(acc) : acc;
}

}  // namespace

DistanceMatrix pairwise_distance(const AveragedMaps& maps, Metric metric) {
  const std::size_t n = maps.channel_count;
  if (n > 0 && maps.map_size == 0) {
    throw Error(ErrorKind::ShapeMismatch, "layer '" + maps.layer_name + "' has empty channel maps");
  }
  DistanceMatrix d(n, metric);

  std::vector<double> norm2(n, 0.0);
  if (metric == Metric::Cosine) {
    for (std::size_t i = 0; i < n; ++i) {
      for (double v : maps.channel(i)) norm2[i] += v * v;
      if (norm2[i] == 0.0) {
        throw Error(ErrorKind::ZeroNormChannel,
                    "layer '" + maps.layer_name + "' channel " + std::to_string(i) + " has an all-zero mean map");
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      d.set(i, j,
            metric == Metric::Cosine ? cosine_distance(maps.channel(i), maps.channel(j), norm2[i], norm2[j])
                                     : lp_distance(maps.channel(i), maps.channel(j), metric));
    }
  }
  return d;
}

ClusterResult dbscan(const DistanceMatrix& d, double eps, int min_pts) {
  const std::size_t n = d.size();
  ClusterResult r;
  r.eps = eps;
  r.min_pts = min_pts;
  r.labels.assign(n, kNoise);

  std::vector<std::vector<std::size_t>> neighbours(n);
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (d(i, j) <= eps) neighbours[i].push_back(j);
    }
    core[i] = neighbours[i].size() >= static_cast<std::size_t>(min_pts);
  }

  // Connected components of the core graph, numbered by lowest core index.
  int next_id = 0;
  for (std::size_t seed = 0; seed < n; ++seed) {
    if (!core[seed] || r.labels[seed] != kNoise) continue;
    const int id = next_id++;
    std::deque<std::size_t> frontier{seed};
    r.labels[seed] = id;
    while (!frontier.empty()) {
      const std::size_t p = frontier.front();
      frontier.pop_front();
      for (std::size_t q : neighbours[p]) {
        if (core[q] && r.labels[q] == kNoise) {
          r.labels[q] = id;
          frontier.push_back(q);
        }
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) continue;
    int best = kNoise;
    for (std::size_t q : neighbours[i]) {
      if (core[q] && (best == kNoise || r.labels[q] < best)) best = r.labels[q];
    }
    r.labels[i] = best;
  }

  r.num_clusters = next_id;
  r.num_noise = static_cast<int>(std::count(r.labels.begin(), r.labels.end(), kNoise));
  return r;
}

int pruned_channel_count(const ClusterResult& r) noexcept { return r.num_clusters + r.num_noise; }

std::vector<DistanceMatrix> layer_distances(std::span<const FeatureDump> dumps, const ArchTemplate& t,
                                            Metric metric) {
  std::vector<DistanceMatrix> out;
  for (std::size_t g = 0; g < t.free_group_count(); ++g) {
    const PruneGroup& group = t.groups[g];
    const auto it = std::find_if(dumps.begin(), dumps.end(),
                                 [&](const FeatureDump& d) { return d.layer_name == group.name; });
    if (it == dumps.end()) {
      throw Error(ErrorKind::MissingLayer, "no feature dump for prunable layer '" + group.name + "'");
    }
    if (it->shape.channels != static_cast<std::uint32_t>(group.original_count)) {
      throw Error(ErrorKind::ShapeMismatch, "dump '" + group.name + "' has " + std::to_string(it->shape.channels) +
                                                " channels, template expects " +
                                                std::to_string(group.original_count));
    }
    out.push_back(pairwise_distance(average_samples(*it), metric));
  }
  return out;
}

ClusterPruneResult cluster_distances(const ArchTemplate& t, std::span<const DistanceMatrix> distances, double eps,
                                     int min_pts) {
  ClusterPruneResult out;
  out.structure.arch_id = t.arch_id;
  for (std::size_t g = 0; g < distances.size(); ++g) {
    LayerClustering layer{t.groups[g].name, t.groups[g].original_count, dbscan(distances[g], eps, min_pts)};
    out.structure.channels.push_back(pruned_channel_count(layer.result));
    out.layers.push_back(std::move(layer));
  }
  validate_structure(t, out.structure);
  return out;
}

ClusterPruneResult cluster_prune_detailed(std::span<const FeatureDump> dumps, const ArchTemplate& t,
                                          const ClusterParams& params) {
  const std::vector<DistanceMatrix> distances = layer_distances(dumps, t, params.metric);
  return cluster_distances(t, distances, params.eps, params.min_pts);
}

StructureVector cluster_prune(std::span<const FeatureDump> dumps, const ArchTemplate& t,
                              const ClusterParams& params) {
  return cluster_prune_detailed(dumps, t, params).structure;
}

}  // namespace acp
