#pragma once

// Shared fixtures and independent oracles for the test binaries.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <unistd.h>
#include <numeric>
#include <string>
#include <vector>

#include "acp/cluster.hpp"
#include "acp/featio.hpp"
#include "acp/random.hpp"

namespace acp::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("acp-test-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

/// Channels drawn as `group_sizes.size()` tight direction bundles (with a
/// random scale and sign per member) plus `outliers` random directions.
struct PlantedLayer {
  std::vector<std::vector<double>> vectors;
  std::vector<int> truth;  // bundle index, or -1 for outliers
};

inline PlantedLayer planted_layer(Rng& rng, const std::vector<int>& group_sizes, int outliers, std::size_t dim,
                                  double jitter) {
  PlantedLayer layer;
  for (std::size_t g = 0; g < group_sizes.size(); ++g) {
    const std::vector<double> base = random_unit_vector(rng, dim);
    for (int m = 0; m < group_sizes[g]; ++m) {
      std::vector<double> v = base;
      for (double& x : v) x += jitter * rng.normal();
      const double scale = (rng.unit() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.5, 3.0);
      for (double& x : v) x *= scale;
      layer.vectors.push_back(std::move(v));
      layer.truth.push_back(static_cast<int>(g));
    }
  }
  for (int o = 0; o < outliers; ++o) {
    layer.vectors.push_back(random_unit_vector(rng, dim));
    layer.truth.push_back(-1);
  }
  // shuffle so bundles are not contiguous
  std::vector<std::size_t> order(layer.vectors.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  PlantedLayer shuffled;
  for (std::size_t i : order) {
    shuffled.vectors.push_back(layer.vectors[i]);
    shuffled.truth.push_back(layer.truth[i]);
  }
  return shuffled;
}

inline AveragedMaps as_maps(const std::vector<std::vector<double>>& vectors) {
  AveragedMaps m;
  m.layer_name = "planted";
  m.channel_count = vectors.size();
  m.map_size = vectors.empty() ? 0 : vectors.front().size();
  for (const auto& v : vectors) m.values.insert(m.values.end(), v.begin(), v.end());
  return m;
}

/// One-sample dump whose channel c is vector c reshaped to 1 x dim.
inline FeatureDump as_dump(const std::string& name, const std::vector<std::vector<double>>& vectors) {
  FeatureDump d;
  d.layer_name = name;
  d.shape = {1, static_cast<std::uint32_t>(vectors.size()), 1, static_cast<std::uint32_t>(vectors.front().size())};
  for (const auto& v : vectors) {
    for (double x : v) d.data.push_back(static_cast<float>(x));
  }
  return d;
}

/// Distance straight from the definition, one pair at a time.
inline double oracle_distance(const std::vector<double>& a, const std::vector<double>& b, Metric metric) {
  double acc = 0.0;
  switch (metric) {
    case Metric::Cosine: {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t k = 0; k < a.size(); ++k) {
        dot += a[k] * b[k];
        na += a[k] * a[k];
        nb += b[k] * b[k];
      }
      return 1.0 - std::fabs(dot / (std::sqrt(na) * std::sqrt(nb)));
    }
    case Metric::Euclidean:
      for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
      return std::sqrt(acc);
    case Metric::Manhattan:
      for (std::size_t k = 0; k < a.size(); ++k) acc += std::fabs(a[k] - b[k]);
      return acc;
    case Metric::Chebyshev:
      for (std::size_t k = 0; k < a.size(); ++k) acc = std::max(acc, std::fabs(a[k] - b[k]));
      return acc;
  }
  return acc;
}

struct OracleCounts {
  int clusters = 0;
  int noise = 0;
  friend bool operator==(const OracleCounts&, const OracleCounts&) = default;
};

/// Cluster and noise counts of the eps-graph: clusters are connected
/// components of core points (union-find over every core pair within eps),
/// noise is every non-core point with no core point within eps.
inline OracleCounts epsilon_graph_oracle(const DistanceMatrix& d, double eps, int min_pts) {
  const std::size_t n = d.size();
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    for (std::size_t j = 0; j < n; ++j) count += d(i, j) <= eps ? 1 : 0;
    core[i] = count >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (core[i] && core[j] && d(i, j) <= eps) parent[find(i)] = find(j);
    }
  }
  OracleCounts out;
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i] && find(i) == i) ++out.clusters;
    if (!core[i]) {
      bool reached = false;
      for (std::size_t j = 0; j < n && !reached; ++j) reached = core[j] && d(i, j) <= eps;
      if (!reached) ++out.noise;
    }
  }
  return out;
}

/// Random symmetric matrix with zero diagonal and entries in [0, 1).
inline DistanceMatrix random_matrix(Rng& rng, std::size_t n) {
  DistanceMatrix d(n, Metric::Euclidean);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) d.set(i, j, rng.unit());
  }
  return d;
}

inline DistanceMatrix permuted(const DistanceMatrix& d, const std::vector<std::size_t>& perm) {
  DistanceMatrix out(d.size(), d.metric());
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t j = i + 1; j < d.size(); ++j) out.set(i, j, d(perm[i], perm[j]));
  }
  return out;
}

inline std::vector<std::size_t> random_permutation(Rng& rng, std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.below(i)]);
  return p;
}

}  // namespace acp::testing
