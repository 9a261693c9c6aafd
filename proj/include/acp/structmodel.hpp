#pragma once

// Architecture templates, channel-count vectors and exact parameter/FLOP
// accounting.
//
// A template is a layer graph whose conv/dense widths are tied to prune
// groups. Free groups are the search dimensions; frozen groups (input
// channels, residual trunks, concat outputs, classifier width) keep their
// original width. Expanding a StructureVector over a template yields a
// ConcreteNetwork with every layer's (c_in, c_out, H_out, W_out) resolved.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace acp {

enum class LayerKind { Conv, Dense, BatchNorm, Pool, Add, Concat };

std::string_view to_string(LayerKind kind) noexcept;

struct Spatial {
  int height = 1;
  int width = 1;
  friend bool operator==(const Spatial&, const Spatial&) = default;
};

/// Layer id of the network input in LayerSpec::inputs.
inline constexpr int kNetworkInput = -1;

struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  int kernel = 1;  // square k x k
  int stride = 1;
  int padding = 0;
  Spatial in_spatial;
  bool bias = false;
  std::vector<int> inputs;  // producer layer ids, or kNetworkInput
  int in_group = -1;        // conv/dense only
  int out_group = -1;       // conv/dense; optional check for concat
};

enum class EdgeRole { Produces, Consumes };

struct MemberEdge {
  int layer_id = 0;
  EdgeRole role = EdgeRole::Produces;
  friend bool operator==(const MemberEdge&, const MemberEdge&) = default;
};

struct PruneGroup {
  int group_id = 0;
  std::string name;
  int original_count = 1;
  bool frozen = false;
  std::vector<MemberEdge> member_edges;
};

struct InputShape {
  int channels = 3;
  int height = 32;
  int width = 32;
};

struct ArchTemplate {
  std::string arch_id;
  std::vector<LayerSpec> layers;
  std::vector<PruneGroup> groups;  // free groups first, then frozen
  InputShape input_shape;
  int num_classes = 10;

  std::size_t free_group_count() const noexcept;
  const PruneGroup& free_group(std::size_t index) const { return groups.at(index); }
};

struct StructureVector {
  std::string arch_id;
  std::vector<int> channels;  // one entry per free group
  friend bool operator==(const StructureVector&, const StructureVector&) = default;
};

struct ConcreteLayer {
  std::string name;
  LayerKind kind = LayerKind::Conv;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  bool bias = false;
  int c_in = 0;
  int c_out = 0;
  Spatial in_spatial;
  Spatial out_spatial;
};

struct ConcreteNetwork {
  std::string arch_id;
  std::vector<ConcreteLayer> layers;
};

/// Options for the synthetic toynet family. The arch id encodes all three
/// as "toynet-<depth>[w<width>][c<classes>]".
struct ToyNetShape {
  int depth = 2;
  int width = 8;
  int classes = 2;
};

/// Supported ids: vgg16-cifar, vgg19-cifar, resnet56-cifar, resnet110-cifar,
/// googlenet-cifar, toynet-<k>[w<width>][c<classes>].
/// Throws UnknownArchitecture.
ArchTemplate build_template(std::string_view arch_id);
ArchTemplate build_template(std::string_view arch_id, int num_classes);

ArchTemplate make_toynet_template(const ToyNetShape& shape);
std::optional<ToyNetShape> parse_toynet_id(std::string_view arch_id);
std::string toynet_id(const ToyNetShape& shape);

/// All free groups at their original width.
StructureVector baseline_structure(const ArchTemplate& t);
/// All free groups at width 1.
StructureVector minimal_structure(const ArchTemplate& t);

/// Throws StructureMismatch or ChannelOutOfRange when `s` does not fit `t`.
void validate_structure(const ArchTemplate& t, const StructureVector& s);

ConcreteNetwork apply_structure(const ArchTemplate& t, const StructureVector& s);

/// Reads the free-group widths back out of a resolved network.
StructureVector read_free_widths(const ArchTemplate& t, const ConcreteNetwork& n);

/// conv: k^2 c_in c_out (+ c_out bias); dense: c_in H W c_out + c_out;
/// batchnorm: 2 c_out. Dense layers flatten their input, so H W is 1 for
/// globally pooled heads.
std::int64_t count_params(const ConcreteNetwork& n);

/// Multiply-accumulates of conv and dense layers.
std::int64_t count_flops(const ConcreteNetwork& n);

struct Totals {
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

Totals count_totals(const ConcreteNetwork& n);

struct GroupDelta {
  std::string name;
  int baseline = 0;
  int pruned = 0;
};

struct CompressionReport {
  std::string arch_id;
  Totals baseline;
  Totals pruned;
  std::int64_t params_removed = 0;
  std::int64_t flops_removed = 0;
  double params_drop_pct = 0.0;
  double flops_drop_pct = 0.0;
  std::vector<GroupDelta> groups;
};

/// 100 * (baseline - pruned) / baseline.
double drop_percent(double baseline, double pruned);

CompressionReport compression_report(const ArchTemplate& t, const StructureVector& baseline,
                                     const StructureVector& pruned);

/// Totals-only report, used when the pruned network is known by its totals.
CompressionReport compression_report(const Totals& baseline, const Totals& pruned);

}  // namespace acp
