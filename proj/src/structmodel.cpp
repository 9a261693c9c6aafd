#include "acp/structmodel.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "acp/error.hpp"

namespace acp {

std::string_view to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::Conv: return "conv";
    case LayerKind::Dense: return "dense";
    case LayerKind::BatchNorm: return "batchnorm";
    case LayerKind::Pool: return "pool";
    case LayerKind::Add: return "add";
    case LayerKind::Concat: return "concat";
  }
  return "unknown";
}

std::size_t ArchTemplate::free_group_count() const noexcept {
  return static_cast<std::size_t>(
      std::count_if(groups.begin(), groups.end(), [](const PruneGroup& g) { return !g.frozen; }));
}

StructureVector baseline_structure(const ArchTemplate& t) {
  StructureVector s{t.arch_id, {}};
  for (std::size_t g = 0; g < t.free_group_count(); ++g) s.channels.push_back(t.groups[g].original_count);
  return s;
}

StructureVector minimal_structure(const ArchTemplate& t) {
  return StructureVector{t.arch_id, std::vector<int>(t.free_group_count(), 1)};
}

void validate_structure(const ArchTemplate& t, const StructureVector& s) {
  if (s.arch_id != t.arch_id) {
    throw Error(ErrorKind::StructureMismatch,
                "structure is for '" + s.arch_id + "' but template is '" + t.arch_id + "'");
  }
  const std::size_t free = t.free_group_count();
  if (s.channels.size() != free) {
    throw Error(ErrorKind::StructureMismatch,
                "structure has " + std::to_string(s.channels.size()) + " entries, template '" +
                    t.arch_id + "' has " + std::to_string(free) + " free groups");
  }
  for (std::size_t g = 0; g < free; ++g) {
    const int c = s.channels[g];
    if (c < 1 || c > t.groups[g].original_count) {
      throw Error(ErrorKind::ChannelOutOfRange,
                  "group " + std::to_string(g) + " (" + t.groups[g].name + ") has " +
                      std::to_string(c) + " channels, allowed [1, " +
                      std::to_string(t.groups[g].original_count) + "]");
    }
  }
}

namespace {

Spatial window_output(Spatial in, int kernel, int stride, int padding) {
  return {(in.height + 2 * padding - kernel) / stride + 1, (in.width + 2 * padding - kernel) / stride + 1};
}

[[noreturn]] void mismatch(const LayerSpec& layer, const std::string& what) {
  throw Error(ErrorKind::StructureMismatch, "layer '" + layer.name + "': " + what);
}

}  // namespace

ConcreteNetwork apply_structure(const ArchTemplate& t, const StructureVector& s) {
  validate_structure(t, s);

  std::vector<int> width(t.groups.size());
  for (std::size_t g = 0; g < t.groups.size(); ++g) {
    width[g] = g < s.channels.size() ? s.channels[g] : t.groups[g].original_count;
  }

  ConcreteNetwork net{t.arch_id, {}};
  net.layers.reserve(t.layers.size());

  const auto producer_width = [&](int input) {
    return input == kNetworkInput ? t.input_shape.channels : net.layers.at(input).c_out;
  };

  for (const LayerSpec& spec : t.layers) {
    ConcreteLayer out;
    out.name = spec.name;
    out.kind = spec.kind;
    out.kernel = spec.kernel;
    out.stride = spec.stride;
    out.padding = spec.padding;
    out.bias = spec.bias;
    out.in_spatial = spec.in_spatial;
    if (spec.inputs.empty()) mismatch(spec, "no inputs");

    switch (spec.kind) {
      case LayerKind::Conv:
      case LayerKind::Dense: {
        const int produced = producer_width(spec.inputs.front());
        out.c_in = width.at(spec.in_group);
        out.c_out = width.at(spec.out_group);
        if (produced != out.c_in) {
          mismatch(spec, "consumes " + std::to_string(out.c_in) + " channels but producer emits " +
                             std::to_string(produced));
        }
        out.out_spatial = spec.kind == LayerKind::Conv
                              ? window_output(spec.in_spatial, spec.kernel, spec.stride, spec.padding)
                              : Spatial{1, 1};
        break;
      }
      case LayerKind::BatchNorm:
        out.c_in = out.c_out = producer_width(spec.inputs.front());
        out.out_spatial = spec.in_spatial;
        break;
      case LayerKind::Pool:
        out.c_in = out.c_out = producer_width(spec.inputs.front());
        out.out_spatial = window_output(spec.in_spatial, spec.kernel, spec.stride, spec.padding);
        break;
      case LayerKind::Add: {
        out.c_in = out.c_out = producer_width(spec.inputs.front());
        for (int input : spec.inputs) {
          if (producer_width(input) != out.c_out) mismatch(spec, "add operands differ in width");
        }
        out.out_spatial = spec.in_spatial;
        break;
      }
      case LayerKind::Concat: {
        int total = 0;
        for (int input : spec.inputs) total += producer_width(input);
        out.c_in = out.c_out = total;
        if (spec.out_group >= 0 && width.at(spec.out_group) != total) {
          mismatch(spec, "concat width " + std::to_string(total) + " differs from group width " +
                             std::to_string(width.at(spec.out_group)));
        }
        out.out_spatial = spec.in_spatial;
        break;
      }
    }
    net.layers.push_back(std::move(out));
  }
  return net;
}

StructureVector read_free_widths(const ArchTemplate& t, const ConcreteNetwork& n) {
  StructureVector s{t.arch_id, std::vector<int>(t.free_group_count(), 0)};
  for (std::size_t g = 0; g < s.channels.size(); ++g) {
    const PruneGroup& group = t.groups[g];
    if (group.member_edges.empty()) continue;
    const MemberEdge& edge = group.member_edges.front();
    const ConcreteLayer& layer = n.layers.at(edge.layer_id);
    s.channels[g] = edge.role == EdgeRole::Produces ? layer.c_out : layer.c_in;
  }
  return s;
}

std::int64_t count_params(const ConcreteNetwork& n) {
  std::int64_t total = 0;
  for (const ConcreteLayer& l : n.layers) {
    const std::int64_t cin = l.c_in, cout = l.c_out;
    switch (l.kind) {
      case LayerKind::Conv:
        total += std::int64_t{l.kernel} * l.kernel * cin * cout + (l.bias ? cout : 0);
        break;
      case LayerKind::Dense:
        total += cin * l.in_spatial.height * l.in_spatial.width * cout + cout;
        break;
      case LayerKind::BatchNorm:
        total += 2 * cout;
        break;
      default:
        break;
    }
  }
  return total;
}

std::int64_t count_flops(const ConcreteNetwork& n) {
  std::int64_t total = 0;
  for (const ConcreteLayer& l : n.layers) {
    const std::int64_t cin = l.c_in, cout = l.c_out;
    if (l.kind == LayerKind::Conv) {
      total += std::int64_t{l.kernel} * l.kernel * cin * cout * l.out_spatial.height * l.out_spatial.width;
    } else if (l.kind == LayerKind::Dense) {
      total += cin * l.in_spatial.height * l.in_spatial.width * cout;
    }
  }
  return total;
}

Totals count_totals(const ConcreteNetwork& n) { return {count_params(n), count_flops(n)}; }

double drop_percent(double baseline, double pruned) {
  if (baseline == 0.0) return 0.0;
  return 100.0 * (baseline - pruned) / baseline;
}

CompressionReport compression_report(const Totals& baseline, const Totals& pruned) {
  CompressionReport r;
  r.baseline = baseline;
  r.pruned = pruned;
  r.params_removed = baseline.params - pruned.params;
  r.flops_removed = baseline.flops - pruned.flops;
  r.params_drop_pct = drop_percent(static_cast<double>(baseline.params), static_cast<double>(pruned.params));
  r.flops_drop_pct = drop_percent(static_cast<double>(baseline.flops), static_cast<double>(pruned.flops));
  return r;
}

CompressionReport compression_report(const ArchTemplate& t, const StructureVector& baseline,
                                     const StructureVector& pruned) {
  const Totals base = count_totals(apply_structure(t, baseline));
  const Totals cut = count_totals(apply_structure(t, pruned));
  CompressionReport r = compression_report(base, cut);
  r.arch_id = t.arch_id;
  for (std::size_t g = 0; g < baseline.channels.size(); ++g) {
    r.groups.push_back({t.groups[g].name, baseline.channels[g], pruned.channels[g]});
  }
  return r;
}

}  // namespace acp
