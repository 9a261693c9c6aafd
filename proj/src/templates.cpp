#include <array>
#include <regex>
#include <string>
#include <utility>

#include "acp/error.hpp"
#include "acp/structmodel.hpp"

namespace acp {
namespace {

// Appends layers in topological order, tracking each layer's output
// width group and spatial size so that consumers can be wired by id.
class TemplateBuilder {
 public:
  TemplateBuilder(std::string arch_id, InputShape input, int num_classes) {
    t_.arch_id = std::move(arch_id);
    t_.input_shape = input;
    t_.num_classes = num_classes;
    input_group_ = group("input", input.channels, true);
  }

  int group(std::string name, int count, bool frozen) {
    PruneGroup g;
    g.group_id = static_cast<int>(t_.groups.size());
    g.name = std::move(name);
    g.original_count = count;
    g.frozen = frozen;
    t_.groups.push_back(std::move(g));
    return t_.groups.back().group_id;
  }

  int input() const { return kNetworkInput; }

  int conv(std::string name, int from, int out_group, int kernel, int stride, int padding, bool bias) {
    LayerSpec l = base(std::move(name), LayerKind::Conv, from);
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    l.bias = bias;
    l.in_group = group_of(from);
    l.out_group = out_group;
    const Spatial out{(l.in_spatial.height + 2 * padding - kernel) / stride + 1,
                      (l.in_spatial.width + 2 * padding - kernel) / stride + 1};
    return push(std::move(l), out_group, out);
  }

  int batchnorm(std::string name, int from) {
    LayerSpec l = base(std::move(name), LayerKind::BatchNorm, from);
    return push(std::move(l), group_of(from), spatial_of(from));
  }

  int pool(std::string name, int from, int kernel, int stride, int padding = 0) {
    LayerSpec l = base(std::move(name), LayerKind::Pool, from);
    l.kernel = kernel;
    l.stride = stride;
    l.padding = padding;
    const Spatial in = spatial_of(from);
    return push(std::move(l), group_of(from),
                {(in.height + 2 * padding - kernel) / stride + 1, (in.width + 2 * padding - kernel) / stride + 1});
  }

  int add(std::string name, int a, int b) {
    LayerSpec l = base(std::move(name), LayerKind::Add, a);
    l.inputs.push_back(b);
    return push(std::move(l), group_of(a), spatial_of(a));
  }

  int concat(std::string name, const std::vector<int>& from, int out_group) {
    LayerSpec l = base(std::move(name), LayerKind::Concat, from.front());
    l.inputs = from;
    l.out_group = out_group;
    return push(std::move(l), out_group, spatial_of(from.front()));
  }

  int dense(std::string name, int from, int out_group) {
    LayerSpec l = base(std::move(name), LayerKind::Dense, from);
    l.bias = true;
    l.in_group = group_of(from);
    l.out_group = out_group;
    return push(std::move(l), out_group, {1, 1});
  }

  // Renumbers groups so that free groups come first, fills member edges,
  // and checks that the baseline resolves.
  ArchTemplate finish() && {
    std::vector<int> remap(t_.groups.size());
    std::vector<PruneGroup> ordered;
    for (int pass = 0; pass < 2; ++pass) {
      for (PruneGroup& g : t_.groups) {
        if (g.frozen != (pass == 1)) continue;
        remap[g.group_id] = static_cast<int>(ordered.size());
        g.group_id = static_cast<int>(ordered.size());
        ordered.push_back(std::move(g));
      }
    }
    t_.groups = std::move(ordered);
    for (std::size_t id = 0; id < t_.layers.size(); ++id) {
      LayerSpec& l = t_.layers[id];
      if (l.in_group >= 0) {
        l.in_group = remap[l.in_group];
        t_.groups[l.in_group].member_edges.push_back({static_cast<int>(id), EdgeRole::Consumes});
      }
      if (l.out_group >= 0) {
        l.out_group = remap[l.out_group];
        t_.groups[l.out_group].member_edges.push_back({static_cast<int>(id), EdgeRole::Produces});
      }
    }
    // Produces edges first so read-back can use the first member.
    for (PruneGroup& g : t_.groups) {
      std::stable_sort(g.member_edges.begin(), g.member_edges.end(),
                       [](const MemberEdge& a, const MemberEdge& b) {
                         return a.role == EdgeRole::Produces && b.role != EdgeRole::Produces;
                       });
    }
    apply_structure(t_, baseline_structure(t_));
    return std::move(t_);
  }

 private:
  LayerSpec base(std::string name, LayerKind kind, int from) const {
    LayerSpec l;
    l.name = std::move(name);
    l.kind = kind;
    l.inputs = {from};
    l.in_spatial = spatial_of(from);
    return l;
  }

  int push(LayerSpec l, int width_group, Spatial out) {
    t_.layers.push_back(std::move(l));
    out_group_.push_back(width_group);
    out_spatial_.push_back(out);
    return static_cast<int>(t_.layers.size()) - 1;
  }

  int group_of(int layer) const { return layer == kNetworkInput ? input_group_ : out_group_.at(layer); }

  Spatial spatial_of(int layer) const {
    return layer == kNetworkInput ? Spatial{t_.input_shape.height, t_.input_shape.width} : out_spatial_.at(layer);
  }

  ArchTemplate t_;
  int input_group_ = 0;
  std::vector<int> out_group_;
  std::vector<Spatial> out_spatial_;
};

constexpr InputShape kCifarInput{3, 32, 32};

// 0 marks a 2x2 max-pool.
ArchTemplate build_vgg(std::string arch_id, const std::vector<int>& config, int num_classes) {
  TemplateBuilder b(std::move(arch_id), kCifarInput, num_classes);
  int last = b.input();
  int conv_index = 0;
  int pool_index = 0;
  for (int width : config) {
    if (width == 0) {
      last = b.pool("pool" + std::to_string(++pool_index), last, 2, 2);
      continue;
    }
    const std::string name = "conv" + std::to_string(++conv_index);
    const int g = b.group(name, width, false);
    last = b.conv(name, last, g, 3, 1, 1, true);
    last = b.batchnorm(name + ".bn", last);
  }
  const int classes = b.group("classes", num_classes, true);
  b.dense("fc", last, classes);
  return std::move(b).finish();
}

// CIFAR ResNet with basic blocks. Only the first conv of each block is
// prunable; the second conv emits the stage trunk width so the residual
// add always sees matching operands. Downsampling shortcuts are 1x1
// projections whose widths are frozen.
ArchTemplate build_resnet_cifar(std::string arch_id, int depth, int num_classes) {
  const int blocks = (depth - 2) / 6;
  TemplateBuilder b(std::move(arch_id), kCifarInput, num_classes);
  constexpr std::array<int, 3> kStageWidth{16, 32, 64};

  int trunk = b.group("trunk0", kStageWidth[0], true);
  int last = b.conv("conv1", b.input(), trunk, 3, 1, 1, false);
  last = b.batchnorm("bn1", last);

  for (int stage = 0; stage < 3; ++stage) {
    const int planes = kStageWidth[stage];
    const int stage_trunk = stage == 0 ? trunk : b.group("trunk" + std::to_string(stage), planes, true);
    for (int block = 0; block < blocks; ++block) {
      const std::string prefix = "layer" + std::to_string(stage + 1) + "." + std::to_string(block);
      const int stride = (stage > 0 && block == 0) ? 2 : 1;
      const int mid = b.group(prefix + ".conv1", planes, false);
      int x = b.conv(prefix + ".conv1", last, mid, 3, stride, 1, false);
      x = b.batchnorm(prefix + ".bn1", x);
      x = b.conv(prefix + ".conv2", x, stage_trunk, 3, 1, 1, false);
      x = b.batchnorm(prefix + ".bn2", x);
      int shortcut = last;
      if (stride != 1) {
        shortcut = b.conv(prefix + ".shortcut", last, stage_trunk, 1, stride, 0, false);
        shortcut = b.batchnorm(prefix + ".shortcut.bn", shortcut);
      }
      last = b.add(prefix + ".add", x, shortcut);
    }
  }
  last = b.pool("avgpool", last, 8, 8);
  const int classes = b.group("classes", num_classes, true);
  b.dense("fc", last, classes);
  return std::move(b).finish();
}

struct InceptionWidths {
  const char* name;
  int n1x1, n3x3red, n3x3, n5x5red, n5x5, pool_planes;
};

// Four branches: 1x1; 1x1 -> 3x3; 1x1 -> 3x3 -> 3x3; pool -> 1x1. The
// interior widths of the two- and three-conv branches are free; every
// branch output feeds the concat and stays frozen.
int inception(TemplateBuilder& b, int from, const InceptionWidths& w) {
  const std::string p = w.name;
  const auto conv_bn = [&](const std::string& name, int in, int group, int kernel) {
    const int c = b.conv(name, in, group, kernel, 1, kernel / 2, true);
    return b.batchnorm(name + ".bn", c);
  };

  const int b1 = conv_bn(p + ".b1.conv", from, b.group(p + ".b1.out", w.n1x1, true), 1);

  int b2 = conv_bn(p + ".b2.reduce", from, b.group(p + ".b2.reduce", w.n3x3red, false), 1);
  b2 = conv_bn(p + ".b2.conv", b2, b.group(p + ".b2.out", w.n3x3, true), 3);

  int b3 = conv_bn(p + ".b3.reduce", from, b.group(p + ".b3.reduce", w.n5x5red, false), 1);
  b3 = conv_bn(p + ".b3.conv1", b3, b.group(p + ".b3.conv1", w.n5x5, false), 3);
  b3 = conv_bn(p + ".b3.conv2", b3, b.group(p + ".b3.out", w.n5x5, true), 3);

  int b4 = b.pool(p + ".b4.pool", from, 3, 1, 1);
  b4 = conv_bn(p + ".b4.conv", b4, b.group(p + ".b4.out", w.pool_planes, true), 1);

  const int total = w.n1x1 + w.n3x3 + w.n5x5 + w.pool_planes;
  return b.concat(p + ".concat", {b1, b2, b3, b4}, b.group(p + ".concat", total, true));
}

ArchTemplate build_googlenet_cifar(int num_classes) {
  TemplateBuilder b("googlenet-cifar", kCifarInput, num_classes);
  int last = b.conv("pre.conv", b.input(), b.group("pre.out", 192, true), 3, 1, 1, true);
  last = b.batchnorm("pre.bn", last);

  const std::array<InceptionWidths, 2> stage3{{{"a3", 64, 96, 128, 16, 32, 32}, {"b3", 128, 128, 192, 32, 96, 64}}};
  const std::array<InceptionWidths, 5> stage4{{{"a4", 192, 96, 208, 16, 48, 64},
                                               {"b4", 160, 112, 224, 24, 64, 64},
                                               {"c4", 128, 128, 256, 24, 64, 64},
                                               {"d4", 112, 144, 288, 32, 64, 64},
                                               {"e4", 256, 160, 320, 32, 128, 128}}};
  const std::array<InceptionWidths, 2> stage5{{{"a5", 256, 160, 320, 32, 128, 128}, {"b5", 384, 192, 384, 48, 128, 128}}};

  for (const auto& w : stage3) last = inception(b, last, w);
  last = b.pool("pool3", last, 3, 2, 1);
  for (const auto& w : stage4) last = inception(b, last, w);
  last = b.pool("pool4", last, 3, 2, 1);
  for (const auto& w : stage5) last = inception(b, last, w);
  last = b.pool("avgpool", last, 8, 8);
  b.dense("fc", last, b.group("classes", num_classes, true));
  return std::move(b).finish();
}

}  // namespace

std::optional<ToyNetShape> parse_toynet_id(std::string_view arch_id) {
  static const std::regex kPattern(R"(toynet-(\d{1,3})(?:w(\d{1,4}))?(?:c(\d{1,3}))?)");
  std::match_results<std::string_view::const_iterator> m;
  if (!std::regex_match(arch_id.begin(), arch_id.end(), m, kPattern)) return std::nullopt;
  ToyNetShape shape;
  shape.depth = std::stoi(m[1].str());
  if (m[2].matched) shape.width = std::stoi(m[2].str());
  if (m[3].matched) shape.classes = std::stoi(m[3].str());
  if (shape.depth < 1 || shape.width < 1 || shape.classes < 2) return std::nullopt;
  return shape;
}

std::string toynet_id(const ToyNetShape& shape) {
  std::string id = "toynet-" + std::to_string(shape.depth);
  const ToyNetShape defaults;
  if (shape.width != defaults.width) id += "w" + std::to_string(shape.width);
  if (shape.classes != defaults.classes) id += "c" + std::to_string(shape.classes);
  return id;
}

// k 3x3 convs (bias, rectified) on a 1x8x8 input, a 2x2 average pool and a
// dense classifier over the flattened 4x4 maps. No batchnorm.
ArchTemplate make_toynet_template(const ToyNetShape& shape) {
  TemplateBuilder b(toynet_id(shape), InputShape{1, 8, 8}, shape.classes);
  int last = b.input();
  for (int i = 1; i <= shape.depth; ++i) {
    const std::string name = "conv" + std::to_string(i);
    last = b.conv(name, last, b.group(name, shape.width, false), 3, 1, 1, true);
  }
  last = b.pool("pool", last, 2, 2);
  b.dense("fc", last, b.group("classes", shape.classes, true));
  return std::move(b).finish();
}

ArchTemplate build_template(std::string_view arch_id, int num_classes) {
  if (arch_id == "vgg16-cifar") {
    return build_vgg("vgg16-cifar", {64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512, 0},
                     num_classes);
  }
  if (arch_id == "vgg19-cifar") {
    return build_vgg("vgg19-cifar",
                     {64, 64, 0, 128, 128, 0, 256, 256, 256, 256, 0, 512, 512, 512, 512, 0, 512, 512, 512, 512, 0},
                     num_classes);
  }
  if (arch_id == "resnet56-cifar") return build_resnet_cifar("resnet56-cifar", 56, num_classes);
  if (arch_id == "resnet110-cifar") return build_resnet_cifar("resnet110-cifar", 110, num_classes);
  if (arch_id == "googlenet-cifar") return build_googlenet_cifar(num_classes);
  if (auto toy = parse_toynet_id(arch_id)) {
    toy->classes = num_classes;
    return make_toynet_template(*toy);
  }
  throw Error(ErrorKind::UnknownArchitecture, "unknown architecture '" + std::string(arch_id) + "'");
}

ArchTemplate build_template(std::string_view arch_id) {
  if (auto toy = parse_toynet_id(arch_id)) {
    ArchTemplate t = make_toynet_template(*toy);
    t.arch_id = arch_id;
    return t;
  }
  return build_template(arch_id, 10);
}

}  // namespace acp
