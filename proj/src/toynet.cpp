#include "acp/toynet.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "acp/error.hpp"
#include "acp/random.hpp"

namespace acp {

SynthDataset SynthDataset::head(std::size_t count) const {
  SynthDataset out = *this;
  count = std::min(count, size());
  out.labels.resize(count);
  out.inputs.resize(count * image_size());
  return out;
}

namespace {

constexpr int kSide = 8;

struct BlobCenter {
  double row;
  double col;
};

BlobCenter blob_center(int label, int classes) {
  const double angle = 2.0 * std::numbers::pi * label / classes + std::numbers::pi / 4.0;
  const double mid = (kSide - 1) / 2.0;
  return {mid + 2.0 * std::sin(angle), mid + 2.0 * std::cos(angle)};
}

double min_prototype_separation(int classes, const SynthOptions& options) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> protos;
  for (int c = 0; c < classes; ++c) protos.push_back(class_prototype(c, classes, options));
  for (int a = 0; a < classes; ++a) {
    for (int b = a + 1; b < classes; ++b) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < protos[a].size(); ++k) d2 += (protos[a][k] - protos[b][k]) * (protos[a][k] - protos[b][k]);
      best = std::min(best, std::sqrt(d2));
    }
  }
  return best;
}

}  // namespace

std::vector<double> class_prototype(int label, int classes, const SynthOptions& options) {
  const BlobCenter c = blob_center(label, classes);
  std::vector<double> image(kSide * kSide);
  const double denom = 2.0 * options.blob_width * options.blob_width;
  for (int h = 0; h < kSide; ++h) {
    for (int w = 0; w < kSide; ++w) {
      const double d2 = (h - c.row) * (h - c.row) + (w - c.col) * (w - c.col);
      image[h * kSide + w] = std::exp(-d2 / denom);
    }
  }
  return image;
}

SynthDataset synth_dataset(std::uint64_t seed, int n, int classes, const SynthOptions& options) {
  if (classes < 2 || n < classes) {
    throw Error(ErrorKind::Config, "synthetic dataset needs n >= classes >= 2");
  }
  if (!(options.margin > 0.0) || !(options.blob_width > 0.0)) {
    throw Error(ErrorKind::Config, "synthetic dataset margin and blob width must be positive");
  }
  SynthDataset d;
  d.classes = classes;
  d.seed = seed;
  const double pixels = static_cast<double>(d.image_size());
  d.noise_sigma = min_prototype_separation(classes, options) / (options.margin * std::sqrt(pixels));

  std::vector<std::vector<double>> protos;
  for (int c = 0; c < classes; ++c) protos.push_back(class_prototype(c, classes, options));

  Rng rng(seed);
  d.inputs.reserve(static_cast<std::size_t>(n) * d.image_size());
  for (int i = 0; i < n; ++i) {
    const int label = i % classes;
    d.labels.push_back(label);
    for (double v : protos[label]) d.inputs.push_back(v + d.noise_sigma * rng.normal());
  }
  return d;
}

ToyNet ToyNet::layout(const ArchTemplate& t, const StructureVector& s) {
  if (!parse_toynet_id(t.arch_id)) {
    throw Error(ErrorKind::UnknownArchitecture, "'" + t.arch_id + "' is not a toynet template");
  }
  const ConcreteNetwork n = apply_structure(t, s);
  ToyNet net;
  net.input_channels_ = t.input_shape.channels;
  net.height_ = t.input_shape.height;
  net.width_ = t.input_shape.width;
  net.classes_ = t.num_classes;
  std::size_t offset = 0;
  for (const ConcreteLayer& l : n.layers) {
    if (l.kind == LayerKind::Conv) {
      Conv c{l.name, l.c_in, l.c_out, offset, 0};
      offset += static_cast<std::size_t>(l.c_out) * l.c_in * 9;
      c.bias_offset = offset;
      offset += static_cast<std::size_t>(l.c_out);
      net.convs_.push_back(std::move(c));
    } else if (l.kind == LayerKind::Dense) {
      net.dense_inputs_ = static_cast<std::size_t>(l.c_in) * l.in_spatial.height * l.in_spatial.width;
      net.dense_weight_offset_ = offset;
      offset += net.dense_inputs_ * static_cast<std::size_t>(l.c_out);
      net.dense_bias_offset_ = offset;
      offset += static_cast<std::size_t>(l.c_out);
    }
  }
  net.params_.assign(offset, 0.0);
  return net;
}

ToyNet ToyNet::zeros(const ArchTemplate& t, const StructureVector& s) { return layout(t, s); }

ToyNet ToyNet::create(const ArchTemplate& t, const StructureVector& s, std::uint64_t seed) {
  ToyNet net = layout(t, s);
  Rng rng(seed);
  for (const Conv& c : net.convs_) {
    const double scale = std::sqrt(2.0 / (c.c_in * 9.0));
    for (std::size_t k = 0; k < static_cast<std::size_t>(c.c_out) * c.c_in * 9; ++k) {
      net.params_[c.weight_offset + k] = scale * rng.normal();
    }
  }
  const double scale = std::sqrt(1.0 / static_cast<double>(net.dense_inputs_));
  for (std::size_t k = 0; k < net.dense_inputs_ * static_cast<std::size_t>(net.classes_); ++k) {
    net.params_[net.dense_weight_offset_ + k] = scale * rng.normal();
  }
  return net;
}

void ToyNet::forward(std::span<const double> image, Activations& a) const {
  const int H = height_, W = width_, plane = H * W;
  a.pre.resize(convs_.size());
  a.post.resize(convs_.size());
  std::span<const double> in = image;
  for (std::size_t l = 0; l < convs_.size(); ++l) {
    const Conv& c = convs_[l];
    std::vector<double>& out = a.pre[l];
    out.assign(static_cast<std::size_t>(c.c_out) * plane, 0.0);
    for (int o = 0; o < c.c_out; ++o) {
      double* dst = out.data() + o * plane;
      std::fill(dst, dst + plane, params_[c.bias_offset + o]);
      for (int i = 0; i < c.c_in; ++i) {
        const double* src = in.data() + i * plane;
        const double* k = params_.data() + c.weight_offset + (static_cast<std::size_t>(o) * c.c_in + i) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          for (int kw = 0; kw < 3; ++kw) {
            const double wgt = k[kh * 3 + kw];
            const int h0 = std::max(0, 1 - kh), h1 = std::min(H, H + 1 - kh);
            const int w0 = std::max(0, 1 - kw), w1 = std::min(W, W + 1 - kw);
            for (int h = h0; h < h1; ++h) {
              const double* row = src + (h + kh - 1) * W + (kw - 1);
              double* drow = dst + h * W;
              for (int w = w0; w < w1; ++w) drow[w] += wgt * row[w];
            }
          }
        }
      }
    }
    a.post[l].resize(out.size());
    std::transform(out.begin(), out.end(), a.post[l].begin(), [](double v) { return v > 0.0 ? v : 0.0; });
    in = a.post[l];
  }

  const int channels = convs_.empty() ? input_channels_ : convs_.back().c_out;
  const int PH = H / 2, PW = W / 2;
  a.pooled.assign(static_cast<std::size_t>(channels) * PH * PW, 0.0);
  for (int ch = 0; ch < channels; ++ch) {
    for (int h = 0; h < PH; ++h) {
      for (int w = 0; w < PW; ++w) {
        const double* src = in.data() + ch * plane + 2 * h * W + 2 * w;
        a.pooled[(ch * PH + h) * PW + w] = 0.25 * (src[0] + src[1] + src[W] + src[W + 1]);
      }
    }
  }

  a.logits.assign(static_cast<std::size_t>(classes_), 0.0);
  for (int k = 0; k < classes_; ++k) {
    const double* row = params_.data() + dense_weight_offset_ + static_cast<std::size_t>(k) * dense_inputs_;
    double z = params_[dense_bias_offset_ + k];
    for (std::size_t j = 0; j < dense_inputs_; ++j) z += row[j] * a.pooled[j];
    a.logits[k] = z;
  }
}

std::vector<double> ToyNet::logits(std::span<const double> image) const {
  Activations a;
  forward(image, a);
  return a.logits;
}

namespace {

// Returns -log softmax(z)[label] and writes softmax(z) - onehot into dz.
double cross_entropy(std::span<const double> z, int label, std::vector<double>* dz) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - zmax);
  const double log_norm = zmax + std::log(sum);
  if (dz) {
    dz->resize(z.size());
    for (std::size_t k = 0; k < z.size(); ++k) (*dz)[k] = std::exp(z[k] - log_norm) - (static_cast<int>(k) == label);
  }
  return log_norm - z[static_cast<std::size_t>(label)];
}

}  // namespace

double ToyNet::loss(const SynthDataset& data, std::span<const std::size_t> batch) const {
  Activations a;
  double total = 0.0;
  for (std::size_t idx : batch) {
    forward(data.image(idx), a);
    total += cross_entropy(a.logits, data.labels[idx], nullptr);
  }
  return batch.empty() ? 0.0 : total / static_cast<double>(batch.size());
}

double ToyNet::loss_and_gradient(const SynthDataset& data, std::span<const std::size_t> batch,
                                 std::vector<double>& grad) const {
  grad.assign(params_.size(), 0.0);
  if (batch.empty()) return 0.0;
  const int H = height_, W = width_, plane = H * W;
  const int PH = H / 2, PW = W / 2;
  const int last_channels = convs_.empty() ? input_channels_ : convs_.back().c_out;

  Activations a;
  std::vector<double> dz, dpooled, dact, din;
  double total = 0.0;

  for (std::size_t idx : batch) {
    const std::span<const double> image = data.image(idx);
    forward(image, a);
    total += cross_entropy(a.logits, data.labels[idx], &dz);

    dpooled.assign(dense_inputs_, 0.0);
    for (int k = 0; k < classes_; ++k) {
      const double g = dz[k];
      grad[dense_bias_offset_ + k] += g;
      double* gw = grad.data() + dense_weight_offset_ + static_cast<std::size_t>(k) * dense_inputs_;
      const double* w = params_.data() + dense_weight_offset_ + static_cast<std::size_t>(k) * dense_inputs_;
      for (std::size_t j = 0; j < dense_inputs_; ++j) {
        gw[j] += g * a.pooled[j];
        dpooled[j] += g * w[j];
      }
    }
    if (convs_.empty()) continue;

    dact.assign(static_cast<std::size_t>(last_channels) * plane, 0.0);
    for (int ch = 0; ch < last_channels; ++ch) {
      for (int h = 0; h < PH; ++h) {
        for (int w = 0; w < PW; ++w) {
          const double g = 0.25 * dpooled[(ch * PH + h) * PW + w];
          double* dst = dact.data() + ch * plane + 2 * h * W + 2 * w;
          dst[0] += g;
          dst[1] += g;
          dst[W] += g;
          dst[W + 1] += g;
        }
      }
    }

    for (std::size_t l = convs_.size(); l-- > 0;) {
      const Conv& c = convs_[l];
      const std::vector<double>& pre = a.pre[l];
      for (std::size_t k = 0; k < dact.size(); ++k) {
        if (pre[k] <= 0.0) dact[k] = 0.0;
      }
      const std::span<const double> in = l == 0 ? image : std::span<const double>(a.post[l - 1]);
      const bool need_input_grad = l > 0;
      if (need_input_grad) din.assign(static_cast<std::size_t>(c.c_in) * plane, 0.0);

      for (int o = 0; o < c.c_out; ++o) {
        const double* g = dact.data() + o * plane;
        grad[c.bias_offset + o] += std::accumulate(g, g + plane, 0.0);
        for (int i = 0; i < c.c_in; ++i) {
          const double* src = in.data() + i * plane;
          const std::size_t kbase = c.weight_offset + (static_cast<std::size_t>(o) * c.c_in + i) * 9;
          for (int kh = 0; kh < 3; ++kh) {
            for (int kw = 0; kw < 3; ++kw) {
              const int h0 = std::max(0, 1 - kh), h1 = std::min(H, H + 1 - kh);
              const int w0 = std::max(0, 1 - kw), w1 = std::min(W, W + 1 - kw);
              const double wgt = params_[kbase + kh * 3 + kw];
              double acc = 0.0;
              for (int h = h0; h < h1; ++h) {
                const double* row = src + (h + kh - 1) * W + (kw - 1);
                const double* grow = g + h * W;
                for (int w = w0; w < w1; ++w) acc += grow[w] * row[w];
              }
              grad[kbase + kh * 3 + kw] += acc;
              if (need_input_grad) {
                double* dsrc = din.data() + i * plane;
                for (int h = h0; h < h1; ++h) {
                  double* drow = dsrc + (h + kh - 1) * W + (kw - 1);
                  const double* grow = g + h * W;
                  for (int w = w0; w < w1; ++w) drow[w] += wgt * grow[w];
                }
              }
            }
          }
        }
      }
      if (need_input_grad) dact.swap(din);
    }
  }

  const double scale = 1.0 / static_cast<double>(batch.size());
  for (double& g : grad) g *= scale;
  return total * scale;
}

CaptureResult forward_capture(const ToyNet& net, const SynthDataset& batch) {
  const std::size_t expected = static_cast<std::size_t>(net.input_channels_) * net.height_ * net.width_;
  if (batch.image_size() != expected || batch.inputs.size() != batch.size() * batch.image_size()) {
    throw Error(ErrorKind::ShapeMismatch, "batch images have " + std::to_string(batch.image_size()) +
                                              " values, network expects " + std::to_string(expected));
  }
  CaptureResult out;
  const auto samples = static_cast<std::uint32_t>(batch.size());
  for (const auto& c : net.convs_) {
    FeatureDump d;
    d.layer_name = c.name;
    d.shape = {samples, static_cast<std::uint32_t>(c.c_out), static_cast<std::uint32_t>(net.height_),
               static_cast<std::uint32_t>(net.width_)};
    d.data.reserve(d.shape.element_count());
    out.dumps.push_back(std::move(d));
  }
  ToyNet::Activations a;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    net.forward(batch.image(i), a);
    out.logits.push_back(a.logits);
    for (std::size_t l = 0; l < net.convs_.size(); ++l) {
      for (double v : a.post[l]) out.dumps[l].data.push_back(static_cast<float>(v));
    }
  }
  return out;
}

TrainReport train(ToyNet& net, const SynthDataset& data, const TrainOptions& options) {
  if (options.epochs < 1) throw Error(ErrorKind::Config, "training needs epochs >= 1");
  if (options.batch_size < 1) throw Error(ErrorKind::Config, "training needs batch_size >= 1");
  if (data.size() == 0) throw Error(ErrorKind::EmptyDataset, "cannot train on an empty dataset");

  TrainReport report;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> grad;
  const std::span<double> params = net.parameters();

  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t count = std::min(order.size() - start, static_cast<std::size_t>(options.batch_size));
      const std::span<const std::size_t> batch(order.data() + start, count);
      const double batch_loss = net.loss_and_gradient(data, batch, grad);
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorKind::TrainingDiverged, "training loss became non-finite in epoch " + std::to_string(epoch + 1));
      }
      epoch_loss += batch_loss * static_cast<double>(count);
      for (std::size_t k = 0; k < params.size(); ++k) params[k] -= options.learning_rate * grad[k];
    }
    report.epoch_loss.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  for (double p : params) {
    if (!std::isfinite(p)) throw Error(ErrorKind::TrainingDiverged, "training produced non-finite weights");
  }
  return report;
}

double accuracy(const ToyNet& net, const SynthDataset& data) {
  if (data.size() == 0) throw Error(ErrorKind::EmptyDataset, "accuracy of an empty dataset is undefined");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::vector<double> z = net.logits(data.image(i));
    const auto best = std::max_element(z.begin(), z.end()) - z.begin();
    if (best == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

GradCheckReport grad_check(const ToyNet& net, const SynthDataset& batch, double tolerance, double step,
                           std::size_t samples, std::uint64_t seed) {
  std::vector<std::size_t> all(batch.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<double> analytic;
  net.loss_and_gradient(batch, all, analytic);

  std::vector<std::size_t> picks(analytic.size());
  std::iota(picks.begin(), picks.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = picks.size(); i > 1; --i) std::swap(picks[i - 1], picks[rng.below(i)]);
  picks.resize(std::min(samples, picks.size()));

  GradCheckReport report;
  ToyNet probe = net;
  for (std::size_t k : picks) {
    const double original = probe.parameters()[k];
    probe.parameters()[k] = original + step;
    const double up = probe.loss(batch, all);
    probe.parameters()[k] = original - step;
    const double down = probe.loss(batch, all);
    probe.parameters()[k] = original;
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max(std::abs(analytic[k]) + std::abs(numeric), 1e-8);
    report.max_relative_error = std::max(report.max_relative_error, std::abs(analytic[k] - numeric) / denom);
    ++report.checked;
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

ToyNetEvaluator::ToyNetEvaluator(ArchTemplate t, const ToyNetSpec& spec) : template_(std::move(t)), spec_(spec) {
  if (!parse_toynet_id(template_.arch_id)) {
    throw Error(ErrorKind::UnknownArchitecture, "the toynet evaluator needs a toynet architecture, got '" + template_.arch_id + "'");
  }
  const SynthOptions options{spec.margin, SynthOptions{}.blob_width};
  train_ = synth_dataset(spec.dataset_seed, spec.train_size, template_.num_classes, options);
  test_ = synth_dataset(mix_seed(spec.dataset_seed, 1), spec.test_size, template_.num_classes, options);
}

double ToyNetEvaluator::evaluate(const StructureVector& s, std::uint64_t seed) {
  ToyNet net = ToyNet::create(template_, s, seed);
  train(net, train_, TrainOptions{spec_.epochs, spec_.learning_rate, spec_.batch_size, seed});
  return accuracy(net, test_);
}

}  // namespace acp
