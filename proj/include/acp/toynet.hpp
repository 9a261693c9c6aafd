#pragma once

// A small trainable convolutional network on synthetic images.
//
// Architecture follows the toynet templates: a stack of 3x3 convolutions
// (padding 1, bias, rectified) at full resolution, a 2x2 average pool and a
// dense softmax classifier over the flattened pooled maps. Everything is
// double precision and single threaded.

#include <cstdint>
#include <span>
#include <vector>

#include "acp/featio.hpp"
#include "acp/fitness.hpp"
#include "acp/structmodel.hpp"

namespace acp {

struct SynthOptions {
  /// Ratio of the smallest distance between class prototypes to the
  /// expected distance of a sample from its own prototype.
  double margin = 2.0;
  double blob_width = 1.2;
};

struct SynthDataset {
  int classes = 2;
  int channels = 1;
  int height = 8;
  int width = 8;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  std::vector<double> inputs;  // n * channels * height * width
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t image_size() const noexcept {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height * width);
  }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(inputs).subspan(i * image_size(), image_size());
  }
  /// The first `count` samples.
  SynthDataset head(std::size_t count) const;
};

/// Class-conditional Gaussian blob images with balanced labels. Requires
/// n >= classes >= 2 (throws Config otherwise).
SynthDataset synth_dataset(std::uint64_t seed, int n, int classes, const SynthOptions& options = {});

/// Noise-free class prototype image.
std::vector<double> class_prototype(int label, int classes, const SynthOptions& options = {});

struct CaptureResult {
  std::vector<std::vector<double>> logits;  // per sample
  std::vector<FeatureDump> dumps;           // post-activation maps per conv layer
};

class ToyNet {
 public:
  /// He-initialised weights from `seed`, zero biases. Throws like
  /// apply_structure and UnknownArchitecture for non-toynet templates.
  static ToyNet create(const ArchTemplate& t, const StructureVector& s, std::uint64_t seed);
  /// All parameters zero.
  static ToyNet zeros(const ArchTemplate& t, const StructureVector& s);

  std::span<double> parameters() noexcept { return params_; }
  std::span<const double> parameters() const noexcept { return params_; }

  int input_channels() const noexcept { return input_channels_; }
  int classes() const noexcept { return classes_; }
  std::size_t conv_count() const noexcept { return convs_.size(); }
  const std::string& conv_name(std::size_t i) const { return convs_.at(i).name; }
  int conv_width(std::size_t i) const { return convs_.at(i).c_out; }

  /// Logits for one image.
  std::vector<double> logits(std::span<const double> image) const;

  /// Mean cross-entropy over the batch; accumulates d(loss)/d(params)
  /// into `grad` (resized and zeroed here).
  double loss_and_gradient(const SynthDataset& data, std::span<const std::size_t> batch,
                           std::vector<double>& grad) const;

  double loss(const SynthDataset& data, std::span<const std::size_t> batch) const;

  friend bool operator==(const ToyNet&, const ToyNet&) = default;

 private:
  struct Conv {
    std::string name;
    int c_in = 0;
    int c_out = 0;
    std::size_t weight_offset = 0;
    std::size_t bias_offset = 0;
    friend bool operator==(const Conv&, const Conv&) = default;
  };
  struct Activations {
    std::vector<std::vector<double>> pre;   // per conv layer, before the rectifier
    std::vector<std::vector<double>> post;  // per conv layer, after it
    std::vector<double> pooled;
    std::vector<double> logits;
  };

  static ToyNet layout(const ArchTemplate& t, const StructureVector& s);
  void forward(std::span<const double> image, Activations& a) const;

  friend CaptureResult forward_capture(const ToyNet& net, const SynthDataset& batch);

  int input_channels_ = 1;
  int height_ = 8;
  int width_ = 8;
  int classes_ = 2;
  std::vector<Conv> convs_;
  std::size_t dense_weight_offset_ = 0;
  std::size_t dense_bias_offset_ = 0;
  std::size_t dense_inputs_ = 0;
  std::vector<double> params_;
};

/// Runs every sample of `batch` and records rectified conv outputs named
/// after their prune groups. Throws ShapeMismatch when the images do not
/// match the network input.
CaptureResult forward_capture(const ToyNet& net, const SynthDataset& batch);

struct TrainOptions {
  int epochs = 3;
  double learning_rate = 0.05;
  int batch_size = 16;
  std::uint64_t seed = 0;
};

struct TrainReport {
  std::vector<double> epoch_loss;  // mean training loss over each epoch
};

/// Plain mini-batch gradient descent with a seeded shuffle per epoch.
/// Throws Config for epochs < 1 and TrainingDiverged on a non-finite loss.
TrainReport train(ToyNet& net, const SynthDataset& data, const TrainOptions& options);

/// Fraction of argmax-correct predictions. Throws EmptyDataset.
double accuracy(const ToyNet& net, const SynthDataset& data);

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  bool passed = false;
};

/// Central differences on up to `samples` randomly chosen parameters.
/// Relative error is |a - n| / max(|a| + |n|, 1e-8).
GradCheckReport grad_check(const ToyNet& net, const SynthDataset& batch, double tolerance, double step = 1e-5,
                           std::size_t samples = 200, std::uint64_t seed = 7);

/// Trains a fresh net per structure and returns test accuracy.
class ToyNetEvaluator final : public Evaluator {
 public:
  ToyNetEvaluator(ArchTemplate t, const ToyNetSpec& spec);

  double evaluate(const StructureVector& s, std::uint64_t seed) override;

  const SynthDataset& train_set() const noexcept { return train_; }
  const SynthDataset& test_set() const noexcept { return test_; }

 private:
  ArchTemplate template_;
  ToyNetSpec spec_;
  SynthDataset train_;
  SynthDataset test_;
};

}  // namespace acp
