#pragma once

// Fitness evaluators: the scoring side of the structure search.
//
// Fitness is a test accuracy in [0, 1]. Three evaluators exist behind one
// interface: a deterministic surrogate landscape, the in-process toy
// trainer, and an external process speaking the evaluator protocol.

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "acp/error.hpp"
#include "acp/protocol.hpp"
#include "acp/structmodel.hpp"

namespace acp {

struct EvalJob {
  StructureVector structure;
  std::uint64_t seed = 0;
};

/// Raised by Evaluator::evaluate_batch; job_index points at the failing job.
class EvaluationFailure : public Error {
 public:
  EvaluationFailure(ErrorKind kind, const std::string& message, std::size_t job_index)
      : Error(kind, message), job_index_(job_index) {}
  std::size_t job_index() const noexcept { return job_index_; }

 private:
  std::size_t job_index_;
};

class Evaluator {
 public:
  virtual ~Evaluator() = default;

  virtual double evaluate(const StructureVector& s, std::uint64_t seed) = 0;

  /// Result i belongs to job i. The default runs jobs one after another.
  virtual std::vector<double> evaluate_batch(std::span<const EvalJob> jobs);

  /// How many evaluations the evaluator can usefully run at once.
  virtual int parallelism() const { return 1; }
};

/// exp(-|s - target|^2 / sharpness^2) * (1 - penalty * params(s) / params(baseline))
double surrogate_fitness(const StructureVector& s, const StructureVector& target, double sharpness, double penalty,
                         const ArchTemplate& t);

class SurrogateEvaluator final : public Evaluator {
 public:
  /// Throws Config unless sharpness > 0 and penalty is in [0, 1); throws
  /// StructureMismatch/ChannelOutOfRange for a target that does not fit.
  SurrogateEvaluator(ArchTemplate t, StructureVector target, double sharpness, double penalty);

  double evaluate(const StructureVector& s, std::uint64_t seed) override;

 private:
  ArchTemplate template_;
  StructureVector target_;
  double sharpness_;
  double penalty_;
  double baseline_params_;
};

class ExternalEvaluator final : public Evaluator {
 public:
  ExternalEvaluator(std::string arch_id, int epochs, ExternalConfig config);

  double evaluate(const StructureVector& s, std::uint64_t seed) override;
  std::vector<double> evaluate_batch(std::span<const EvalJob> jobs) override;
  int parallelism() const override { return max_parallelism_; }

 private:
  std::string arch_id_;
  int epochs_;
  int max_parallelism_;
  std::int64_t next_id_ = 1;
  ExternalEvaluatorClient client_;
};

enum class EvaluatorKind { Surrogate, ToyNet, External };

struct SurrogateSpec {
  std::vector<int> target;
  double sharpness = 8.0;
  double penalty = 0.0;
};

struct ToyNetSpec {
  std::uint64_t dataset_seed = 1;
  int epochs = 3;
  double learning_rate = 0.05;
  int batch_size = 16;
  int train_size = 256;
  int test_size = 256;
  double margin = 1.0;
};

struct ExternalSpec {
  std::string command;
  double timeout_seconds = 600.0;
  int max_parallelism = 1;
  int epochs = 3;
};

struct EvaluatorSpec {
  EvaluatorKind kind = EvaluatorKind::Surrogate;
  SurrogateSpec surrogate;
  ToyNetSpec toynet;
  ExternalSpec external;
};

/// Throws Config on epochs < 1, non-positive timeout and similar.
void validate_evaluator_spec(const EvaluatorSpec& spec);

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorSpec& spec, const ArchTemplate& t);

/// One-shot evaluation through a freshly built evaluator.
double evaluate(const StructureVector& s, const EvaluatorSpec& spec, const ArchTemplate& t, std::uint64_t seed);

/// Post-search training epochs: ceil(base_epochs * baseline_flops / pruned_flops).
/// Throws DegenerateStructure when pruned_flops is 0, Config for
/// base_epochs < 1 or negative FLOPs.
int retrain_budget(std::int64_t baseline_flops, std::int64_t pruned_flops, int base_epochs);

}  // namespace acp
