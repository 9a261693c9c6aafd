#include "acp/fitness.hpp"

#include <cmath>
#include <limits>

#include "acp/toynet.hpp"

namespace acp {

std::vector<double> Evaluator::evaluate_batch(std::span<const EvalJob> jobs) {
  std::vector<double> out;
  out.reserve(jobs.size());
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    try {
      out.push_back(evaluate(jobs[j].structure, jobs[j].seed));
    } catch (const Error& e) {
      throw EvaluationFailure(e.kind(), e.what(), j);
    }
  }
  return out;
}

double surrogate_fitness(const StructureVector& s, const StructureVector& target, double sharpness, double penalty,
                         const ArchTemplate& t) {
  const double params = static_cast<double>(count_params(apply_structure(t, s)));
  const double baseline = static_cast<double>(count_params(apply_structure(t, baseline_structure(t))));
  double d2 = 0.0;
  for (std::size_t g = 0; g < s.channels.size(); ++g) {
    const double diff = s.channels[g] - target.channels.at(g);
    d2 += diff * diff;
  }
  return std::exp(-d2 / (sharpness * sharpness)) * (1.0 - penalty * params / baseline);
}

SurrogateEvaluator::SurrogateEvaluator(ArchTemplate t, StructureVector target, double sharpness, double penalty)
    : template_(std::move(t)), target_(std::move(target)), sharpness_(sharpness), penalty_(penalty) {
  if (!(sharpness_ > 0.0)) throw Error(ErrorKind::Config, "surrogate sharpness must be > 0");
  if (!(penalty_ >= 0.0 && penalty_ < 1.0)) throw Error(ErrorKind::Config, "surrogate penalty must be in [0, 1)");
  validate_structure(template_, target_);
  baseline_params_ = static_cast<double>(count_params(apply_structure(template_, baseline_structure(template_))));
}

double SurrogateEvaluator::evaluate(const StructureVector& s, std::uint64_t /*seed*/) {
  const double params = static_cast<double>(count_params(apply_structure(template_, s)));
  double d2 = 0.0;
  for (std::size_t g = 0; g < s.channels.size(); ++g) {
    const double diff = s.channels[g] - target_.channels[g];
    d2 += diff * diff;
  }
  return std::exp(-d2 / (sharpness_ * sharpness_)) * (1.0 - penalty_ * params / baseline_params_);
}

ExternalEvaluator::ExternalEvaluator(std::string arch_id, int epochs, ExternalConfig config)
    : arch_id_(std::move(arch_id)),
      epochs_(epochs),
      max_parallelism_(config.max_parallelism),
      client_(std::move(config)) {}

double ExternalEvaluator::evaluate(const StructureVector& s, std::uint64_t seed) {
  const EvalJob job{s, seed};
  try {
    return evaluate_batch(std::span<const EvalJob>(&job, 1)).front();
  } catch (const EvaluationFailure& e) {
    throw Error(e.kind(), e.what());
  }
}

std::vector<double> ExternalEvaluator::evaluate_batch(std::span<const EvalJob> jobs) {
  std::vector<EvalRequest> requests;
  for (const EvalJob& job : jobs) {
    requests.push_back({next_id_++, job.structure.channels, arch_id_, epochs_, job.seed});
  }
  const std::vector<EvalResponse> responses = client_.evaluate(requests);
  std::vector<double> out;
  for (std::size_t j = 0; j < responses.size(); ++j) {
    if (!responses[j].ok()) {
      throw EvaluationFailure(responses[j].error_kind,
                              "evaluation of request " + std::to_string(requests[j].id) + " failed: " +
                                  responses[j].error,
                              j);
    }
    out.push_back(*responses[j].fitness);
  }
  return out;
}

void validate_evaluator_spec(const EvaluatorSpec& spec) {
  const auto bad = [](const std::string& why) { return Error(ErrorKind::Config, "evaluator: " + why); };
  switch (spec.kind) {
    case EvaluatorKind::Surrogate:
      if (!(spec.surrogate.sharpness > 0.0)) throw bad("surrogate sharpness must be > 0");
      if (!(spec.surrogate.penalty >= 0.0 && spec.surrogate.penalty < 1.0)) throw bad("surrogate penalty must be in [0, 1)");
      if (spec.surrogate.target.empty()) throw bad("surrogate needs a target vector");
      break;
    case EvaluatorKind::ToyNet:
      if (spec.toynet.epochs < 1) throw bad("toynet epochs must be >= 1");
      if (spec.toynet.batch_size < 1) throw bad("toynet batch_size must be >= 1");
      if (spec.toynet.train_size < 2 || spec.toynet.test_size < 2) throw bad("toynet datasets need >= 2 samples");
      if (!(spec.toynet.learning_rate >= 0.0)) throw bad("toynet learning_rate must be >= 0");
      if (!(spec.toynet.margin > 0.0)) throw bad("toynet margin must be > 0");
      break;
    case EvaluatorKind::External:
      if (spec.external.command.empty()) throw bad("external evaluator needs a command");
      if (!(spec.external.timeout_seconds > 0.0)) throw bad("external timeout must be > 0");
      if (spec.external.max_parallelism < 1) throw bad("external max_parallelism must be >= 1");
      if (spec.external.epochs < 1) throw bad("external epochs must be >= 1");
      break;
  }
}

std::unique_ptr<Evaluator> make_evaluator(const EvaluatorSpec& spec, const ArchTemplate& t) {
  validate_evaluator_spec(spec);
  switch (spec.kind) {
    case EvaluatorKind::Surrogate:
      return std::make_unique<SurrogateEvaluator>(t, StructureVector{t.arch_id, spec.surrogate.target},
                                                  spec.surrogate.sharpness, spec.surrogate.penalty);
    case EvaluatorKind::ToyNet:
      return std::make_unique<ToyNetEvaluator>(t, spec.toynet);
    case EvaluatorKind::External: {
      ExternalConfig config;
      config.command = spec.external.command;
      config.timeout = std::chrono::milliseconds(static_cast<long long>(spec.external.timeout_seconds * 1000.0));
      config.max_parallelism = spec.external.max_parallelism;
      return std::make_unique<ExternalEvaluator>(t.arch_id, spec.external.epochs, std::move(config));
    }
  }
  throw Error(ErrorKind::Config, "unknown evaluator kind");
}

double evaluate(const StructureVector& s, const EvaluatorSpec& spec, const ArchTemplate& t, std::uint64_t seed) {
  validate_structure(t, s);
  return make_evaluator(spec, t)->evaluate(s, seed);
}

int retrain_budget(std::int64_t baseline_flops, std::int64_t pruned_flops, int base_epochs) {
  if (pruned_flops == 0) throw Error(ErrorKind::DegenerateStructure, "pruned network has zero FLOPs");
  if (pruned_flops < 0 || baseline_flops < 0) throw Error(ErrorKind::Config, "FLOP counts must be non-negative");
  if (base_epochs < 1) throw Error(ErrorKind::Config, "base epochs must be >= 1");
  __extension__ using Wide = __int128;
  const Wide numerator = static_cast<Wide>(base_epochs) * baseline_flops;
  const Wide epochs = (numerator + pruned_flops - 1) / pruned_flops;
  if (epochs > std::numeric_limits<int>::max()) throw Error(ErrorKind::Config, "retrain budget overflows");
  return static_cast<int>(epochs);
}

}  // namespace acp
