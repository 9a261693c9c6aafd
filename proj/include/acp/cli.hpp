#pragma once

// Command-line front end: cluster, search, report and toy.
//
// Settings come from an optional JSON config file and are then overridden
// by flags. The whole configuration is validated before any file is
// written. Exit codes are the numeric ErrorKind values; 0 is success and
// 1 an unexpected internal failure.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "acp/cluster.hpp"
#include "acp/fitness.hpp"
#include "acp/pso.hpp"

namespace acp {

struct ToyConfig {
  int depth = 3;
  int width = 16;
  int classes = 4;
  int train_size = 256;
  int test_size = 1024;
  double margin = 0.7;
  int base_epochs = 8;
  double learning_rate = 0.05;
  int batch_size = 16;
  int fitness_epochs = 3;
  int capture_samples = 64;
  double eps = 0.05;
};

struct RunConfig {
  std::string arch;
  std::optional<double> eps;  // falls back to 0.01, or toy.eps for the toy command
  int min_pts = 5;
  Metric metric = Metric::Cosine;
  std::vector<double> eps_sweep;
  SwarmConfig swarm;
  EvaluatorSpec evaluator;
  std::string dumps_path;
  std::string structure_path;
  std::string baseline_path;
  std::string out_path;
  std::string history_path;
  ToyConfig toy;
};

/// Reads a JSON config document; unknown keys are rejected. Throws Config,
/// Io or Format.
RunConfig load_config(const std::string& path);
RunConfig parse_config(const std::string& json_text);

enum class Command { Cluster, Search, Report, Toy };

/// Throws Config describing the first problem found.
void validate_config(Command command, const RunConfig& config);

int cmd_cluster(const RunConfig& config, std::ostream& out);
int cmd_search(const RunConfig& config, std::ostream& out);
int cmd_report(const RunConfig& config, std::ostream& out);
int cmd_toy(const RunConfig& config, std::ostream& out);

struct ToyOutcome {
  StructureVector baseline;
  StructureVector clustered;  // cluster-only structure
  StructureVector searched;   // swarm winner
  Totals baseline_totals;
  Totals clustered_totals;
  Totals searched_totals;
  double baseline_fitness = 0.0;
  double clustered_fitness = 0.0;  // cluster-only structure after its retrain budget
  double searched_fitness = 0.0;   // swarm winner after its retrain budget
  double search_fitness = 0.0;     // winner's short-training fitness
  int clustered_epochs = 0;
  int searched_epochs = 0;
};

/// Full desk-scale pipeline behind cmd_toy.
ToyOutcome run_toy_pipeline(const RunConfig& config);

/// Parses argv and dispatches; all errors are reported on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace acp
