#include "acp/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "acp/error.hpp"
#include "acp/featio.hpp"
#include "acp/structure_file.hpp"
#include "acp/toynet.hpp"

namespace acp {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kDefaultEps = 0.01;

[[noreturn]] void config_error(const std::string& why) { throw Error(ErrorKind::Config, why); }

void reject_unknown(const json& object, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : object.items()) {
    if (!known.contains(key)) config_error("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void read(const json& object, const char* key, T& target, const std::string& where) {
  const auto it = object.find(key);
  if (it == object.end()) return;
  try {
    target = it->get<T>();
  } catch (const json::exception&) {
    config_error("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

const json& section(const json& root, const char* key) {
  static const json kEmpty = json::object();
  const auto it = root.find(key);
  if (it == root.end()) return kEmpty;
  if (!it->is_object()) config_error("'" + std::string(key) + "' must be an object");
  return *it;
}

EvaluatorKind parse_evaluator_kind(const std::string& name) {
  if (name == "surrogate") return EvaluatorKind::Surrogate;
  if (name == "toynet") return EvaluatorKind::ToyNet;
  if (name == "external") return EvaluatorKind::External;
  config_error("unknown evaluator '" + name + "' (surrogate, toynet, external:CMD)");
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  const json root = json::parse(json_text, nullptr, false);
  if (root.is_discarded() || !root.is_object()) config_error("config is not a JSON object");
  reject_unknown(root, {"arch", "eps", "min_pts", "metric", "eps_sweep", "swarm", "evaluator", "paths", "toy"},
                 "config");

  RunConfig c;
  read(root, "arch", c.arch, "config");
  if (root.contains("eps")) {
    double eps = 0.0;
    read(root, "eps", eps, "config");
    c.eps = eps;
  }
  read(root, "min_pts", c.min_pts, "config");
  read(root, "eps_sweep", c.eps_sweep, "config");
  if (root.contains("metric")) {
    std::string name;
    read(root, "metric", name, "config");
    const auto metric = parse_metric(name);
    if (!metric) config_error("unknown metric '" + name + "'");
    c.metric = *metric;
  }

  const json& swarm = section(root, "swarm");
  reject_unknown(swarm, {"particles", "cycles", "alpha1", "alpha2", "w_max", "w_min", "v_max", "r", "seed", "cache"},
                 "swarm");
  read(swarm, "particles", c.swarm.n_particles, "swarm");
  read(swarm, "cycles", c.swarm.cycles, "swarm");
  read(swarm, "alpha1", c.swarm.alpha1, "swarm");
  read(swarm, "alpha2", c.swarm.alpha2, "swarm");
  read(swarm, "w_max", c.swarm.w_max, "swarm");
  read(swarm, "w_min", c.swarm.w_min, "swarm");
  read(swarm, "v_max", c.swarm.v_max, "swarm");
  read(swarm, "r", c.swarm.r, "swarm");
  read(swarm, "seed", c.swarm.seed, "swarm");
  read(swarm, "cache", c.swarm.cache_fitness, "swarm");

  const json& ev = section(root, "evaluator");
  reject_unknown(ev,
                 {"kind", "target", "sharpness", "penalty", "dataset_seed", "epochs", "learning_rate", "batch_size",
                  "train_size", "test_size", "margin", "command", "timeout", "max_parallelism"},
                 "evaluator");
  if (ev.contains("kind")) {
    std::string kind;
    read(ev, "kind", kind, "evaluator");
    c.evaluator.kind = parse_evaluator_kind(kind);
  }
  read(ev, "target", c.evaluator.surrogate.target, "evaluator");
  read(ev, "sharpness", c.evaluator.surrogate.sharpness, "evaluator");
  read(ev, "penalty", c.evaluator.surrogate.penalty, "evaluator");
  read(ev, "dataset_seed", c.evaluator.toynet.dataset_seed, "evaluator");
  read(ev, "epochs", c.evaluator.toynet.epochs, "evaluator");
  read(ev, "epochs", c.evaluator.external.epochs, "evaluator");
  read(ev, "learning_rate", c.evaluator.toynet.learning_rate, "evaluator");
  read(ev, "batch_size", c.evaluator.toynet.batch_size, "evaluator");
  read(ev, "train_size", c.evaluator.toynet.train_size, "evaluator");
  read(ev, "test_size", c.evaluator.toynet.test_size, "evaluator");
  read(ev, "margin", c.evaluator.toynet.margin, "evaluator");
  read(ev, "command", c.evaluator.external.command, "evaluator");
  read(ev, "timeout", c.evaluator.external.timeout_seconds, "evaluator");
  read(ev, "max_parallelism", c.evaluator.external.max_parallelism, "evaluator");

  const json& paths = section(root, "paths");
  reject_unknown(paths, {"dumps", "structure", "baseline", "out", "history"}, "paths");
  read(paths, "dumps", c.dumps_path, "paths");
  read(paths, "structure", c.structure_path, "paths");
  read(paths, "baseline", c.baseline_path, "paths");
  read(paths, "out", c.out_path, "paths");
  read(paths, "history", c.history_path, "paths");

  const json& toy = section(root, "toy");
  reject_unknown(toy,
                 {"depth", "width", "classes", "train_size", "test_size", "margin", "base_epochs", "learning_rate",
                  "batch_size", "fitness_epochs", "capture_samples", "eps"},
                 "toy");
  read(toy, "depth", c.toy.depth, "toy");
  read(toy, "width", c.toy.width, "toy");
  read(toy, "classes", c.toy.classes, "toy");
  read(toy, "train_size", c.toy.train_size, "toy");
  read(toy, "test_size", c.toy.test_size, "toy");
  read(toy, "margin", c.toy.margin, "toy");
  read(toy, "base_epochs", c.toy.base_epochs, "toy");
  read(toy, "learning_rate", c.toy.learning_rate, "toy");
  read(toy, "batch_size", c.toy.batch_size, "toy");
  read(toy, "fitness_epochs", c.toy.fitness_epochs, "toy");
  read(toy, "capture_samples", c.toy.capture_samples, "toy");
  read(toy, "eps", c.toy.eps, "toy");
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

void validate_config(Command command, const RunConfig& c) {
  const auto require_path = [](const std::string& path, const char* what) {
    if (path.empty()) config_error(std::string("missing ") + what);
  };
  const double eps = c.eps.value_or(command == Command::Toy ? c.toy.eps : kDefaultEps);
  if (!(eps >= 0.0)) config_error("eps must be >= 0");
  for (double e : c.eps_sweep) {
    if (!(e >= 0.0)) config_error("eps sweep values must be >= 0");
  }
  if (c.min_pts < 1) config_error("min_pts must be >= 1");
  if (c.swarm.n_particles < 1) config_error("particle count must be >= 1");
  if (c.swarm.cycles < 0) config_error("cycles must be >= 0");
  if (c.swarm.w_max < c.swarm.w_min) config_error("w_max must be >= w_min");
  for (double v : c.swarm.v_max) {
    if (!(v > 0.0)) config_error("v_max entries must be > 0");
  }

  switch (command) {
    case Command::Cluster:
      if (c.arch.empty()) config_error("missing --arch");
      require_path(c.dumps_path, "--dumps");
      require_path(c.out_path, "--out");
      break;
    case Command::Search:
      require_path(c.structure_path, "--structure (the clustered structure file)");
      require_path(c.out_path, "--out");
      validate_evaluator_spec(c.evaluator);
      break;
    case Command::Report:
      require_path(c.structure_path, "--structure");
      break;
    case Command::Toy: {
      const ToyConfig& t = c.toy;
      if (t.depth < 1 || t.width < 1) config_error("toy depth and width must be >= 1");
      if (t.classes < 2) config_error("toy classes must be >= 2");
      if (t.train_size < t.classes || t.test_size < t.classes) config_error("toy datasets need >= classes samples");
      if (!(t.margin > 0.0)) config_error("toy margin must be > 0");
      if (t.base_epochs < 1 || t.fitness_epochs < 1) config_error("toy epochs must be >= 1");
      if (t.batch_size < 1) config_error("toy batch_size must be >= 1");
      if (!(t.learning_rate > 0.0)) config_error("toy learning_rate must be > 0");
      if (t.capture_samples < 1) config_error("toy capture_samples must be >= 1");
      break;
    }
  }
}

namespace {

void print_totals(std::ostream& out, const CompressionReport& r) {
  out << std::fixed << std::setprecision(2);
  out << "quantity baseline pruned removed drop_pct\n";
  out << "params " << r.baseline.params << ' ' << r.pruned.params << ' ' << r.params_removed << ' '
      << r.params_drop_pct << '\n';
  out << "flops " << r.baseline.flops << ' ' << r.pruned.flops << ' ' << r.flops_removed << ' ' << r.flops_drop_pct
      << '\n';
  out << std::defaultfloat;
}

int total_channels(const StructureVector& s) {
  int total = 0;
  for (int c : s.channels) total += c;
  return total;
}

}  // namespace

int cmd_cluster(const RunConfig& config, std::ostream& out) {
  validate_config(Command::Cluster, config);
  const double eps = config.eps.value_or(kDefaultEps);
  const ArchTemplate t = build_template(config.arch);
  if (!std::filesystem::exists(config.dumps_path)) {
    throw Error(ErrorKind::MissingLayer, "no feature dumps: '" + config.dumps_path + "' does not exist");
  }
  const std::vector<FeatureDump> dumps = read_dump(config.dumps_path);
  const std::vector<DistanceMatrix> distances = layer_distances(dumps, t, config.metric);
  const ClusterPruneResult result = cluster_distances(t, distances, eps, config.min_pts);
  const StructureVector baseline = baseline_structure(t);

  out << "layer original clusters noise kept\n";
  for (const LayerClustering& l : result.layers) {
    out << l.group_name << ' ' << l.original_count << ' ' << l.result.num_clusters << ' ' << l.result.num_noise << ' '
        << pruned_channel_count(l.result) << '\n';
  }
  out << '\n';
  print_totals(out, compression_report(t, baseline, result.structure));

  if (!config.eps_sweep.empty()) {
    out << "\neps channels params_drop_pct flops_drop_pct\n";
    for (double e : config.eps_sweep) {
      const StructureVector s = cluster_distances(t, distances, e, config.min_pts).structure;
      const CompressionReport r = compression_report(t, baseline, s);
      out << e << ' ' << total_channels(s) << ' ' << std::fixed << std::setprecision(2) << r.params_drop_pct << ' '
          << r.flops_drop_pct << std::defaultfloat << '\n';
    }
  }

  ordered_json meta;
  meta["eps"] = eps;
  meta["min_pts"] = config.min_pts;
  meta["metric"] = std::string(to_string(config.metric));
  write_structure_file(config.out_path, result.structure, meta);
  return 0;
}

namespace {

std::string history_line(const SwarmState& state) {
  ordered_json line;
  line["cycle"] = state.cycle;
  line["gbest_fitness"] = state.gbest_fitness;
  line["gbest_channels"] = state.gbest.channels;
  return line.dump();
}

std::string channels_text(const StructureVector& s) {
  std::string text = "[";
  for (std::size_t g = 0; g < s.channels.size(); ++g) {
    if (g) text += ',';
    text += std::to_string(s.channels[g]);
  }
  return text + "]";
}

}  // namespace

int cmd_search(const RunConfig& config, std::ostream& out) {
  validate_config(Command::Search, config);
  const StructureVector c_prime = read_structure_file(config.structure_path).structure;
  const ArchTemplate t = build_template(config.arch.empty() ? c_prime.arch_id : config.arch);
  validate_structure(t, c_prime);
  const SwarmConfig swarm = resolve_swarm_config(config.swarm, t);
  const std::unique_ptr<Evaluator> evaluator = make_evaluator(config.evaluator, t);

  std::ofstream history;
  if (!config.history_path.empty()) {
    history.open(config.history_path, std::ios::binary | std::ios::trunc);
    if (!history) throw Error(ErrorKind::Io, "cannot open history log '" + config.history_path + "'");
  }

  out << "cycle gbest_fitness gbest_channels\n";
  const auto observer = [&](const SwarmState& state) {
    if (history.is_open()) {
      history << history_line(state) << '\n';
      history.flush();
    }
    out << state.cycle << ' ' << std::setprecision(17) << state.gbest_fitness << std::defaultfloat << ' '
        << channels_text(state.gbest) << '\n';
  };

  SearchResult result;
  try {
    result = run_search(c_prime, t, swarm, *evaluator, observer);
  } catch (const SearchAborted& e) {
    throw Error(e.kind(), std::string(e.what()) + " (cycle " + std::to_string(e.cycle()) + ", particle " +
                              std::to_string(e.particle()) + ")");
  }

  ordered_json meta;
  meta["fitness"] = result.gbest_fitness;
  meta["particles"] = swarm.n_particles;
  meta["cycles"] = swarm.cycles;
  meta["seed"] = swarm.seed;
  write_structure_file(config.out_path, result.gbest, meta);

  out << '\n';
  print_totals(out, compression_report(t, baseline_structure(t), result.gbest));
  return 0;
}

int cmd_report(const RunConfig& config, std::ostream& out) {
  validate_config(Command::Report, config);
  const StructureVector pruned = read_structure_file(config.structure_path).structure;
  const ArchTemplate t = build_template(config.arch.empty() ? pruned.arch_id : config.arch);
  const StructureVector baseline =
      config.baseline_path.empty() ? baseline_structure(t) : read_structure_file(config.baseline_path).structure;
  const CompressionReport r = compression_report(t, baseline, pruned);

  out << "arch " << t.arch_id << "\n\n";
  print_totals(out, r);
  out << "\ngroup baseline pruned\n";
  for (const GroupDelta& g : r.groups) out << g.name << ' ' << g.baseline << ' ' << g.pruned << '\n';
  return 0;
}

ToyOutcome run_toy_pipeline(const RunConfig& config) {
  validate_config(Command::Toy, config);
  const ToyConfig& toy = config.toy;
  const std::uint64_t seed = config.swarm.seed;
  const ArchTemplate t = make_toynet_template({toy.depth, toy.width, toy.classes});

  ToyNetSpec spec;
  spec.dataset_seed = seed;
  spec.epochs = toy.fitness_epochs;
  spec.learning_rate = toy.learning_rate;
  spec.batch_size = toy.batch_size;
  spec.train_size = toy.train_size;
  spec.test_size = toy.test_size;
  spec.margin = toy.margin;
  ToyNetEvaluator evaluator(t, spec);

  ToyOutcome o;
  o.baseline = baseline_structure(t);
  o.baseline_totals = count_totals(apply_structure(t, o.baseline));

  const auto train_from_scratch = [&](const StructureVector& s, int epochs) {
    const std::uint64_t net_seed = mix_seed(evaluation_seed(s, seed), 2);
    ToyNet net = ToyNet::create(t, s, net_seed);
    train(net, evaluator.train_set(), TrainOptions{epochs, toy.learning_rate, toy.batch_size, net_seed});
    return net;
  };

  const ToyNet baseline_net = train_from_scratch(o.baseline, toy.base_epochs);
  o.baseline_fitness = accuracy(baseline_net, evaluator.test_set());

  const CaptureResult capture =
      forward_capture(baseline_net, evaluator.train_set().head(static_cast<std::size_t>(toy.capture_samples)));
  o.clustered = cluster_prune(capture.dumps, t,
                              ClusterParams{config.eps.value_or(toy.eps), config.min_pts, config.metric});

  const SearchResult search = run_search(o.clustered, t, config.swarm, evaluator);
  o.searched = search.gbest;
  o.search_fitness = search.gbest_fitness;

  o.clustered_totals = count_totals(apply_structure(t, o.clustered));
  o.searched_totals = count_totals(apply_structure(t, o.searched));
  o.clustered_epochs = retrain_budget(o.baseline_totals.flops, o.clustered_totals.flops, toy.base_epochs);
  o.searched_epochs = retrain_budget(o.baseline_totals.flops, o.searched_totals.flops, toy.base_epochs);
  o.clustered_fitness = accuracy(train_from_scratch(o.clustered, o.clustered_epochs), evaluator.test_set());
  o.searched_fitness = accuracy(train_from_scratch(o.searched, o.searched_epochs), evaluator.test_set());
  return o;
}

int cmd_toy(const RunConfig& config, std::ostream& out) {
  const ToyOutcome o = run_toy_pipeline(config);
  const auto pct = [](const Totals& base, const Totals& s) {
    return compression_report(base, s);
  };
  out << "stage structure params flops epochs fitness\n";
  out << std::setprecision(6);
  out << "baseline " << channels_text(o.baseline) << ' ' << o.baseline_totals.params << ' ' << o.baseline_totals.flops
      << ' ' << config.toy.base_epochs << ' ' << o.baseline_fitness << '\n';
  out << "clustered " << channels_text(o.clustered) << ' ' << o.clustered_totals.params << ' '
      << o.clustered_totals.flops << ' ' << o.clustered_epochs << ' ' << o.clustered_fitness << '\n';
  out << "searched " << channels_text(o.searched) << ' ' << o.searched_totals.params << ' ' << o.searched_totals.flops
      << ' ' << o.searched_epochs << ' ' << o.searched_fitness << '\n';
  out << std::defaultfloat << '\n';
  print_totals(out, pct(o.baseline_totals, o.searched_totals));
  if (!config.out_path.empty()) {
    ordered_json meta;
    meta["fitness"] = o.searched_fitness;
    meta["baseline_fitness"] = o.baseline_fitness;
    write_structure_file(config.out_path, o.searched, meta);
  }
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Automatic channel pruning: clustering plus particle-swarm structure search", "acp"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::string> arch, metric, evaluator, dumps, structure, baseline, history, out_path, eps_sweep;
  std::optional<double> eps;
  std::optional<int> min_pts, cycles, pop;
  std::optional<std::uint64_t> seed;

  const auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON config file");
    sub->add_option("--arch", arch, "Architecture id");
    sub->add_option("--eps", eps, "Neighbourhood radius");
    sub->add_option("--min-pts", min_pts, "Minimum neighbourhood size for a core channel");
    sub->add_option("--metric", metric, "cosine, euclidean, manhattan or chebyshev");
    sub->add_option("--cycles", cycles, "Search cycles T");
    sub->add_option("--pop", pop, "Particle count N");
    sub->add_option("--seed", seed, "Run seed");
    sub->add_option("--evaluator", evaluator, "surrogate, toynet or external:CMD");
    sub->add_option("--out", out_path, "Output structure file");
    sub->add_option("--dumps", dumps, "ACPF feature dump file");
    sub->add_option("--structure", structure, "Input structure file");
    sub->add_option("--baseline", baseline, "Baseline structure file");
    sub->add_option("--history", history, "Search history log");
    sub->add_option("--eps-sweep", eps_sweep, "Comma-separated eps values to tabulate");
  };
  CLI::App* cluster = app.add_subcommand("cluster", "Cluster feature maps into a preliminary structure");
  CLI::App* search = app.add_subcommand("search", "Refine a structure with the particle swarm");
  CLI::App* report = app.add_subcommand("report", "Parameter and FLOP drops of a structure");
  CLI::App* toy = app.add_subcommand("toy", "End-to-end pipeline on the synthetic toy task");
  for (CLI::App* sub : {cluster, search, report, toy}) common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ErrorKind::Config);
  }

  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    if (arch) config.arch = *arch;
    if (eps) config.eps = *eps;
    if (min_pts) config.min_pts = *min_pts;
    if (metric) {
      const auto m = parse_metric(*metric);
      if (!m) config_error("unknown metric '" + *metric + "'");
      config.metric = *m;
    }
    if (cycles) config.swarm.cycles = *cycles;
    if (pop) config.swarm.n_particles = *pop;
    if (seed) config.swarm.seed = *seed;
    if (evaluator) {
      constexpr std::string_view kExternal = "external:";
      if (evaluator->starts_with(kExternal)) {
        config.evaluator.kind = EvaluatorKind::External;
        config.evaluator.external.command = evaluator->substr(kExternal.size());
      } else {
        config.evaluator.kind = parse_evaluator_kind(*evaluator);
      }
    }
    if (out_path) config.out_path = *out_path;
    if (dumps) config.dumps_path = *dumps;
    if (structure) config.structure_path = *structure;
    if (baseline) config.baseline_path = *baseline;
    if (history) config.history_path = *history;
    if (eps_sweep) {
      config.eps_sweep.clear();
      std::stringstream ss(*eps_sweep);
      std::string item;
      while (std::getline(ss, item, ',')) {
        try {
          config.eps_sweep.push_back(std::stod(item));
        } catch (const std::exception&) {
          config_error("bad eps sweep value '" + item + "'");
        }
      }
    }

    if (cluster->parsed()) return cmd_cluster(config, out);
    if (search->parsed()) return cmd_search(config, out);
    if (report->parsed()) return cmd_report(config, out);
    return cmd_toy(config, out);
  } catch (const Error& e) {
    err << "error [" << to_string(e.kind()) << "]: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace acp
