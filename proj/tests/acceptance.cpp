// Acceptance gate: one line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "acp/cli.hpp"
#include "acp/cluster.hpp"
#include "acp/error.hpp"
#include "acp/fitness.hpp"
#include "acp/protocol.hpp"
#include "acp/pso.hpp"
#include "acp/structmodel.hpp"
#include "acp/toynet.hpp"
#include "support.hpp"

using namespace acp;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// ---------------------------------------------------------------- accounting

constexpr double kVgg16Params = 14.73e6, kVgg16Flops = 314.59e6;
constexpr double kResnet56Params = 0.85e6, kResnet56Flops = 127.62e6;

Verdict accounting() {
  const auto start = Clock::now();
  const ArchTemplate vgg = build_template("vgg16-cifar"), res = build_template("resnet56-cifar");
  const Totals v = count_totals(apply_structure(vgg, baseline_structure(vgg)));
  const Totals r = count_totals(apply_structure(res, baseline_structure(res)));
  const double elapsed = seconds_since(start);
  const auto rel = [](double got, double want) { return (got - want) / want; };
  const double errs[] = {rel(v.params, kVgg16Params), rel(v.flops, kVgg16Flops), rel(r.params, kResnet56Params),
                         rel(r.flops, kResnet56Flops)};
  Verdict out;
  for (double e : errs) out.pass = out.pass && std::fabs(e) <= 0.03;
  out.pass = out.pass && elapsed < 1.0;
  out.detail = fmt("vgg16 %.2fM params (%+.2f%%) %.2fM flops (%+.2f%%); resnet56 %.3fM params (%+.2f%%) %.2fM flops "
                   "(%+.2f%%); tol 3%%; %.3fs (limit 1s)",
                   v.params / 1e6, 100 * errs[0], v.flops / 1e6, 100 * errs[1], r.params / 1e6, 100 * errs[2],
                   r.flops / 1e6, 100 * errs[3], elapsed);
  return out;
}

// ---------------------------------------------------------------- drop arithmetic

Verdict drop_arithmetic() {
  const Totals base{static_cast<std::int64_t>(kVgg16Params), static_cast<std::int64_t>(kVgg16Flops)};
  const Totals pruned{2'760'000, 93'520'000};
  const CompressionReport r = compression_report(base, pruned);
  const double params = std::round(r.params_drop_pct * 100) / 100, flops = std::round(r.flops_drop_pct * 100) / 100;
  Verdict out;
  out.pass = params == 81.28 && flops == 70.25;
  out.detail = fmt("14.73M->2.76M params: %.4f%% -> %.2f (expected 81.28); 314.59M->93.52M flops: %.4f%% -> %.2f "
                   "(expected 70.25); 2 dp",
                   r.params_drop_pct, params, r.flops_drop_pct, flops);
  return out;
}

// ---------------------------------------------------------------- clustering

DistanceMatrix oracle_matrix(const std::vector<std::vector<double>>& v) {
  DistanceMatrix d(v.size(), Metric::Cosine);
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) d.set(i, j, testing::oracle_distance(v[i], v[j], Metric::Cosine));
  }
  return d;
}

Verdict clustering_oracle() {
  const auto start = Clock::now();
  Rng rng(2718);
  constexpr double eps = 0.01;
  constexpr int min_pts = 5;
  int agree = 0, planted_agree = 0, largest = 0;
  for (int instance = 0; instance < 50; ++instance) {
    std::vector<int> sizes;
    int n = 0;
    const int bundles = 1 + static_cast<int>(rng.below(5));
    for (int b = 0; b < bundles; ++b) {
      sizes.push_back(1 + static_cast<int>(rng.below(10)));
      n += sizes.back();
    }
    const int outliers = static_cast<int>(rng.below(9));
    const auto layer = testing::planted_layer(rng, sizes, outliers, 32, 1e-4);
    largest = std::max(largest, n + outliers);

    const ClusterResult r = dbscan(pairwise_distance(testing::as_maps(layer.vectors), Metric::Cosine), eps, min_pts);
    const testing::OracleCounts want = testing::epsilon_graph_oracle(oracle_matrix(layer.vectors), eps, min_pts);
    agree += r.num_clusters == want.clusters && r.num_noise == want.noise;

    testing::OracleCounts planted{0, outliers};
    for (int s : sizes) {
      if (s >= min_pts) {
        ++planted.clusters;
      } else {
        planted.noise += s;
      }
    }
    planted_agree += want == planted;
  }
  const double elapsed = seconds_since(start);
  Verdict out;
  out.pass = agree == 50 && elapsed < 10.0 && largest <= 64;
  out.detail = fmt("%d/50 instances match the eps-graph oracle exactly (planted counts match oracle in %d/50); "
                   "n <= %d; %.2fs (limit 10s)",
                   agree, planted_agree, largest, elapsed);
  return out;
}

Verdict clustering_properties() {
  Rng rng(31415);
  int perm_fail = 0;
  {
    const auto planted = testing::planted_layer(rng, {8, 6, 5, 3}, 6, 16, 2e-3);
    const DistanceMatrix bundles = pairwise_distance(testing::as_maps(planted.vectors), Metric::Cosine);
    const DistanceMatrix noisy = testing::random_matrix(rng, 40);
    for (const auto& [d, eps, min_pts] : {std::tuple{bundles, 0.01, 5}, std::tuple{noisy, 0.12, 3}}) {
      const ClusterResult base = dbscan(d, eps, min_pts);
      for (int s = 0; s < 100; ++s) {
        const ClusterResult r = dbscan(testing::permuted(d, testing::random_permutation(rng, d.size())), eps, min_pts);
        perm_fail += r.num_clusters != base.num_clusters || r.num_noise != base.num_noise;
      }
    }
  }
  int monotone_fail = 0;
  for (int instance = 0; instance < 20; ++instance) {
    const DistanceMatrix d = testing::random_matrix(rng, 10 + rng.below(40));
    int previous = 1 << 30;
    for (int step = 0; step < 20; ++step) {
      const int kept = pruned_channel_count(dbscan(d, step * 0.6 / 19, 3));
      monotone_fail += kept > previous;
      previous = kept;
    }
  }
  double scale_err = 0.0;
  for (int instance = 0; instance < 20; ++instance) {
    std::vector<std::vector<double>> v(16, std::vector<double>(12));
    for (auto& x : v) {
      for (double& y : x) y = rng.normal();
    }
    auto scaled = v;
    for (auto& x : scaled) {
      const double k = std::pow(10.0, rng.uniform(-6, 6)) * (rng.unit() < 0.5 ? -1 : 1);
      for (double& y : x) y *= k;
    }
    const DistanceMatrix a = pairwise_distance(testing::as_maps(v), Metric::Cosine);
    const DistanceMatrix b = pairwise_distance(testing::as_maps(scaled), Metric::Cosine);
    for (std::size_t i = 0; i < 16; ++i) {
      for (std::size_t j = 0; j < 16; ++j) scale_err = std::max(scale_err, std::fabs(a(i, j) - b(i, j)));
    }
  }
  Verdict out;
  out.pass = perm_fail == 0 && monotone_fail == 0 && scale_err <= 1e-12;
  out.detail = fmt("permutation mismatches %d/200 shuffles; eps-sweep increases %d (20 instances x 20 eps); "
                   "cosine scale error %.2e (limit 1e-12)",
                   perm_fail, monotone_fail, scale_err);
  return out;
}

// ---------------------------------------------------------------- swarm

// Hand parameter count of toynet-6w12 (1x8x8 input, 2 classes).
double toy6_params(const int* c) {
  double p = 9.0 * c[0] + c[0];
  for (int k = 1; k < 6; ++k) p += 9.0 * c[k - 1] * c[k] + c[k];
  return p + c[5] * 16.0 * 2 + 2;
}

Verdict pso_correctness() {
  const auto start = Clock::now();
  constexpr int kWidth = 12;
  constexpr double kSharpness = 6.0, kPenalty = 0.2;
  const ArchTemplate t = build_template("toynet-6w12");
  const int full[6] = {kWidth, kWidth, kWidth, kWidth, kWidth, kWidth};
  const double base_params = toy6_params(full);

  int hits = 0, monotone = 0;
  double worst = 1.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Rng rng(mix_seed(seed, 99));
    std::vector<int> target(6), start_point(6);
    for (int g = 0; g < 6; ++g) {
      target[g] = 1 + static_cast<int>(rng.below(kWidth));
      start_point[g] = std::clamp(target[g] + static_cast<int>(rng.below(9)) - 4, 1, kWidth);
    }

    double optimum = 0.0;
    int c[6];
    for (c[0] = 1; c[0] <= kWidth; ++c[0])
      for (c[1] = 1; c[1] <= kWidth; ++c[1])
        for (c[2] = 1; c[2] <= kWidth; ++c[2])
          for (c[3] = 1; c[3] <= kWidth; ++c[3])
            for (c[4] = 1; c[4] <= kWidth; ++c[4])
              for (c[5] = 1; c[5] <= kWidth; ++c[5]) {
                double d2 = 0.0;
                for (int g = 0; g < 6; ++g) d2 += double(c[g] - target[g]) * (c[g] - target[g]);
                optimum = std::max(optimum, std::exp(-d2 / (kSharpness * kSharpness)) *
                                                (1.0 - kPenalty * toy6_params(c) / base_params));
              }

    SurrogateEvaluator eval(t, {t.arch_id, target}, kSharpness, kPenalty);
    SwarmConfig cfg;
    cfg.n_particles = 6;
    cfg.cycles = 20;
    cfg.seed = seed;
    const SearchResult r = run_search({t.arch_id, start_point}, t, cfg, eval);
    const double ratio = r.gbest_fitness / optimum;
    worst = std::min(worst, ratio);
    hits += ratio >= 0.98;
    monotone += std::is_sorted(r.history.begin(), r.history.end());
  }
  const double elapsed = seconds_since(start);
  Verdict out;
  out.pass = hits >= 9 && monotone == 10 && elapsed < 30.0;
  out.detail = fmt("%d/10 seeds within 2%% of the exhaustive optimum (need 9, worst ratio %.4f); non-decreasing "
                   "history %d/10; N=6 T=20 on toynet-6w12; %.2fs (limit 30s)",
                   hits, worst, monotone, elapsed);
  return out;
}

class ConstantSource final : public RandomSource {
 public:
  ConstantSource(double u, int t) : u_(u), t_(t) {}
  double unit() override { return u_; }
  int ternary() override { return t_; }

 private:
  double u_;
  int t_;
};

Verdict update_rules() {
  const ArchTemplate t = build_template("toynet-2w64");
  SwarmConfig cfg = resolve_swarm_config(SwarmConfig{}, t);
  std::vector<std::string> failures;
  const auto expect = [&](bool ok, const char* what) {
    if (!ok) failures.emplace_back(what);
  };

  SwarmConfig sched;
  sched.cycles = 10;
  expect(std::fabs(inertia(0, sched) - 0.9) <= 1e-12, "inertia t=0");
  expect(std::fabs(inertia(10, sched) - 0.4) <= 1e-12, "inertia t=T");
  expect(std::fabs(inertia(5, sched) - 0.65) <= 1e-12, "inertia t=T/2");

  Particle p;
  p.position = {t.arch_id, {10, 10}};
  p.velocity = {1.0, 1.0};
  p.pbest = {t.arch_id, {12, 12}};
  cfg.v_max = {20.0, 6.0};
  ConstantSource ones(1.0, 0);
  const auto v = update_velocity(p, {t.arch_id, {14, 14}}, 0.5, cfg, ones);
  expect(std::fabs(v[0] - 12.5) <= 1e-12, "velocity 0.5 + 4 + 8");
  expect(v[1] == 6.0, "velocity clamp");

  Particle still = p;
  still.pbest = still.position;
  ConstantSource half(0.5, 0);
  const auto z = update_velocity(still, still.position, 0.0, cfg, half);
  expect(z[0] == 0.0 && z[1] == 0.0, "velocity at rest");

  Particle q;
  q.position = {t.arch_id, {10, 3}};
  q.velocity = {1.4, -5.0};
  expect(update_position(q, t, cfg).channels == std::vector<int>{13, 1}, "position round and floor clamp");
  q.velocity = {0.0, 0.0};
  expect(update_position(q, t, cfg).channels == std::vector<int>{10, 3}, "position at rest");

  // fuzzed clamps
  Rng rng(123);
  SeededRandomSource draws(5);
  long violations = 0;
  for (int i = 0; i < 100000; ++i) {
    SwarmConfig f = cfg;
    f.v_max = {rng.uniform(0.1, 30.0), rng.uniform(0.1, 30.0)};
    f.alpha1 = rng.uniform(0.0, 4.0);
    f.alpha2 = rng.uniform(0.0, 4.0);
    f.r = rng.uniform(0.1, 4.0);
    Particle x;
    x.position = {t.arch_id, {1 + int(rng.below(64)), 1 + int(rng.below(64))}};
    x.pbest = {t.arch_id, {1 + int(rng.below(64)), 1 + int(rng.below(64))}};
    x.velocity = {rng.uniform(-f.v_max[0], f.v_max[0]), rng.uniform(-f.v_max[1], f.v_max[1])};
    const StructureVector g{t.arch_id, {1 + int(rng.below(64)), 1 + int(rng.below(64))}};
    x.velocity = update_velocity(x, g, rng.uniform(0.4, 0.9), f, draws);
    for (std::size_t k = 0; k < 2; ++k) violations += std::fabs(x.velocity[k]) > f.v_max[k];
    const StructureVector moved = update_position(x, t, f);
    for (int c : moved.channels) violations += c < 1 || c > 64;
  }
  expect(violations == 0, "fuzzed clamps");

  Verdict out;
  out.pass = failures.empty();
  std::string failed;
  for (const auto& f : failures) failed += (failed.empty() ? "" : ", ") + f;
  out.detail = fmt("8 hand cases at 1e-12, %s; clamp violations %ld over 1e5 fuzzed updates", failures.empty() ? "all match" : ("failed: " + failed).c_str(), violations);
  return out;
}

// ---------------------------------------------------------------- toy trainer

Verdict toy_trainer() {
  const ArchTemplate t = build_template("toynet-2");
  const ToyNet net = ToyNet::create(t, baseline_structure(t), 11);
  const GradCheckReport g = grad_check(net, synth_dataset(3, 12, 2), 1e-4, 1e-5, 400);

  const SynthDataset data = synth_dataset(21, 200, 2, {3.0, 1.2});
  ToyNet a = ToyNet::create(t, baseline_structure(t), 8), b = a;
  train(a, data, {10, 0.05, 16, 5});
  train(b, data, {10, 0.05, 16, 5});
  const double acc = accuracy(a, data);
  Verdict out;
  out.pass = g.max_relative_error < 1e-4 && acc >= 0.95 && a == b;
  out.detail = fmt("gradient check max rel err %.2e over %zu params (limit 1e-4); separable training accuracy %.3f "
                   "(need 0.95); same-seed runs %s",
                   g.max_relative_error, g.checked, acc, a == b ? "bit-identical" : "DIFFER");
  return out;
}

// ---------------------------------------------------------------- end to end

Verdict end_to_end() {
  int wins = 0;
  double worst_time = 0.0;
  std::string first;
  bool first_ok = false;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    RunConfig cfg;
    cfg.swarm.seed = seed;
    const auto start = Clock::now();
    const ToyOutcome o = run_toy_pipeline(cfg);
    const double elapsed = seconds_since(start);
    worst_time = std::max(worst_time, elapsed);
    const bool win = o.searched_fitness >= o.clustered_fitness;
    wins += win;
    per_seed += win ? '+' : '-';
    if (seed == 1) {
      first_ok = o.searched_totals.params < o.baseline_totals.params &&
                 std::fabs(o.searched_fitness - o.baseline_fitness) <= 0.05 && elapsed < 120.0;
      first = fmt("seed 1: params %lld -> %lld, fitness %.4f -> %.4f (tol 0.05), %.1fs (limit 120s)",
                  static_cast<long long>(o.baseline_totals.params), static_cast<long long>(o.searched_totals.params),
                  o.baseline_fitness, o.searched_fitness, elapsed);
    }
  }
  Verdict out;
  out.pass = first_ok && wins >= 7 && worst_time < 120.0;
  out.detail = first + fmt("; searched >= cluster-only accuracy in %d/10 seeds [%s] (need 7); slowest run %.1fs", wins,
                           per_seed.c_str(), worst_time);
  return out;
}

Verdict retrain_arithmetic() {
  const int epochs = retrain_budget(314'590'000, 152'640'000, 160);
  return {epochs == 330, fmt("160 epochs x 314.59M/152.64M flops -> %d (expected 330, exact)", epochs)};
}

// ---------------------------------------------------------------- protocol

Verdict protocol_robustness() {
  using namespace std::chrono_literals;
  const std::string stub = ACP_STUB_EVALUATOR;
  std::vector<EvalRequest> reqs;
  for (int i = 0; i < 6; ++i) reqs.push_back({i + 1, {100 * (i + 1), 2}, "toynet-2", 3, std::uint64_t(i)});
  const auto all_fit = [&](const std::vector<EvalResponse>& rs) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (!rs[i].ok() || rs[i].id != reqs[i].id || *rs[i].fitness != reqs[i].channels[0] / 1000.0) return false;
    }
    return rs.size() == reqs.size();
  };
  const auto all_kind = [](const std::vector<EvalResponse>& rs, ErrorKind k) {
    for (const auto& r : rs) {
      if (r.ok() || r.error_kind != k) return false;
    }
    return !rs.empty();
  };

  std::vector<std::string> results;
  bool pass = true;
  const auto record = [&](const char* name, bool ok, double secs) {
    pass = pass && ok;
    results.push_back(fmt("%s %s (%.2fs)", name, ok ? "ok" : "FAILED", secs));
  };
  auto start = Clock::now();
  record("echo", all_fit(external_evaluate(reqs, {stub + " --mode echo", 5000ms, 1})), seconds_since(start));
  start = Clock::now();
  record("out-of-order", all_fit(external_evaluate(reqs, {stub + " --mode reverse --parallelism 3", 5000ms, 1})),
         seconds_since(start));
  start = Clock::now();
  const bool timed_out = all_kind(external_evaluate(reqs, {stub + " --mode silent", 500ms, 1}), ErrorKind::EvalTimeout);
  double secs = seconds_since(start);
  record("timeout", timed_out && secs < 0.5 + 1.5, secs);
  start = Clock::now();
  bool mute = false;
  try {
    external_evaluate(reqs, {stub + " --mode mute", 500ms, 1});
  } catch (const Error& e) {
    mute = e.kind() == ErrorKind::EvalTimeout;
  }
  secs = seconds_since(start);
  record("handshake-timeout", mute && secs < 2.0, secs);
  start = Clock::now();
  const auto crashed = external_evaluate(reqs, {stub + " --mode crash --crash-after 2", 5000ms, 1});
  record("crash",
         crashed[0].ok() && crashed[1].ok() &&
             all_kind(std::vector<EvalResponse>(crashed.begin() + 2, crashed.end()), ErrorKind::EvaluatorCrashed),
         seconds_since(start));
  start = Clock::now();
  record("error-reply", all_kind(external_evaluate(reqs, {stub + " --mode error", 5000ms, 1}), ErrorKind::EvaluatorFailed),
         seconds_since(start));
  start = Clock::now();
  record("malformed", all_kind(external_evaluate(reqs, {stub + " --mode malformed", 5000ms, 1}), ErrorKind::Protocol),
         seconds_since(start));

  std::string detail;
  for (const auto& r : results) detail += (detail.empty() ? "" : "; ") + r;
  return {pass, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"accounting oracle", accounting},
      {"drop-percentage arithmetic", drop_arithmetic},
      {"clustering oracle", clustering_oracle},
      {"clustering properties", clustering_properties},
      {"pso correctness", pso_correctness},
      {"update-rule oracles", update_rules},
      {"toy trainer", toy_trainer},
      {"end-to-end toy pipeline", end_to_end},
      {"retrain budget arithmetic", retrain_arithmetic},
      {"protocol robustness", protocol_robustness},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("[%s] %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
