#include "acp/pso.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace acp {

std::vector<double> default_v_max(const ArchTemplate& t) {
  std::vector<double> v;
  for (std::size_t g = 0; g < t.free_group_count(); ++g) {
    v.push_back(std::max(1.0, 0.1 * t.groups[g].original_count));
  }
  return v;
}

SwarmConfig resolve_swarm_config(SwarmConfig cfg, const ArchTemplate& t) {
  if (cfg.v_max.empty()) cfg.v_max = default_v_max(t);
  const auto bad = [](const std::string& why) { return Error(ErrorKind::Config, "swarm config: " + why); };
  if (cfg.n_particles < 1) throw bad("n_particles must be >= 1");
  if (cfg.cycles < 0) throw bad("cycles must be >= 0");
  if (cfg.w_max < cfg.w_min) throw bad("w_max must be >= w_min");
  if (cfg.v_max.size() != t.free_group_count()) {
    throw bad("v_max has " + std::to_string(cfg.v_max.size()) + " entries, template has " +
              std::to_string(t.free_group_count()) + " free groups");
  }
  for (double v : cfg.v_max) {
    if (!(v > 0.0)) throw bad("v_max entries must be > 0");
  }
  if (!std::isfinite(cfg.alpha1) || !std::isfinite(cfg.alpha2) || !std::isfinite(cfg.r)) {
    throw bad("alpha1, alpha2 and r must be finite");
  }
  return cfg;
}

std::string canonical_key(const StructureVector& s) {
  std::string key = s.arch_id;
  key.push_back('\0');
  for (int c : s.channels) {
    const auto u = static_cast<std::uint32_t>(c);
    for (int b = 0; b < 4; ++b) key.push_back(static_cast<char>((u >> (8 * b)) & 0xFF));
  }
  return key;
}

std::uint64_t evaluation_seed(const StructureVector& s, std::uint64_t run_seed) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_key(s)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h ^ run_seed;
}

std::vector<double> score_positions(const std::vector<StructureVector>& positions, const SwarmConfig& cfg,
                                    Evaluator& evaluator, SwarmState& state) {
  std::vector<double> fitness(positions.size(), 0.0);
  std::vector<EvalJob> jobs;
  std::vector<std::vector<std::size_t>> owners;  // job -> particles it scores

  if (cfg.cache_fitness) {
    std::unordered_map<std::string, std::size_t> pending;
    for (std::size_t n = 0; n < positions.size(); ++n) {
      const std::string key = canonical_key(positions[n]);
      if (const auto hit = state.fitness_cache.find(key); hit != state.fitness_cache.end()) {
        fitness[n] = hit->second;
      } else if (const auto p = pending.find(key); p != pending.end()) {
        owners[p->second].push_back(n);
      } else {
        pending.emplace(key, jobs.size());
        jobs.push_back({positions[n], evaluation_seed(positions[n], cfg.seed)});
        owners.push_back({n});
      }
    }
  } else {
    for (std::size_t n = 0; n < positions.size(); ++n) {
      const std::uint64_t stream = static_cast<std::uint64_t>(state.cycle) * positions.size() + n;
      jobs.push_back({positions[n], evaluation_seed(positions[n], mix_seed(cfg.seed, stream))});
      owners.push_back({n});
    }
  }
  if (jobs.empty()) return fitness;

  std::vector<double> scores;
  try {
    scores = evaluator.evaluate_batch(jobs);
  } catch (const EvaluationFailure& e) {
    throw EvaluationFailure(e.kind(), e.what(), owners.at(e.job_index()).front());
  } catch (const Error& e) {
    throw EvaluationFailure(e.kind(), e.what(), owners.front().front());
  }
  state.evaluator_calls += jobs.size();
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    for (std::size_t n : owners[j]) fitness[n] = scores[j];
    if (cfg.cache_fitness) state.fitness_cache.emplace(canonical_key(jobs[j].structure), scores[j]);
  }
  return fitness;
}

SwarmState init_population(const StructureVector& c_prime, const ArchTemplate& t, const SwarmConfig& cfg_in,
                           Evaluator& evaluator, RandomSource& rng) {
  validate_structure(t, c_prime);
  const SwarmConfig cfg = resolve_swarm_config(cfg_in, t);
  const std::size_t groups = c_prime.channels.size();

  SwarmState state;
  std::vector<StructureVector> positions;
  for (int n = 1; n <= cfg.n_particles; ++n) {
    Particle p;
    p.position.arch_id = c_prime.arch_id;
    for (std::size_t g = 0; g < groups; ++g) {
      const int moved = c_prime.channels[g] + n * rng.ternary();
      p.position.channels.push_back(std::clamp(moved, 1, t.groups[g].original_count));
    }
    for (std::size_t g = 0; g < groups; ++g) {
      p.velocity.push_back(cfg.v_max[g] * (2.0 * rng.unit() - 1.0));
    }
    p.pbest = p.position;
    positions.push_back(p.position);
    state.particles.push_back(std::move(p));
  }

  const std::vector<double> fitness = score_positions(positions, cfg, evaluator, state);
  std::size_t best = 0;
  for (std::size_t n = 0; n < state.particles.size(); ++n) {
    state.particles[n].pbest_fitness = fitness[n];
    if (fitness[n] > fitness[best]) best = n;
  }
  state.gbest = state.particles[best].pbest;
  state.gbest_fitness = state.particles[best].pbest_fitness;
  return state;
}

double inertia(int cycle, const SwarmConfig& cfg) {
  if (cfg.cycles == 0) return cfg.w_min;
  return (cfg.w_max - cfg.w_min) * static_cast<double>(cfg.cycles - cycle) / static_cast<double>(cfg.cycles) +
         cfg.w_min;
}

std::vector<double> update_velocity(const Particle& p, const StructureVector& gbest, double w,
                                    const SwarmConfig& cfg, RandomSource& rng) {
  std::vector<double> v(p.velocity.size());
  for (std::size_t g = 0; g < v.size(); ++g) {
    const double rand1 = rng.unit();
    const double rand2 = rng.unit();
    const double pos = p.position.channels[g];
    const double next = w * p.velocity[g] + cfg.alpha1 * rand1 * (p.pbest.channels[g] - pos) +
                        cfg.alpha2 * rand2 * (gbest.channels[g] - pos);
    v[g] = std::clamp(next, -cfg.v_max[g], cfg.v_max[g]);
  }
  return v;
}

StructureVector update_position(const Particle& p, const ArchTemplate& t, const SwarmConfig& cfg) {
  StructureVector next{p.position.arch_id, {}};
  for (std::size_t g = 0; g < p.position.channels.size(); ++g) {
    // std::round rounds halfway cases away from zero.
    const double moved = std::round(p.position.channels[g] + cfg.r * p.velocity[g]);
    const double clamped = std::clamp(moved, 1.0, static_cast<double>(t.groups[g].original_count));
    next.channels.push_back(static_cast<int>(clamped));
  }
  return next;
}

SearchResult run_search(const StructureVector& c_prime, const ArchTemplate& t, const SwarmConfig& cfg_in,
                        Evaluator& evaluator, RandomSource& rng, const CycleObserver& observer) {
  const SwarmConfig cfg = resolve_swarm_config(cfg_in, t);
  SearchResult result;

  try {
    result.state = init_population(c_prime, t, cfg, evaluator, rng);
  } catch (const EvaluationFailure& e) {
    throw SearchAborted(e.kind(), e.what(), 0, static_cast<int>(e.job_index()) + 1, {});
  }
  SwarmState& state = result.state;
  result.history.push_back(state.gbest_fitness);
  if (observer) observer(state);

  for (int cycle = 1; cycle <= cfg.cycles; ++cycle) {
    state.cycle = cycle;
    const double w = inertia(cycle, cfg);
    std::vector<StructureVector> positions;
    for (Particle& p : state.particles) {
      p.velocity = update_velocity(p, state.gbest, w, cfg, rng);
      p.position = update_position(p, t, cfg);
      positions.push_back(p.position);
    }

    std::vector<double> fitness;
    try {
      fitness = score_positions(positions, cfg, evaluator, state);
    } catch (const EvaluationFailure& e) {
      throw SearchAborted(e.kind(), e.what(), cycle, static_cast<int>(e.job_index()) + 1, result.history);
    }

    for (std::size_t n = 0; n < state.particles.size(); ++n) {
      Particle& p = state.particles[n];
      if (fitness[n] > p.pbest_fitness) {
        p.pbest = p.position;
        p.pbest_fitness = fitness[n];
      }
      if (p.pbest_fitness > state.gbest_fitness) {
        state.gbest = p.pbest;
        state.gbest_fitness = p.pbest_fitness;
      }
    }
    result.history.push_back(state.gbest_fitness);
    if (observer) observer(state);
  }

  result.gbest = state.gbest;
  result.gbest_fitness = state.gbest_fitness;
  return result;
}

SearchResult run_search(const StructureVector& c_prime, const ArchTemplate& t, const SwarmConfig& cfg,
                        Evaluator& evaluator, const CycleObserver& observer) {
  SeededRandomSource rng(cfg.seed);
  return run_search(c_prime, t, cfg, evaluator, rng, observer);
}

}  // namespace acp
