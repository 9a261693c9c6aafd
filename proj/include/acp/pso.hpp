#pragma once

// Particle-swarm search over channel-count vectors.
//
// Particles live on the integer lattice [1, original_count]^G. Velocities
// are real-valued; a position step is pos + r * v rounded half away from
// zero and clamped back onto the lattice. Inertia decays linearly from
// w_max to w_min over the run.

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "acp/error.hpp"
#include "acp/fitness.hpp"
#include "acp/random.hpp"
#include "acp/structmodel.hpp"

namespace acp {

struct SwarmConfig {
  int n_particles = 6;
  int cycles = 5;
  double alpha1 = 2.0;
  double alpha2 = 2.0;
  double w_max = 0.9;
  double w_min = 0.4;
  std::vector<double> v_max;  // per free group; empty means default_v_max
  double r = 2.0;
  std::uint64_t seed = 0;
  bool cache_fitness = true;
};

/// max(1, 0.1 * original_count) per free group.
std::vector<double> default_v_max(const ArchTemplate& t);

/// Fills an empty v_max and checks the invariants. Throws Config.
SwarmConfig resolve_swarm_config(SwarmConfig cfg, const ArchTemplate& t);

/// Draw source for the stochastic parts of the update rules.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual double unit() = 0;   // [0, 1)
  virtual int ternary() = 0;   // -1, 0 or 1
};

class SeededRandomSource final : public RandomSource {
 public:
  explicit SeededRandomSource(std::uint64_t seed) : rng_(seed) {}
  double unit() override { return rng_.unit(); }
  int ternary() override { return static_cast<int>(rng_.below(3)) - 1; }

 private:
  Rng rng_;
};

struct Particle {
  StructureVector position;
  std::vector<double> velocity;
  StructureVector pbest;
  double pbest_fitness = 0.0;
};

struct SwarmState {
  std::vector<Particle> particles;
  StructureVector gbest;
  double gbest_fitness = 0.0;
  int cycle = 0;
  std::map<std::string, double> fitness_cache;
  std::size_t evaluator_calls = 0;
};

/// Injective byte encoding: arch id, a NUL, then each entry as u32 LE.
std::string canonical_key(const StructureVector& s);

/// FNV-1a over the canonical key, xor the run seed.
std::uint64_t evaluation_seed(const StructureVector& s, std::uint64_t run_seed);

/// Evaluates structures for the swarm, consulting and filling the state's
/// fitness cache when caching is on. Within one call each distinct
/// structure reaches the evaluator at most once.
std::vector<double> score_positions(const std::vector<StructureVector>& positions, const SwarmConfig& cfg,
                                    Evaluator& evaluator, SwarmState& state);

/// Particle n (1-based) starts at c'_g + n * delta_g, delta_g in {-1, 0, 1},
/// clamped to [1, original]; velocities uniform in [-v_max_g, v_max_g].
SwarmState init_population(const StructureVector& c_prime, const ArchTemplate& t, const SwarmConfig& cfg,
                           Evaluator& evaluator, RandomSource& rng);

/// (w_max - w_min) * (T - t) / T + w_min; w_min when T == 0.
double inertia(int cycle, const SwarmConfig& cfg);

std::vector<double> update_velocity(const Particle& p, const StructureVector& gbest, double w,
                                    const SwarmConfig& cfg, RandomSource& rng);

StructureVector update_position(const Particle& p, const ArchTemplate& t, const SwarmConfig& cfg);

struct SearchResult {
  StructureVector gbest;
  double gbest_fitness = 0.0;
  std::vector<double> history;  // gbest fitness after init and after each cycle
  SwarmState state;
};

/// Evaluator failure during the search. Carries the history collected
/// before the failure and where it happened; particle is 1-based.
class SearchAborted : public Error {
 public:
  SearchAborted(ErrorKind kind, const std::string& message, int cycle, int particle, std::vector<double> history)
      : Error(kind, message), cycle_(cycle), particle_(particle), history_(std::move(history)) {}

  int cycle() const noexcept { return cycle_; }
  int particle() const noexcept { return particle_; }
  const std::vector<double>& history() const noexcept { return history_; }

 private:
  int cycle_;
  int particle_;
  std::vector<double> history_;
};

/// Called after initialisation (cycle 0) and after every cycle.
using CycleObserver = std::function<void(const SwarmState&)>;

SearchResult run_search(const StructureVector& c_prime, const ArchTemplate& t, const SwarmConfig& cfg,
                        Evaluator& evaluator, const CycleObserver& observer = {});

/// Same loop with an injected draw source.
SearchResult run_search(const StructureVector& c_prime, const ArchTemplate& t, const SwarmConfig& cfg,
                        Evaluator& evaluator, RandomSource& rng, const CycleObserver& observer = {});

}  // namespace acp
