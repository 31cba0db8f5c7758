#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "fishcal/model.hpp"
#include "fishcal/stats.hpp"

namespace fishcal {

struct Individual {
  Genome genome{};
  // Maximised objectives: performance S, genotypic diversity, behavioural
  // diversity.
  std::array<double, 3> objectives{};
  std::array<double, 4> feature_scores{};  // I_D, I_W, I_O, I_T
  int rank = 0;
  double crowding = 0.0;
};

struct Population {
  std::vector<Individual> individuals;
  int generation_counter = 0;
  int round_index = 0;
};

/// Per-round stopping limits; at least one of the two must be finite.
struct RoundBudget {
  int max_generations = 15;  // < 0 means unlimited
  double wall_clock_cap_s = std::numeric_limits<double>::infinity();

  void validate() const;  // throws ConfigError
};

/// Simulation settings used to score a genome against target statistics.
struct EvalContext {
  const ArenaGeometry* arena = nullptr;
  const SpeedDistribution* speeds = nullptr;
  double sim_seconds = 120.0;
  int n_agents = 5;
  double dt = 0.2;
};

struct Evaluation {
  double performance = 0.0;
  std::array<double, 4> feature_scores{};
};

/// Simulates n_agents under the genome from random in-region starts and
/// scores the resulting statistics against the target.
Evaluation evaluate_genome(const Genome& genome, const BehaviorStats& target,
                           const EvalContext& ctx, std::uint64_t seed);

/// Pure-model run of n identical agents; frames recorded after every step.
TrajectoryBatch simulate_batch(const Genome& genome, int n_agents,
                               double seconds, double dt,
                               const ArenaGeometry& g,
                               const SpeedDistribution& speeds,
                               std::uint64_t seed);

/// Simulates a genome and returns the window statistics themselves.
BehaviorStats simulate_stats(const Genome& genome, const EvalContext& ctx,
                             std::uint64_t seed);

/// Mean Euclidean distance between bound-normalised genomes.
double genotypic_diversity(const Individual& ind, const Population& pop);

/// Mean Euclidean distance between feature-score 4-vectors.
double behavioral_diversity(const Individual& ind, const Population& pop);

/// Non-dominated fronts (indices into pop.individuals), all objectives
/// maximised. Front 0 is dominated by nobody.
std::vector<std::vector<int>> fast_nondominated_sort(const Population& pop);

/// Standard NSGA-II crowding distances for one front; extremes get +inf,
/// zero-range objectives contribute nothing.
std::vector<double> crowding_distance(const std::vector<Individual>& front);

/// Tournament ordering: lower rank wins, ties broken by larger crowding.
bool crowded_better(const Individual& a, const Individual& b);

struct CalibratorConfig {
  int population_size = 60;
  double eta_crossover = 15.0;
  double eta_mutation = 20.0;
  double p_crossover = 0.9;
  double p_mutation = 1.0 / kGenomeSize;
  Genome lower_bounds = genome_lower_bounds();
  Genome upper_bounds = genome_upper_bounds();
  EvalContext eval;
  unsigned eval_threads = 0;  // 0 = hardware concurrency
};

struct RoundResult {
  Population population;
  int generations_done = 0;
  int best_index = 0;                  // best performance in the population
  std::vector<Genome> initial_genomes; // population state before evolution
  std::vector<double> best_performance_by_generation;
};

/// One evolutionary round: seed from the previous round's population (its
/// objectives are re-evaluated against the new target) or initialise at
/// random, then run NSGA-II generations until a budget limit hits.
RoundResult evolve_round(const Population* seed_pop, const BehaviorStats& target,
                         const RoundBudget& budget, const CalibratorConfig& cfg,
                         std::uint64_t round_seed, int round_index);

/// Header for the round log: round,t_start_s,generations_done,best_S,
/// best_I_D,best_I_W,best_I_O,best_I_T,g1..g18.
std::string round_log_header();
std::string round_log_line(int round, double t_start_s, const RoundResult& r);

}  // namespace fishcal
