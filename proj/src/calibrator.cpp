#include "fishcal/calibrator.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>

#include "fishcal/errors.hpp"
#include "fishcal/parallel.hpp"

namespace fishcal {

namespace {

constexpr std::uint64_t kInitStream = 0x696e6974;  // population init
constexpr std::uint64_t kVarStream = 0x76617279;   // variation operators
constexpr std::uint64_t kEvalStream = 0x6576616c;  // fitness simulations

std::string fmt(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double normalised_gene_distance(const Genome& a, const Genome& b,
                                const Genome& lo, const Genome& hi) {
  double acc = 0.0;
  for (int i = 0; i < kGenomeSize; ++i) {
    const double range = hi[i] - lo[i];
    const double d = range > 0.0 ? (a[i] - b[i]) / range : 0.0;
    acc += d * d;
  }
  return std::sqrt(acc);
}

double mean_genotypic_distance(std::size_t self,
                               const std::vector<Individual>& pop,
                               const Genome& lo, const Genome& hi) {
  double acc = 0.0;
  for (std::size_t j = 0; j < pop.size(); ++j) {
    if (j == self) continue;
    acc += normalised_gene_distance(pop[self].genome, pop[j].genome, lo, hi);
  }
  return acc / static_cast<double>(pop.size() - 1);
}

double mean_behavioral_distance(std::size_t self,
                                const std::vector<Individual>& pop) {
  double acc = 0.0;
  for (std::size_t j = 0; j < pop.size(); ++j) {
    if (j == self) continue;
    double d2 = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double d = pop[self].feature_scores[k] - pop[j].feature_scores[k];
      d2 += d * d;
    }
    acc += std::sqrt(d2);
  }
  return acc / static_cast<double>(pop.size() - 1);
}

// a dominates b: >= on every maximised objective, > on at least one.
bool dominates(const Individual& a, const Individual& b) {
  bool strictly = false;
  for (int k = 0; k < 3; ++k) {
    if (a.objectives[k] < b.objectives[k]) return false;
    if (a.objectives[k] > b.objectives[k]) strictly = true;
  }
  return strictly;
}

std::vector<std::vector<int>> sort_fronts(const std::vector<Individual>& inds) {
  const int n = static_cast<int>(inds.size());
  std::vector<std::vector<int>> dominated(n);
  std::vector<int> dominated_by(n, 0);
  std::vector<std::vector<int>> fronts;
  std::vector<int> current;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      if (dominates(inds[i], inds[j])) dominated[i].push_back(j);
      else if (dominates(inds[j], inds[i])) ++dominated_by[i];
    }
    if (dominated_by[i] == 0) current.push_back(i);
  }
  while (!current.empty()) {
    fronts.push_back(current);
    std::vector<int> next;
    for (int i : current) {
      for (int j : dominated[i]) {
        if (--dominated_by[j] == 0) next.push_back(j);
      }
    }
    std::sort(next.begin(), next.end());
    current = std::move(next);
  }
  return fronts;
}

std::vector<double> crowding_for(const std::vector<Individual>& inds,
                                 const std::vector<int>& front) {
  const std::size_t m = front.size();
  std::vector<double> crowd(m, 0.0);
  if (m <= 2) {
    std::fill(crowd.begin(), crowd.end(),
              std::numeric_limits<double>::infinity());
    return crowd;
  }
  std::vector<int> order(m);
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < m; ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      return inds[front[a]].objectives[k] < inds[front[b]].objectives[k];
    });
    const double lo = inds[front[order.front()]].objectives[k];
    const double hi = inds[front[order.back()]].objectives[k];
    crowd[order.front()] = std::numeric_limits<double>::infinity();
    crowd[order.back()] = std::numeric_limits<double>::infinity();
    const double range = hi - lo;
    if (range <= 0.0) continue;
    for (std::size_t i = 1; i + 1 < m; ++i) {
      const double gap = inds[front[order[i + 1]]].objectives[k] -
                         inds[front[order[i - 1]]].objectives[k];
      crowd[order[i]] += gap / range;
    }
  }
  return crowd;
}

// Assigns rank and crowding from a full non-dominated sort of `inds`.
void assign_rank_crowding(std::vector<Individual>& inds) {
  const auto fronts = sort_fronts(inds);
  for (std::size_t f = 0; f < fronts.size(); ++f) {
    const auto crowd = crowding_for(inds, fronts[f]);
    for (std::size_t i = 0; i < fronts[f].size(); ++i) {
      inds[fronts[f][i]].rank = static_cast<int>(f);
      inds[fronts[f][i]].crowding = crowd[i];
    }
  }
}

void assign_diversity_objectives(std::vector<Individual>& inds,
                                 const Genome& lo, const Genome& hi) {
  if (inds.size() < 2) return;
  for (std::size_t i = 0; i < inds.size(); ++i) {
    inds[i].objectives[1] = mean_genotypic_distance(i, inds, lo, hi);
    inds[i].objectives[2] = mean_behavioral_distance(i, inds);
  }
}

void evaluate_all(std::vector<Individual>& inds, const BehaviorStats& target,
                  const CalibratorConfig& cfg, std::uint64_t round_seed,
                  int generation) {
  parallel_for(
      inds.size(),
      [&](std::size_t i) {
        const std::uint64_t seed = derive_seed(
            round_seed, kEvalStream, static_cast<std::uint64_t>(generation), i);
        const Evaluation e = evaluate_genome(inds[i].genome, target, cfg.eval, seed);
        inds[i].objectives[0] = e.performance;
        inds[i].feature_scores = e.feature_scores;
      },
      cfg.eval_threads);
}

void sbx_crossover(Genome& a, Genome& b, const CalibratorConfig& cfg, Rng& rng) {
  const double eta = cfg.eta_crossover;
  for (int i = 0; i < kGenomeSize; ++i) {
    if (rng.uniform() > 0.5) continue;
    const double xl = cfg.lower_bounds[i];
    const double xu = cfg.upper_bounds[i];
    double x1 = std::min(a[i], b[i]);
    double x2 = std::max(a[i], b[i]);
    if (x2 - x1 < 1e-14) continue;
    const double u = rng.uniform();

    auto spread = [&](double beta) {
      const double alpha = 2.0 - std::pow(beta, -(eta + 1.0));
      if (u <= 1.0 / alpha) return std::pow(u * alpha, 1.0 / (eta + 1.0));
      return std::pow(1.0 / (2.0 - u * alpha), 1.0 / (eta + 1.0));
    };

    const double bq1 = spread(1.0 + 2.0 * (x1 - xl) / (x2 - x1));
    double c1 = 0.5 * (x1 + x2 - bq1 * (x2 - x1));
    const double bq2 = spread(1.0 + 2.0 * (xu - x2) / (x2 - x1));
    double c2 = 0.5 * (x1 + x2 + bq2 * (x2 - x1));
    c1 = std::clamp(c1, xl, xu);
    c2 = std::clamp(c2, xl, xu);
    if (rng.uniform() <= 0.5) std::swap(c1, c2);
    a[i] = c1;
    b[i] = c2;
  }
}

void polynomial_mutation(Genome& g, const CalibratorConfig& cfg, Rng& rng) {
  const double eta = cfg.eta_mutation;
  for (int i = 0; i < kGenomeSize; ++i) {
    if (rng.uniform() > cfg.p_mutation) continue;
    const double xl = cfg.lower_bounds[i];
    const double xu = cfg.upper_bounds[i];
    if (xu <= xl) continue;
    double x = g[i];
    const double d1 = (x - xl) / (xu - xl);
    const double d2 = (xu - x) / (xu - xl);
    const double u = rng.uniform();
    const double mut_pow = 1.0 / (eta + 1.0);
    double delta_q;
    if (u < 0.5) {
      const double xy = 1.0 - d1;
      const double val = 2.0 * u + (1.0 - 2.0 * u) * std::pow(xy, eta + 1.0);
      delta_q = std::pow(val, mut_pow) - 1.0;
    } else {
      const double xy = 1.0 - d2;
      const double val =
          2.0 * (1.0 - u) + 2.0 * (u - 0.5) * std::pow(xy, eta + 1.0);
      delta_q = 1.0 - std::pow(val, mut_pow);
    }
    x += delta_q * (xu - xl);
    g[i] = std::clamp(x, xl, xu);
  }
}

// Binary tournament by (rank asc, crowding desc); first pick wins ties.
int tournament_pick(const std::vector<Individual>& inds, Rng& rng) {
  const int a = static_cast<int>(rng.below(inds.size()));
  const int b = static_cast<int>(rng.below(inds.size()));
  return crowded_better(inds[b], inds[a]) ? b : a;
}

}  // namespace

void RoundBudget::validate() const {
  const bool gen_limited = max_generations >= 0;
  const bool wall_limited = std::isfinite(wall_clock_cap_s);
  if (!gen_limited && !wall_limited)
    throw ConfigError("round budget must limit generations or wall clock");
}

TrajectoryBatch simulate_batch(const Genome& genome, int n_agents,
                               double seconds, double dt,
                               const ArenaGeometry& g,
                               const SpeedDistribution& speeds,
                               std::uint64_t seed) {
  const ModelParams params = ModelParams::from_genome(genome);
  Rng rng(seed);

  std::vector<AgentState> agents(n_agents);
  for (auto& a : agents) {
    a.position = random_point_in_region(rng, g);
    a.heading = rng.uniform(-kPi, kPi);
    a.speed = draw_speed(speeds, rng.uniform(), rng.uniform());
    a.is_robot = false;
  }

  TrajectoryBatch batch;
  batch.frame_period_s = dt;
  const int steps = static_cast<int>(std::llround(seconds / dt));
  batch.frames.reserve(steps);
  std::vector<AgentState> next(agents.size());
  std::vector<AgentState> others;
  others.reserve(agents.size() - 1);
  for (int k = 0; k < steps; ++k) {
    for (std::size_t i = 0; i < agents.size(); ++i) {
      others.clear();
      for (std::size_t j = 0; j < agents.size(); ++j)
        if (j != i) others.push_back(agents[j]);
      next[i] = step_agent(agents[i], others, params, speeds, g, dt, rng);
    }
    agents = next;
    TrajectoryFrame frame;
    frame.t_s = static_cast<double>(k + 1) * dt;
    frame.positions.reserve(agents.size());
    frame.robot_flags.assign(agents.size(), 0);
    for (const auto& a : agents) frame.positions.push_back(a.position);
    batch.frames.push_back(std::move(frame));
  }
  return batch;
}

BehaviorStats simulate_stats(const Genome& genome, const EvalContext& ctx,
                             std::uint64_t seed) {
  const TrajectoryBatch batch =
      simulate_batch(genome, ctx.n_agents, ctx.sim_seconds, ctx.dt, *ctx.arena,
                     *ctx.speeds, seed);
  return compute_stats(batch, *ctx.arena, true);
}

Evaluation evaluate_genome(const Genome& genome, const BehaviorStats& target,
                           const EvalContext& ctx, std::uint64_t seed) {
  const BehaviorStats sim = simulate_stats(genome, ctx, seed);
  const SimilarityReport rep = similarity(sim, target);
  Evaluation e;
  e.performance = rep.S;
  e.feature_scores = {rep.I_D, rep.I_W, rep.I_O, rep.I_T};
  return e;
}

double genotypic_diversity(const Individual& ind, const Population& pop) {
  if (pop.individuals.size() < 2)
    throw SingletonPopulationError("genotypic diversity needs >= 2 individuals");
  const Genome lo = genome_lower_bounds();
  const Genome hi = genome_upper_bounds();
  double acc = 0.0;
  int count = 0;
  for (const auto& other : pop.individuals) {
    if (&other == &ind) continue;
    acc += normalised_gene_distance(ind.genome, other.genome, lo, hi);
    ++count;
  }
  return acc / count;
}

double behavioral_diversity(const Individual& ind, const Population& pop) {
  if (pop.individuals.size() < 2)
    throw SingletonPopulationError("behavioural diversity needs >= 2 individuals");
  double acc = 0.0;
  int count = 0;
  for (const auto& other : pop.individuals) {
    if (&other == &ind) continue;
    double d2 = 0.0;
    for (int k = 0; k < 4; ++k) {
      const double d = ind.feature_scores[k] - other.feature_scores[k];
      d2 += d * d;
    }
    acc += std::sqrt(d2);
    ++count;
  }
  return acc / count;
}

std::vector<std::vector<int>> fast_nondominated_sort(const Population& pop) {
  return sort_fronts(pop.individuals);
}

std::vector<double> crowding_distance(const std::vector<Individual>& front) {
  std::vector<int> all(front.size());
  for (std::size_t i = 0; i < front.size(); ++i) all[i] = static_cast<int>(i);
  return crowding_for(front, all);
}

bool crowded_better(const Individual& a, const Individual& b) {
  if (a.rank != b.rank) return a.rank < b.rank;
  return a.crowding > b.crowding;
}

RoundResult evolve_round(const Population* seed_pop, const BehaviorStats& target,
                         const RoundBudget& budget, const CalibratorConfig& cfg,
                         std::uint64_t round_seed, int round_index) {
  budget.validate();
  const auto t_start = std::chrono::steady_clock::now();
  const auto elapsed_s = [&] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         t_start)
        .count();
  };

  Population pop;
  pop.round_index = round_index;
  if (seed_pop != nullptr && !seed_pop->individuals.empty()) {
    pop.individuals = seed_pop->individuals;  // genomes carried bit-exact
  } else {
    Rng init_rng(derive_seed(round_seed, kInitStream));
    pop.individuals.resize(cfg.population_size);
    for (auto& ind : pop.individuals) {
      for (int i = 0; i < kGenomeSize; ++i)
        ind.genome[i] = init_rng.uniform(cfg.lower_bounds[i], cfg.upper_bounds[i]);
    }
  }

  RoundResult res;
  res.initial_genomes.reserve(pop.individuals.size());
  for (const auto& ind : pop.individuals) res.initial_genomes.push_back(ind.genome);

  // Stale fitness is refreshed against the new target at every round start.
  evaluate_all(pop.individuals, target, cfg, round_seed, 0);
  assign_diversity_objectives(pop.individuals, cfg.lower_bounds, cfg.upper_bounds);
  assign_rank_crowding(pop.individuals);

  Rng vrng(derive_seed(round_seed, kVarStream));
  const int n = static_cast<int>(pop.individuals.size());
  int gen = 0;
  for (;;) {
    if (budget.max_generations >= 0 && gen >= budget.max_generations) break;
    if (elapsed_s() >= budget.wall_clock_cap_s) break;

    std::vector<Individual> offspring;
    offspring.reserve(n);
    while (static_cast<int>(offspring.size()) < n) {
      const int p1 = tournament_pick(pop.individuals, vrng);
      const int p2 = tournament_pick(pop.individuals, vrng);
      Genome c1 = pop.individuals[p1].genome;
      Genome c2 = pop.individuals[p2].genome;
      if (vrng.uniform() <= cfg.p_crossover) sbx_crossover(c1, c2, cfg, vrng);
      polynomial_mutation(c1, cfg, vrng);
      polynomial_mutation(c2, cfg, vrng);
      Individual a, b;
      a.genome = c1;
      b.genome = c2;
      offspring.push_back(a);
      if (static_cast<int>(offspring.size()) < n) offspring.push_back(b);
    }
    evaluate_all(offspring, target, cfg, round_seed, gen + 1);

    std::vector<Individual> pool = pop.individuals;
    pool.insert(pool.end(), offspring.begin(), offspring.end());
    // Diversity objectives are population-relative: recompute over the pool.
    assign_diversity_objectives(pool, cfg.lower_bounds, cfg.upper_bounds);

    std::vector<Individual> selected;
    selected.reserve(n);
    const auto fronts = sort_fronts(pool);
    for (std::size_t f = 0;
         f < fronts.size() && static_cast<int>(selected.size()) < n; ++f) {
      const auto crowd = crowding_for(pool, fronts[f]);
      std::vector<int> order(fronts[f].size());
      for (std::size_t i = 0; i < order.size(); ++i)
        order[i] = static_cast<int>(i);
      std::stable_sort(order.begin(), order.end(),
                       [&](int x, int y) { return crowd[x] > crowd[y]; });
      for (int idx : order) {
        if (static_cast<int>(selected.size()) >= n) break;
        Individual ind = pool[fronts[f][idx]];
        ind.rank = static_cast<int>(f);
        ind.crowding = crowd[idx];
        selected.push_back(std::move(ind));
      }
    }
    pop.individuals = std::move(selected);
    ++pop.generation_counter;
    ++gen;

    double best = -1.0;
    for (const auto& ind : pop.individuals)
      best = std::max(best, ind.objectives[0]);
    res.best_performance_by_generation.push_back(best);
  }

  res.generations_done = gen;
  res.best_index = 0;
  for (std::size_t i = 1; i < pop.individuals.size(); ++i) {
    if (pop.individuals[i].objectives[0] >
        pop.individuals[res.best_index].objectives[0])
      res.best_index = static_cast<int>(i);
  }
  res.population = std::move(pop);
  return res;
}

std::string round_log_header() {
  std::string h = "round,t_start_s,generations_done,best_S,best_I_D,best_I_W,best_I_O,best_I_T";
  for (int i = 1; i <= kGenomeSize; ++i) h += ",g" + std::to_string(i);
  return h;
}

std::string round_log_line(int round, double t_start_s, const RoundResult& r) {
  const Individual& best = r.population.individuals[r.best_index];
  std::string line = std::to_string(round) + ',' + fmt(t_start_s) + ',' +
                     std::to_string(r.generations_done) + ',' +
                     fmt(best.objectives[0]);
  for (int k = 0; k < 4; ++k) line += ',' + fmt(best.feature_scores[k]);
  for (int i = 0; i < kGenomeSize; ++i) line += ',' + fmt(best.genome[i]);
  return line;
}

}  // namespace fishcal
