#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "fishcal/calibrator.hpp"
#include "fishcal/errors.hpp"
#include "fishcal/lab.hpp"
#include "fishcal/model.hpp"
#include "fishcal/rng.hpp"
#include "fishcal/stats.hpp"

namespace fs = std::filesystem;
using namespace fishcal;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitTransport = 3;

Genome genome_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open genome file '" + path + "'");
  nlohmann::json j;
  in >> j;
  const auto values = (j.is_array() ? j : j.at("genome")).get<std::vector<double>>();
  if (values.size() != kGenomeSize)
    throw ConfigError("genome must have 18 entries");
  Genome g{};
  std::copy(values.begin(), values.end(), g.begin());
  return g;
}

TrajectoryBatch batch_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trajectory CSV '" + path + "'");
  return read_trajectory_csv(in);
}

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            std::optional<double> speedup, std::optional<std::string> transport,
            const std::string& out_dir, const std::string& role) {
  lab::ExperimentConfig cfg;
  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("cannot open config '" + config_path + "'");
    nlohmann::json j;
    in >> j;
    cfg = lab::config_from_json(j);
    if (seed) cfg.master_seed = *seed;
    if (speedup) cfg.speedup = *speedup;
    if (transport) cfg.transport = *transport;
    cfg.validate();
    if (cfg.transport == "sockets" && role.empty())
      throw ConfigError("sockets transport requires --role "
                        "(controller|analyst|calibrator)");
    if (cfg.transport == "inproc" && !role.empty())
      throw ConfigError("--role only applies to the sockets transport");
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }

  try {
    if (cfg.transport == "inproc") {
      const lab::RunSummary sum = lab::run_experiment(cfg, out_dir);
      std::cout << "experiment complete: " << sum.batches_published
                << " batches, " << sum.windows_scored << " windows, "
                << sum.rounds_completed << " rounds -> " << out_dir << '\n';
    } else {
      const lab::RunSummary sum = lab::run_role(cfg, role, out_dir);
      std::cout << "role '" << role << "' finished ("
                << sum.batches_published + sum.windows_scored + sum.rounds_completed
                << " events) -> " << out_dir << '\n';
    }
  } catch (const TransportError& e) {
    std::cerr << "transport error: " << e.what() << '\n';
    return kExitTransport;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_simulate(const std::string& genome_path, bool random_genome, int agents,
                 double seconds, double dt, std::uint64_t seed,
                 const std::string& out_csv) {
  Genome genome{};
  try {
    if (random_genome) {
      Rng rng(seed);
      genome = fishcal::random_genome(rng);
    } else {
      genome = genome_from_file(genome_path);
    }
    if (!genome_in_bounds(genome)) throw ConfigError("genome out of bounds");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  const ArenaGeometry arena = canonical_geometry();
  const SpeedDistribution speeds = SpeedDistribution::default_profile();
  const TrajectoryBatch batch =
      simulate_batch(genome, agents, seconds, dt, arena, speeds,
                     derive_seed(seed, 0x73696d));
  std::ofstream out(out_csv);
  if (!out) {
    std::cerr << "error: cannot write '" << out_csv << "'\n";
    return kExitConfig;
  }
  write_trajectory_csv(out, batch);
  std::cout << "wrote " << batch.frames.size() << " frames x "
            << batch.frames.front().positions.size() << " agents to " << out_csv
            << '\n';
  return kExitOk;
}

int cmd_analyze(const std::string& control_csv, const std::string& test_csv,
                const std::string& out_json) {
  try {
    const ArenaGeometry arena = canonical_geometry();
    const TrajectoryBatch control_batch = batch_from_file(control_csv);
    const TrajectoryBatch test_batch = batch_from_file(test_csv);
    const BehaviorStats control = compute_stats(control_batch, arena, false);
    const BehaviorStats test = compute_stats(test_batch, arena, true);
    const SimilarityReport report = similarity(test, control);
    std::ofstream out(out_json);
    if (!out) throw ConfigError("cannot write '" + out_json + "'");
    out << similarity_to_json(report).dump(2) << '\n';
    std::cout << "S = " << report.S << " -> " << out_json << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_calibrate(const std::string& control_csv, int rounds, int population,
                  int generations, std::uint64_t seed, const std::string& out_dir,
                  double sim_seconds, int n_agents) {
  try {
    const ArenaGeometry arena = canonical_geometry();
    const SpeedDistribution speeds = SpeedDistribution::default_profile();
    const TrajectoryBatch batch = batch_from_file(control_csv);
    const BehaviorStats target = compute_stats(batch, arena, false);

    CalibratorConfig cfg;
    cfg.population_size = population;
    cfg.eval.arena = &arena;
    cfg.eval.speeds = &speeds;
    cfg.eval.sim_seconds = sim_seconds;
    cfg.eval.n_agents = n_agents;

    RoundBudget budget;
    budget.max_generations = generations;

    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "rounds.csv");
    log << round_log_header() << '\n';

    std::optional<Population> carried;
    RoundResult last;
    for (int r = 1; r <= rounds; ++r) {
      last = evolve_round(carried ? &*carried : nullptr, target, budget, cfg,
                          derive_seed(seed, 0x63616c, r), r);
      carried = last.population;
      log << round_log_line(r, 0.0, last) << '\n';
      const auto& best = last.population.individuals[last.best_index];
      std::cout << "round " << r << ": best S = " << best.objectives[0] << '\n';
    }
    const auto& best = last.population.individuals[last.best_index];
    nlohmann::ordered_json j;
    j["genome"] = best.genome;
    j["best_S"] = best.objectives[0];
    j["round"] = rounds;
    std::ofstream out(fs::path(out_dir) / "best_genome.json");
    out << j.dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

int cmd_replay(const std::string& dir, const std::string& out_csv) {
  try {
    const auto records = lab::replay(dir, out_csv.empty() ? fs::path() : fs::path(out_csv));
    std::cout << "replay verified " << records.size() << " windows, 0 mismatches\n";
  } catch (const CorruptLogError& e) {
    std::cerr << "corrupt log: " << e.what() << '\n';
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitOk;
}

// -- selftest ----------------------------------------------------------------

struct CheckResult {
  bool ok;
  double seconds;
};

template <typename Fn>
CheckResult timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  const bool ok = fn();
  const double s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {ok, s};
}

// O(n^2 m) dominance-matrix front assignment, independent of the library path.
std::vector<int> brute_force_ranks(const std::vector<Individual>& inds) {
  const int n = static_cast<int>(inds.size());
  auto dominates = [&](int a, int b) {
    bool strict = false;
    for (int k = 0; k < 3; ++k) {
      if (inds[a].objectives[k] < inds[b].objectives[k]) return false;
      if (inds[a].objectives[k] > inds[b].objectives[k]) strict = true;
    }
    return strict;
  };
  std::vector<std::vector<bool>> dom(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) dom[i][j] = dominates(i, j);
  std::vector<int> rank(n, -1);
  std::vector<bool> assigned(n, false);
  int level = 0;
  int remaining = n;
  while (remaining > 0) {
    std::vector<int> now;
    for (int i = 0; i < n; ++i) {
      if (assigned[i]) continue;
      bool dominated = false;
      for (int j = 0; j < n; ++j) {
        if (!assigned[j] && dom[j][i]) {
          dominated = true;
          break;
        }
      }
      if (!dominated) now.push_back(i);
    }
    for (int i : now) {
      rank[i] = level;
      assigned[i] = true;
    }
    remaining -= static_cast<int>(now.size());
    ++level;
  }
  return rank;
}

bool check_sort_oracle(bool inject_bug) {
  Rng rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(19));
    Population pop;
    pop.individuals.resize(n);
    for (auto& ind : pop.individuals)
      for (int k = 0; k < 3; ++k)
        ind.objectives[k] = std::floor(rng.uniform() * 10.0) / 10.0;
    const auto fronts = fast_nondominated_sort(pop);
    std::vector<int> got(n, -1);
    for (std::size_t f = 0; f < fronts.size(); ++f)
      for (int i : fronts[f]) got[i] = static_cast<int>(f);
    auto want = brute_force_ranks(pop.individuals);
    if (inject_bug && !want.empty()) want[0] += 1;
    if (got != want) return false;
  }
  return true;
}

bool check_hellinger_triples() {
  Rng rng(7);
  auto random_hist = [&](int bins) {
    std::vector<double> h(bins);
    double sum = 0.0;
    for (auto& v : h) {
      v = rng.uniform();
      sum += v;
    }
    for (auto& v : h) v /= sum;
    return h;
  };
  for (int trial = 0; trial < 10000; ++trial) {
    const int bins = 2 + static_cast<int>(rng.below(15));
    const auto p = random_hist(bins);
    const auto q = random_hist(bins);
    const auto r = random_hist(bins);
    const double pq = hellinger(p, q);
    const double qp = hellinger(q, p);
    const double pr = hellinger(p, r);
    const double qr = hellinger(q, r);
    if (std::fabs(pq - qp) > 1e-12) return false;
    if (pq < 0.0 || pq > 1.0) return false;
    if (pq > pr + qr + 1e-12) return false;
    if (hellinger(p, p) > 1e-12) return false;
  }
  return true;
}

bool check_sampling_fidelity() {
  // Exact 64-bin von Mises(0,2) masses by Simpson integration per bin.
  const int bins = 64;
  std::vector<double> exact(bins, 0.0);
  for (int b = 0; b < bins; ++b) {
    const double lo = -kPi + 2.0 * kPi * b / bins;
    const double hi = -kPi + 2.0 * kPi * (b + 1) / bins;
    const int steps = 64;
    double acc = 0.0;
    const double h = (hi - lo) / steps;
    for (int s = 0; s <= steps; ++s) {
      const double x = lo + h * s;
      const double w = (s == 0 || s == steps) ? 1.0 : (s % 2 == 1 ? 4.0 : 2.0);
      acc += w * von_mises_density(x, 0.0, 2.0);
    }
    exact[b] = acc * h / 3.0;
  }
  double norm = 0.0;
  for (double v : exact) norm += v;
  for (auto& v : exact) v /= norm;

  DirectionPdf pdf;
  for (int k = 0; k < kAngleGridSize; ++k)
    pdf.density[k] = von_mises_density(DirectionPdf::angle_at(k), 0.0, 2.0);
  const double integral = pdf.trapezoid_integral();
  for (auto& v : pdf.density) v /= integral;
  const DirectionCdf cdf = cdf_from_pdf(pdf);

  Rng rng(99);
  std::vector<double> empirical(bins, 0.0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const double theta = sample_direction(cdf, rng.uniform());
    int b = static_cast<int>((theta + kPi) / (2.0 * kPi) * bins);
    b = std::clamp(b, 0, bins - 1);
    empirical[b] += 1.0;
  }
  for (auto& v : empirical) v /= draws;
  return hellinger(empirical, exact) <= 0.05;
}

int cmd_selftest(bool inject_sort_bug) {
  bool all_ok = true;
  struct Entry {
    const char* name;
    CheckResult result;
  };
  std::vector<Entry> entries;
  entries.push_back({"nondominated-sort-oracle",
                     timed([&] { return check_sort_oracle(inject_sort_bug); })});
  entries.push_back({"hellinger-triples", timed([] { return check_hellinger_triples(); })});
  entries.push_back({"sampling-fidelity", timed([] { return check_sampling_fidelity(); })});
  for (const auto& e : entries) {
    std::printf("%-26s %s  (%.3f s)\n", e.name, e.result.ok ? "PASS" : "FAIL",
                e.result.seconds);
    all_ok = all_ok && e.result.ok;
  }
  return all_ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Closed-loop behavioural-model calibration lab"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run a full closed-loop experiment");
  std::string run_config, run_out, run_role;
  std::optional<std::uint64_t> run_seed;
  std::optional<double> run_speedup;
  std::optional<std::string> run_transport;
  run->add_option("--config", run_config, "Experiment config JSON")->required();
  run->add_option("--seed", run_seed, "Master seed override");
  run->add_option("--speedup", run_speedup, "Speedup override");
  run->add_option("--transport", run_transport, "inproc|sockets")
      ->check(CLI::IsMember({"inproc", "sockets"}));
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_option("--role", run_role,
                  "Node role to host (sockets transport only)")
      ->check(CLI::IsMember({"controller", "analyst", "calibrator"}));

  // simulate
  auto* sim = app.add_subcommand("simulate", "Pure-model trajectory run");
  std::string sim_genome, sim_out;
  bool sim_random = false;
  int sim_agents = 5;
  double sim_seconds = 120.0, sim_dt = 0.2;
  std::uint64_t sim_seed = 1;
  sim->add_option("--genome", sim_genome, "Genome JSON file");
  sim->add_flag("--random", sim_random, "Draw a random in-bounds genome");
  sim->add_option("--agents", sim_agents, "Number of agents")->default_val(5);
  sim->add_option("--seconds", sim_seconds, "Simulated seconds")->default_val(120.0);
  sim->add_option("--dt", sim_dt, "Step length in seconds")->default_val(0.2);
  sim->add_option("--seed", sim_seed, "Seed")->default_val(1);
  sim->add_option("--out", sim_out, "Output trajectory CSV")->required();

  // analyze
  auto* ana = app.add_subcommand("analyze", "Score a test trajectory against a control");
  std::string ana_control, ana_test, ana_out;
  ana->add_option("--control", ana_control, "Control trajectory CSV")->required();
  ana->add_option("--test", ana_test, "Test trajectory CSV")->required();
  ana->add_option("--out", ana_out, "Similarity report JSON")->required();

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Offline calibration against a control CSV");
  std::string cal_control, cal_out;
  int cal_rounds = 1, cal_population = 24, cal_generations = 10;
  std::uint64_t cal_seed = 1;
  double cal_sim_seconds = 120.0;
  int cal_agents = 5;
  cal->add_option("--control", cal_control, "Control trajectory CSV")->required();
  cal->add_option("--rounds", cal_rounds, "Warm-started rounds")->default_val(1);
  cal->add_option("--population", cal_population, "Population size")->default_val(24);
  cal->add_option("--generations", cal_generations, "Generations per round")
      ->default_val(10);
  cal->add_option("--seed", cal_seed, "Seed")->default_val(1);
  cal->add_option("--sim-seconds", cal_sim_seconds, "Evaluation window seconds")
      ->default_val(120.0);
  cal->add_option("--agents", cal_agents, "Agents per evaluation")->default_val(5);
  cal->add_option("--out", cal_out, "Output directory")->required();

  // replay
  auto* rep = app.add_subcommand("replay", "Verify an experiment directory");
  std::string rep_dir, rep_out;
  rep->add_option("--dir", rep_dir, "Experiment directory")->required();
  rep->add_option("--out", rep_out, "Per-feature score series CSV");

  // selftest
  auto* st = app.add_subcommand("selftest", "Run the built-in oracle checks");
  bool st_inject = false;
  st->add_flag("--inject-sort-bug", st_inject,
               "Corrupt the sort oracle (fault-injection testing)");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed())
    return cmd_run(run_config, run_seed, run_speedup, run_transport, run_out,
                   run_role);
  if (sim->parsed()) {
    if (sim_random == !sim_genome.empty()) {
      std::cerr << "error: provide exactly one of --genome or --random\n";
      return kExitConfig;
    }
    return cmd_simulate(sim_genome, sim_random, sim_agents, sim_seconds, sim_dt,
                        sim_seed, sim_out);
  }
  if (ana->parsed()) return cmd_analyze(ana_control, ana_test, ana_out);
  if (cal->parsed())
    return cmd_calibrate(cal_control, cal_rounds, cal_population,
                         cal_generations, cal_seed, cal_out, cal_sim_seconds,
                         cal_agents);
  if (rep->parsed()) return cmd_replay(rep_dir, rep_out);
  if (st->parsed()) return cmd_selftest(st_inject);
  return kExitConfig;
}
