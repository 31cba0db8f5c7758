#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "fishcal/calibrator.hpp"
#include "fishcal/model.hpp"
#include "fishcal/stats.hpp"
#include "fishcal/wire.hpp"

namespace fishcal::lab {

/// Default ground-truth parameter set: strong thigmotaxis near walls, social
/// attraction in room centres, straight corridor crossings.
Genome default_ground_truth_genome();

struct ExperimentConfig {
  double duration_s = 1800.0;
  double control_dt_s = 0.2;
  double report_period_s = 60.0;
  double window_s = 120.0;
  double first_round_s = 120.0;
  int n_fish = 4;
  int n_robots = 1;
  double speedup = 1.0;  // simulated seconds per wall second (budget scaling)
  Genome ground_truth_genome = default_ground_truth_genome();
  std::uint64_t master_seed = 1;
  std::string transport = "inproc";  // "inproc" | "sockets"
  bool perturb_ground_truth = false;
  std::string experiment_id = "exp";
  double message_timeout_s = 600.0;  // lockstep waits fall back after this

  ArenaGeometry arena;
  SpeedDistribution speeds;

  // Calibrator section.
  int population_size = 60;
  int max_generations_per_round = 15;
  /// Explicit per-round wall-clock cap; <= 0 means unlimited; NaN (default)
  /// derives report_period_s / speedup.
  double wall_clock_cap_s = std::numeric_limits<double>::quiet_NaN();
  double eval_sim_seconds = 120.0;
  int eval_agents = 5;
  Genome bounds_lower = genome_lower_bounds();
  Genome bounds_upper = genome_upper_bounds();
  unsigned eval_threads = 0;

  std::map<std::string, std::string> socket_endpoints;

  ExperimentConfig();

  void validate() const;  // throws ConfigError
  CalibratorConfig calibrator_config() const;
  RoundBudget round_budget() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

/// Per-window record: robot-integration similarity plus the calibrator state
/// published at that window.
struct RoundRecord {
  int round = 0;  // consecutive window index from 1
  double t_start_s = 0.0;
  SimilarityReport integration;
  double best_S = 0.0;  // last published calibrator best (0 before any round)
  int generations_done = 0;  // 0 when this window ran no round
};

// Schedule arithmetic (all in simulated seconds).
std::vector<double> report_times(const ExperimentConfig& cfg);
std::vector<double> score_times(const ExperimentConfig& cfg);
std::vector<double> round_times(const ExperimentConfig& cfg);

struct RunSummary {
  int batches_published = 0;
  int windows_scored = 0;
  int rounds_completed = 0;
  int params_applied = 0;
  Genome initial_robot_genome{};
  Genome final_robot_genome{};
  std::vector<RoundRecord> records;
};

/// Runs the full closed-loop experiment, all three node roles in one process
/// (threads over the configured transport), writing config.json,
/// trajectories/batch_<k>.csv, rounds.csv, scores.csv and best_genome.json
/// into out_dir. `roles` restricts which nodes run (fault-injection hooks).
RunSummary run_experiment(const ExperimentConfig& cfg,
                          const std::filesystem::path& out_dir,
                          const std::set<std::string>& roles = {
                              "controller", "analyst", "calibrator"});

/// Hosts exactly one node role over socket transport.
RunSummary run_role(const ExperimentConfig& cfg, const std::string& role,
                    const std::filesystem::path& out_dir);

/// One robot step: the model drives a fifth agent whose neighbours are the
/// tracked fish; the returned position is the per-step target.
AgentState robot_controller_step(std::span<const AgentState> fish,
                                 const AgentState& robot, const Genome& genome,
                                 const ArenaGeometry& g,
                                 const SpeedDistribution& speeds, double dt,
                                 Rng& rng);

/// Control stats plus the robot-integration report over the frames in
/// (t_end - window_s, t_end]. Throws InsufficientDataError when the window
/// is not fully covered.
wire::ScoresPayload analyst_step(std::span<const TrajectoryFrame> frames,
                                 double window_s, double t_end, double dt,
                                 const ArenaGeometry& g);

/// Sinusoidal +-20% drift of each gene over `period_s`, clamped to bounds.
Genome perturbed_genome(const Genome& base, double t_s, double period_s);

/// Recomputes every window's scores from the persisted trajectory CSVs,
/// verifies them against scores.csv (CorruptLogError on mismatch) and, when
/// series_csv is non-empty, writes the per-feature score series for plotting.
std::vector<RoundRecord> replay(const std::filesystem::path& experiment_dir,
                                const std::filesystem::path& series_csv = {});

}  // namespace fishcal::lab
