#include "fishcal/lab.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

#include "fishcal/errors.hpp"

namespace fishcal::lab {

namespace fs = std::filesystem;
using namespace std::chrono_literals;

namespace {

constexpr std::uint64_t kInitStream = 0x7374617274;        // initial states
constexpr std::uint64_t kSimStream = 0x7369;               // per-frame stepping
constexpr std::uint64_t kRobotGenomeStream = 0x7267;       // initial robot genome
constexpr std::uint64_t kRoundStream = 0x726f756e64;       // calibration rounds

std::string fmt(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_field(const std::string& s, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw CorruptLogError(std::string("bad ") + what + " field: '" + s + "'");
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

bool near_integer_multiple(double value, double base) {
  if (base <= 0.0) return false;
  const double q = value / base;
  return std::fabs(q - std::llround(q)) < 1e-9;
}

std::chrono::milliseconds to_ms(double seconds) {
  return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
}

}  // namespace

Genome default_ground_truth_genome() {
  // Wall: thigmotaxis; centre: social exploration; corridor: straight dashes.
  return Genome{3.0, 14.0, 4.0,  0.75,   // wall k0, kw, kf, alpha
                1.0, 3.0,  8.0,  0.25,   // room centre
                10.0, 5.0, 2.0,  0.5,    // corridor
                1.0, 0.6,                // gamma wall -> centre, corridor
                2.0, 0.8,                // gamma centre -> wall, corridor
                2.0, 1.5};               // gamma corridor -> wall, centre
}

ExperimentConfig::ExperimentConfig()
    : arena(canonical_geometry()), speeds(SpeedDistribution::default_profile()) {}

void ExperimentConfig::validate() const {
  if (control_dt_s <= 0.0) throw ConfigError("control_dt_s must be > 0");
  if (report_period_s <= 0.0) throw ConfigError("report_period_s must be > 0");
  if (window_s < report_period_s)
    throw ConfigError("window_s must be >= report_period_s");
  if (first_round_s < window_s)
    throw ConfigError("first_round_s must be >= window_s");
  if (duration_s <= first_round_s)
    throw ConfigError("duration_s must be > first_round_s");
  if (!near_integer_multiple(report_period_s, control_dt_s))
    throw ConfigError("report_period_s must be a multiple of control_dt_s");
  for (double v : {window_s, first_round_s, duration_s}) {
    if (!near_integer_multiple(v, report_period_s))
      throw ConfigError("window_s, first_round_s and duration_s must be "
                        "multiples of report_period_s");
  }
  if (n_fish < 0 || n_robots < 0 || n_fish + n_robots < 1)
    throw ConfigError("need at least one agent");
  if (speedup < 1.0) throw ConfigError("speedup must be >= 1");
  if (transport != "inproc" && transport != "sockets")
    throw ConfigError("transport must be 'inproc' or 'sockets'");
  for (int i = 0; i < kGenomeSize; ++i) {
    if (!(bounds_lower[i] <= bounds_upper[i]))
      throw ConfigError("genome bounds inverted");
    if (ground_truth_genome[i] < bounds_lower[i] ||
        ground_truth_genome[i] > bounds_upper[i])
      throw ConfigError("ground_truth_genome outside bounds");
  }
  if (population_size < 2) throw ConfigError("population_size must be >= 2");
  if (eval_agents < 1) throw ConfigError("eval_agents must be >= 1");
  if (eval_sim_seconds <= 0.0) throw ConfigError("eval_sim_seconds must be > 0");
  speeds.validate();
  round_budget().validate();
  if (transport == "sockets") {
    for (const char* topic : {"trajectory", "scores", "params", "ack"}) {
      if (!socket_endpoints.contains(topic))
        throw ConfigError(std::string("sockets transport needs an endpoint for '") +
                          topic + "'");
    }
  }
}

CalibratorConfig ExperimentConfig::calibrator_config() const {
  CalibratorConfig c;
  c.population_size = population_size;
  c.lower_bounds = bounds_lower;
  c.upper_bounds = bounds_upper;
  c.eval.arena = &arena;
  c.eval.speeds = &speeds;
  c.eval.sim_seconds = eval_sim_seconds;
  c.eval.n_agents = eval_agents;
  c.eval.dt = control_dt_s;
  c.eval_threads = eval_threads;
  return c;
}

RoundBudget ExperimentConfig::round_budget() const {
  RoundBudget b;
  b.max_generations = max_generations_per_round;
  if (std::isnan(wall_clock_cap_s))
    b.wall_clock_cap_s = report_period_s / speedup;
  else if (wall_clock_cap_s <= 0.0)
    b.wall_clock_cap_s = std::numeric_limits<double>::infinity();
  else
    b.wall_clock_cap_s = wall_clock_cap_s;
  return b;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  if (j.contains("experiment")) {
    const auto& e = j.at("experiment");
    cfg.duration_s = e.value("duration_s", cfg.duration_s);
    cfg.control_dt_s = e.value("control_dt_s", cfg.control_dt_s);
    cfg.report_period_s = e.value("report_period_s", cfg.report_period_s);
    cfg.window_s = e.value("window_s", cfg.window_s);
    cfg.first_round_s = e.value("first_round_s", cfg.first_round_s);
    cfg.n_fish = e.value("n_fish", cfg.n_fish);
    cfg.n_robots = e.value("n_robots", cfg.n_robots);
    cfg.speedup = e.value("speedup", cfg.speedup);
    cfg.master_seed = e.value("master_seed", cfg.master_seed);
    cfg.transport = e.value("transport", cfg.transport);
    cfg.perturb_ground_truth =
        e.value("perturb_ground_truth", cfg.perturb_ground_truth);
    cfg.experiment_id = e.value("experiment_id", cfg.experiment_id);
    cfg.message_timeout_s = e.value("message_timeout_s", cfg.message_timeout_s);
    if (e.contains("ground_truth_genome")) {
      const auto v = e.at("ground_truth_genome").get<std::vector<double>>();
      if (v.size() != kGenomeSize)
        throw ConfigError("ground_truth_genome must have 18 entries");
      std::copy(v.begin(), v.end(), cfg.ground_truth_genome.begin());
    }
  }
  if (j.contains("arena")) cfg.arena = geometry_from_json(j.at("arena"));
  if (j.contains("speed_distribution"))
    cfg.speeds = SpeedDistribution::from_json(j.at("speed_distribution"));
  if (j.contains("calibrator")) {
    const auto& c = j.at("calibrator");
    cfg.population_size = c.value("population_size", cfg.population_size);
    cfg.max_generations_per_round =
        c.value("max_generations_per_round", cfg.max_generations_per_round);
    if (c.contains("wall_clock_cap_s") && !c.at("wall_clock_cap_s").is_null())
      cfg.wall_clock_cap_s = c.at("wall_clock_cap_s").get<double>();
    cfg.eval_sim_seconds = c.value("sim_seconds", cfg.eval_sim_seconds);
    cfg.eval_agents = c.value("n_agents", cfg.eval_agents);
    cfg.eval_threads = c.value("eval_threads", cfg.eval_threads);
    auto read_bounds = [&](const char* key, Genome& out) {
      if (!c.contains(key)) return;
      const auto v = c.at(key).get<std::vector<double>>();
      if (v.size() != kGenomeSize)
        throw ConfigError(std::string(key) + " must have 18 entries");
      std::copy(v.begin(), v.end(), out.begin());
    };
    read_bounds("bounds_lower", cfg.bounds_lower);
    read_bounds("bounds_upper", cfg.bounds_upper);
  }
  if (j.contains("sockets")) {
    for (const auto& [topic, endpoint] : j.at("sockets").items())
      cfg.socket_endpoints[topic] = endpoint.get<std::string>();
  }
  return cfg;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json e;
  e["duration_s"] = cfg.duration_s;
  e["control_dt_s"] = cfg.control_dt_s;
  e["report_period_s"] = cfg.report_period_s;
  e["window_s"] = cfg.window_s;
  e["first_round_s"] = cfg.first_round_s;
  e["n_fish"] = cfg.n_fish;
  e["n_robots"] = cfg.n_robots;
  e["speedup"] = cfg.speedup;
  e["master_seed"] = cfg.master_seed;
  e["transport"] = cfg.transport;
  e["perturb_ground_truth"] = cfg.perturb_ground_truth;
  e["experiment_id"] = cfg.experiment_id;
  e["message_timeout_s"] = cfg.message_timeout_s;
  e["ground_truth_genome"] = cfg.ground_truth_genome;

  nlohmann::ordered_json c;
  c["population_size"] = cfg.population_size;
  c["max_generations_per_round"] = cfg.max_generations_per_round;
  if (std::isnan(cfg.wall_clock_cap_s))
    c["wall_clock_cap_s"] = nullptr;
  else if (std::isinf(cfg.wall_clock_cap_s))
    c["wall_clock_cap_s"] = 0.0;
  else
    c["wall_clock_cap_s"] = cfg.wall_clock_cap_s;
  c["sim_seconds"] = cfg.eval_sim_seconds;
  c["n_agents"] = cfg.eval_agents;
  c["eval_threads"] = cfg.eval_threads;
  c["bounds_lower"] = cfg.bounds_lower;
  c["bounds_upper"] = cfg.bounds_upper;

  nlohmann::ordered_json j;
  j["experiment"] = std::move(e);
  j["arena"] = geometry_to_json(cfg.arena);
  j["speed_distribution"] = cfg.speeds.to_json();
  j["calibrator"] = std::move(c);
  if (!cfg.socket_endpoints.empty()) {
    nlohmann::ordered_json s;
    for (const auto& [topic, endpoint] : cfg.socket_endpoints) s[topic] = endpoint;
    j["sockets"] = std::move(s);
  }
  return j;
}

std::vector<double> report_times(const ExperimentConfig& cfg) {
  std::vector<double> out;
  const int n = static_cast<int>(std::llround(cfg.duration_s / cfg.report_period_s));
  out.reserve(n);
  for (int k = 1; k <= n; ++k) out.push_back(k * cfg.report_period_s);
  return out;
}

std::vector<double> score_times(const ExperimentConfig& cfg) {
  std::vector<double> out;
  for (double t : report_times(cfg))
    if (t >= cfg.window_s - 1e-9) out.push_back(t);
  return out;
}

std::vector<double> round_times(const ExperimentConfig& cfg) {
  std::vector<double> out;
  for (double t : report_times(cfg)) {
    if (t >= cfg.first_round_s - 1e-9 &&
        t + cfg.report_period_s <= cfg.duration_s + 1e-9)
      out.push_back(t);
  }
  return out;
}

Genome perturbed_genome(const Genome& base, double t_s, double period_s) {
  Genome g = base;
  for (int i = 0; i < kGenomeSize; ++i) {
    const double phase = 2.0 * kPi * static_cast<double>(i) / kGenomeSize;
    g[i] = base[i] * (1.0 + 0.2 * std::sin(2.0 * kPi * t_s / period_s + phase));
  }
  return clamp_genome(g);
}

AgentState robot_controller_step(std::span<const AgentState> fish,
                                 const AgentState& robot, const Genome& genome,
                                 const ArenaGeometry& g,
                                 const SpeedDistribution& speeds, double dt,
                                 Rng& rng) {
  const ModelParams params = ModelParams::from_genome(genome);
  return step_agent(robot, fish, params, speeds, g, dt, rng);
}

wire::ScoresPayload analyst_step(std::span<const TrajectoryFrame> frames,
                                 double window_s, double t_end, double dt,
                                 const ArenaGeometry& g) {
  TrajectoryBatch window;
  window.frame_period_s = dt;
  const double t_lo = t_end - window_s;
  for (const auto& f : frames) {
    if (f.t_s > t_lo + 1e-9 && f.t_s <= t_end + 1e-9)
      window.frames.push_back(f);
  }
  const auto expected = static_cast<std::size_t>(std::llround(window_s / dt));
  if (window.frames.size() < expected)
    throw InsufficientDataError(
        "window ending at " + fmt(t_end) + " s has " +
        std::to_string(window.frames.size()) + " of " + std::to_string(expected) +
        " frames");
  wire::ScoresPayload payload;
  payload.control = compute_stats(window, g, false);
  payload.integration = similarity(compute_stats(window, g, true), payload.control);
  return payload;
}

// ---------------------------------------------------------------------------
// Node roles
// ---------------------------------------------------------------------------

namespace {

class ControllerNode {
 public:
  ControllerNode(const ExperimentConfig& cfg, wire::Transport& tr,
                 fs::path out_dir)
      : cfg_(cfg), tr_(tr), out_dir_(std::move(out_dir)) {}

  RunSummary run() {
    RunSummary sum;
    fs::create_directories(out_dir_ / "trajectories");
    {
      std::ofstream out(out_dir_ / "config.json");
      out << config_to_json(cfg_).dump(2) << '\n';
    }

    Rng genome_rng(derive_seed(cfg_.master_seed, kRobotGenomeStream));
    Genome robot_genome;
    for (int i = 0; i < kGenomeSize; ++i)
      robot_genome[i] = genome_rng.uniform(cfg_.bounds_lower[i], cfg_.bounds_upper[i]);
    sum.initial_robot_genome = robot_genome;

    Rng init_rng(derive_seed(cfg_.master_seed, kInitStream));
    const int n_agents = cfg_.n_fish + cfg_.n_robots;
    std::vector<AgentState> agents(n_agents);
    for (int i = 0; i < n_agents; ++i) {
      agents[i].position = random_point_in_region(init_rng, cfg_.arena);
      agents[i].heading = init_rng.uniform(-kPi, kPi);
      agents[i].speed = draw_speed(cfg_.speeds, init_rng.uniform(), init_rng.uniform());
      agents[i].is_robot = i >= cfg_.n_fish;
    }

    Rng sim_rng(derive_seed(cfg_.master_seed, kSimStream));
    const ModelParams fixed_fish_params =
        ModelParams::from_genome(cfg_.ground_truth_genome);

    const auto rounds = round_times(cfg_);
    const int steps = static_cast<int>(std::llround(cfg_.duration_s / cfg_.control_dt_s));
    const int frames_per_period =
        static_cast<int>(std::llround(cfg_.report_period_s / cfg_.control_dt_s));

    std::vector<TrajectoryFrame> frames;
    frames.reserve(steps);
    std::vector<AgentState> next(agents.size());
    std::vector<AgentState> others;
    others.reserve(agents.size());
    int next_round = 0;

    for (int k = 1; k <= steps; ++k) {
      const double t = static_cast<double>(k) * cfg_.control_dt_s;
      const ModelParams& fish_params =
          cfg_.perturb_ground_truth
              ? (scratch_params_ = ModelParams::from_genome(perturbed_genome(
                     cfg_.ground_truth_genome, t, cfg_.duration_s)))
              : fixed_fish_params;

      for (int i = 0; i < n_agents; ++i) {
        if (!agents[i].is_robot) {
          others.clear();
          for (int j = 0; j < n_agents; ++j)
            if (j != i) others.push_back(agents[j]);
          next[i] = step_agent(agents[i], others, fish_params, cfg_.speeds,
                               cfg_.arena, cfg_.control_dt_s, sim_rng);
        } else {
          others.clear();
          for (int j = 0; j < n_agents; ++j)
            if (!agents[j].is_robot) others.push_back(agents[j]);
          next[i] = robot_controller_step(others, agents[i], robot_genome,
                                          cfg_.arena, cfg_.speeds,
                                          cfg_.control_dt_s, sim_rng);
        }
      }
      agents = next;

      TrajectoryFrame frame;
      frame.t_s = t;
      frame.positions.reserve(n_agents);
      frame.robot_flags.reserve(n_agents);
      for (const auto& a : agents) {
        frame.positions.push_back(a.position);
        frame.robot_flags.push_back(a.is_robot ? 1 : 0);
      }
      frames.push_back(std::move(frame));

      if (k % frames_per_period != 0) continue;

      // Reporting boundary: ship the last period as one batch.
      const int batch_index = k / frames_per_period;
      TrajectoryBatch batch;
      batch.frame_period_s = cfg_.control_dt_s;
      batch.frames.assign(frames.end() - frames_per_period, frames.end());
      {
        std::ofstream out(out_dir_ / "trajectories" /
                          ("batch_" + std::to_string(batch_index) + ".csv"));
        write_trajectory_csv(out, batch);
      }
      tr_.publish(wire::make_trajectory_msg(cfg_.experiment_id, t, batch));
      ++sum.batches_published;

      while (tr_.try_receive(wire::Topic::Ack, 0ms)) {
      }

      if (next_round < static_cast<int>(rounds.size()) &&
          std::fabs(rounds[next_round] - t) < 1e-9) {
        ++next_round;
        wait_for_params(robot_genome, next_round, sum);
      }
    }

    tr_.publish(wire::make_shutdown_msg(cfg_.experiment_id, cfg_.duration_s));
    sum.final_robot_genome = robot_genome;
    return sum;
  }

 private:
  void wait_for_params(Genome& robot_genome, int expected_round,
                       RunSummary& sum) {
    const auto deadline =
        std::chrono::steady_clock::now() + to_ms(cfg_.message_timeout_s);
    for (;;) {
      const auto now = std::chrono::steady_clock::now();
      if (now >= deadline) {
        std::fprintf(stderr,
                     "controller: no params for round %d, keeping last genome\n",
                     expected_round);
        return;
      }
      const auto remaining =
          std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now);
      auto msg = tr_.try_receive(wire::Topic::Params, remaining);
      if (!msg) continue;
      try {
        const wire::ParamsPayload p = wire::parse_params(*msg);
        robot_genome = p.genome;  // duplicates simply re-apply the same genome
        ++sum.params_applied;
        if (p.round >= expected_round) return;
      } catch (const std::exception& e) {
        std::fprintf(stderr, "controller: ignored bad params message: %s\n",
                     e.what());
      }
    }
  }

  const ExperimentConfig& cfg_;
  wire::Transport& tr_;
  fs::path out_dir_;
  ModelParams scratch_params_;
};

class AnalystNode {
 public:
  AnalystNode(const ExperimentConfig& cfg, wire::Transport& tr)
      : cfg_(cfg), tr_(tr) {}

  RunSummary run() {
    RunSummary sum;
    int batch_index = 0;
    for (;;) {
      if (tr_.try_receive(wire::Topic::Shutdown, 0ms)) {
        // Finish whatever is already queued before going down.
        while (auto msg = tr_.try_receive(wire::Topic::Trajectory, 0ms))
          handle_batch(*msg, ++batch_index, sum);
        break;
      }
      auto msg = tr_.try_receive(wire::Topic::Trajectory, 100ms);
      if (msg) {
        handle_batch(*msg, ++batch_index, sum);
        last_activity_ = std::chrono::steady_clock::now();
      } else if (timed_out()) {
        std::fprintf(stderr, "analyst: no trajectories for %.1f s, stopping\n",
                     cfg_.message_timeout_s);
        break;
      }
    }
    tr_.publish(wire::make_shutdown_msg(cfg_.experiment_id, cfg_.duration_s));
    return sum;
  }

 private:
  void handle_batch(const wire::Envelope& msg, int batch_index, RunSummary& sum) {
    TrajectoryBatch batch;
    try {
      batch = wire::parse_trajectory(msg);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "analyst: ignored bad trajectory message: %s\n",
                   e.what());
      return;
    }
    const double t = msg.t_sim_s;
    tr_.publish(wire::make_ack_msg(cfg_.experiment_id, t, batch_index));

    for (auto& f : batch.frames) window_.push_back(std::move(f));
    const double t_lo = t - cfg_.window_s;
    while (!window_.empty() && window_.front().t_s <= t_lo + 1e-9)
      window_.erase(window_.begin());

    if (t < cfg_.window_s - 1e-9) return;
    try {
      const wire::ScoresPayload payload =
          analyst_step(window_, cfg_.window_s, t, cfg_.control_dt_s, cfg_.arena);
      tr_.publish(wire::make_scores_msg(cfg_.experiment_id, t, payload));
      ++sum.windows_scored;
    } catch (const InsufficientDataError& e) {
      std::fprintf(stderr, "analyst: %s\n", e.what());
    }
  }

  bool timed_out() const {
    return std::chrono::steady_clock::now() - last_activity_ >
           to_ms(cfg_.message_timeout_s);
  }

  const ExperimentConfig& cfg_;
  wire::Transport& tr_;
  std::vector<TrajectoryFrame> window_;
  std::chrono::steady_clock::time_point last_activity_ =
      std::chrono::steady_clock::now();
};

class CalibratorNode {
 public:
  CalibratorNode(const ExperimentConfig& cfg, wire::Transport& tr,
                 fs::path out_dir)
      : cfg_(cfg), tr_(tr), out_dir_(std::move(out_dir)) {}

  RunSummary run() {
    RunSummary sum;
    fs::create_directories(out_dir_);
    std::ofstream rounds_csv(out_dir_ / "rounds.csv");
    rounds_csv << round_log_header() << '\n';
    std::ofstream scores_csv(out_dir_ / "scores.csv");
    scores_csv << "round,t_start_s,S,I_D,I_W,I_O,I_T,best_S,generations_done\n";

    const auto rounds = round_times(cfg_);
    const CalibratorConfig calcfg = cfg_.calibrator_config();

    for (;;) {
      if (tr_.try_receive(wire::Topic::Shutdown, 0ms)) {
        while (auto msg = tr_.try_receive(wire::Topic::Scores, 0ms))
          handle_scores(*msg, rounds, calcfg, rounds_csv, scores_csv, sum);
        break;
      }
      auto msg = tr_.try_receive(wire::Topic::Scores, 100ms);
      if (msg) {
        handle_scores(*msg, rounds, calcfg, rounds_csv, scores_csv, sum);
        last_activity_ = std::chrono::steady_clock::now();
      } else if (timed_out()) {
        std::fprintf(stderr, "calibrator: no scores for %.1f s, stopping\n",
                     cfg_.message_timeout_s);
        break;
      }
    }

    if (carried_) {
      int best = 0;
      for (std::size_t i = 1; i < carried_->individuals.size(); ++i)
        if (carried_->individuals[i].objectives[0] >
            carried_->individuals[best].objectives[0])
          best = static_cast<int>(i);
      nlohmann::ordered_json j;
      j["genome"] = carried_->individuals[best].genome;
      j["best_S"] = carried_->individuals[best].objectives[0];
      j["round"] = round_counter_;
      std::ofstream out(out_dir_ / "best_genome.json");
      out << j.dump(2) << '\n';
    }
    tr_.publish(wire::make_shutdown_msg(cfg_.experiment_id, cfg_.duration_s));
    return sum;
  }

 private:
  void handle_scores(const wire::Envelope& msg, const std::vector<double>& rounds,
                     const CalibratorConfig& calcfg, std::ofstream& rounds_csv,
                     std::ofstream& scores_csv, RunSummary& sum) {
    wire::ScoresPayload payload;
    try {
      payload = wire::parse_scores(msg);
    } catch (const std::exception& e) {
      std::fprintf(stderr, "calibrator: ignored bad scores message: %s\n",
                   e.what());
      return;
    }
    // A missed scores message simply leaves the previous target in force for
    // the next window; nothing to replay.
    const double t = msg.t_sim_s;
    ++window_counter_;
    RoundRecord rec;
    rec.round = window_counter_;
    rec.t_start_s = t;
    rec.integration = payload.integration;
    rec.best_S = last_best_s_;
    rec.generations_done = 0;

    const bool round_due =
        std::any_of(rounds.begin(), rounds.end(),
                    [&](double rt) { return std::fabs(rt - t) < 1e-9; });
    if (round_due) {
      ++round_counter_;
      const RoundResult res = evolve_round(
          carried_ ? &*carried_ : nullptr, payload.control, cfg_.round_budget(),
          calcfg, derive_seed(cfg_.master_seed, kRoundStream, round_counter_),
          round_counter_);
      carried_ = res.population;
      const Individual& best = res.population.individuals[res.best_index];
      last_best_s_ = best.objectives[0];
      rec.best_S = last_best_s_;
      rec.generations_done = res.generations_done;
      rounds_csv << round_log_line(round_counter_, t, res) << '\n';
      rounds_csv.flush();
      wire::ParamsPayload params;
      params.genome = best.genome;
      params.round = round_counter_;
      params.best_S = last_best_s_;
      tr_.publish(wire::make_params_msg(cfg_.experiment_id, t, params));
      ++sum.rounds_completed;
    }

    scores_csv << rec.round << ',' << fmt(rec.t_start_s) << ','
               << fmt(rec.integration.S) << ',' << fmt(rec.integration.I_D) << ','
               << fmt(rec.integration.I_W) << ',' << fmt(rec.integration.I_O)
               << ',' << fmt(rec.integration.I_T) << ',' << fmt(rec.best_S) << ','
               << rec.generations_done << '\n';
    scores_csv.flush();
    sum.records.push_back(rec);
  }

  bool timed_out() const {
    return std::chrono::steady_clock::now() - last_activity_ >
           to_ms(cfg_.message_timeout_s);
  }

  const ExperimentConfig& cfg_;
  wire::Transport& tr_;
  fs::path out_dir_;
  std::optional<Population> carried_;
  double last_best_s_ = 0.0;
  int window_counter_ = 0;
  int round_counter_ = 0;
  std::chrono::steady_clock::time_point last_activity_ =
      std::chrono::steady_clock::now();
};

std::set<wire::Topic> subscriptions_for(const std::string& role) {
  if (role == "controller")
    return {wire::Topic::Params, wire::Topic::Ack, wire::Topic::Shutdown};
  if (role == "analyst")
    return {wire::Topic::Trajectory, wire::Topic::Shutdown};
  if (role == "calibrator")
    return {wire::Topic::Scores, wire::Topic::Shutdown};
  throw ConfigError("unknown node role '" + role + "'");
}

RunSummary run_node(const ExperimentConfig& cfg, const std::string& role,
                    wire::Transport& tr, const fs::path& out_dir) {
  // Under sockets, make sure the contract peers are attached before the
  // first publish, or early messages would be lost.
  if (auto* sock = dynamic_cast<wire::SocketTransport*>(&tr)) {
    const auto timeout = to_ms(cfg.message_timeout_s);
    bool ok = true;
    if (role == "controller")
      ok = sock->wait_for_subscribers(wire::Topic::Trajectory, 1, timeout);
    else if (role == "analyst")
      ok = sock->wait_for_subscribers(wire::Topic::Scores, 1, timeout) &&
           sock->wait_for_subscribers(wire::Topic::Ack, 1, timeout);
    else if (role == "calibrator")
      ok = sock->wait_for_subscribers(wire::Topic::Params, 1, timeout);
    if (!ok)
      throw TransportError("role '" + role + "' saw no subscribers in time");
  }
  if (role == "controller") return ControllerNode(cfg, tr, out_dir).run();
  if (role == "analyst") return AnalystNode(cfg, tr).run();
  if (role == "calibrator") return CalibratorNode(cfg, tr, out_dir).run();
  throw ConfigError("unknown node role '" + role + "'");
}

void merge_summary(RunSummary& into, const std::string& role,
                   const RunSummary& from) {
  if (role == "controller") {
    into.batches_published = from.batches_published;
    into.params_applied = from.params_applied;
    into.initial_robot_genome = from.initial_robot_genome;
    into.final_robot_genome = from.final_robot_genome;
  } else if (role == "analyst") {
    into.windows_scored = from.windows_scored;
  } else if (role == "calibrator") {
    into.rounds_completed = from.rounds_completed;
    into.records = from.records;
  }
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir,
                          const std::set<std::string>& roles) {
  cfg.validate();
  fs::create_directories(out_dir);

  std::map<std::string, std::shared_ptr<wire::Transport>> transports;
  wire::InprocHub hub;
  if (cfg.transport == "inproc") {
    for (const auto& role : roles)
      transports[role] = hub.endpoint(role, subscriptions_for(role));
  } else {
    // Socket transports bind and connect concurrently; construction completes
    // once the mesh is up.
    std::mutex m;
    std::vector<std::thread> ts;
    std::exception_ptr error;
    for (const auto& role : roles) {
      ts.emplace_back([&, role] {
        try {
          auto tr = std::make_shared<wire::SocketTransport>(
              role, cfg.socket_endpoints, subscriptions_for(role),
              to_ms(cfg.message_timeout_s));
          std::lock_guard lock(m);
          transports[role] = std::move(tr);
        } catch (...) {
          std::lock_guard lock(m);
          if (!error) error = std::current_exception();
        }
      });
    }
    for (auto& t : ts) t.join();
    if (error) std::rethrow_exception(error);
  }

  std::map<std::string, RunSummary> summaries;
  std::mutex m;
  std::exception_ptr error;
  std::vector<std::thread> workers;
  for (const auto& role : roles) {
    workers.emplace_back([&, role] {
      try {
        RunSummary s = run_node(cfg, role, *transports.at(role), out_dir);
        std::lock_guard lock(m);
        summaries[role] = std::move(s);
      } catch (...) {
        std::lock_guard lock(m);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);

  RunSummary sum;
  for (const auto& [role, s] : summaries) merge_summary(sum, role, s);
  return sum;
}

RunSummary run_role(const ExperimentConfig& cfg, const std::string& role,
                    const fs::path& out_dir) {
  cfg.validate();
  if (cfg.transport != "sockets")
    throw ConfigError("run_role requires the sockets transport");
  fs::create_directories(out_dir);
  wire::SocketTransport tr(role, cfg.socket_endpoints, subscriptions_for(role),
                           to_ms(cfg.message_timeout_s));
  return run_node(cfg, role, tr, out_dir);
}

// ---------------------------------------------------------------------------
// Replay
// ---------------------------------------------------------------------------

std::vector<RoundRecord> replay(const fs::path& experiment_dir,
                                const fs::path& series_csv) {
  std::ifstream cfg_in(experiment_dir / "config.json");
  if (!cfg_in) throw CorruptLogError("missing config.json");
  nlohmann::json cfg_json;
  try {
    cfg_in >> cfg_json;
  } catch (const nlohmann::json::exception& e) {
    throw CorruptLogError(std::string("bad config.json: ") + e.what());
  }
  const ExperimentConfig cfg = config_from_json(cfg_json);

  // Stitch the persisted batches back into one frame list.
  std::vector<TrajectoryFrame> frames;
  const auto reports = report_times(cfg);
  const int frames_per_period =
      static_cast<int>(std::llround(cfg.report_period_s / cfg.control_dt_s));
  for (std::size_t k = 1; k <= reports.size(); ++k) {
    const fs::path file =
        experiment_dir / "trajectories" / ("batch_" + std::to_string(k) + ".csv");
    std::ifstream in(file);
    if (!in) throw CorruptLogError("missing trajectory file " + file.string());
    const TrajectoryBatch batch = read_trajectory_csv(in);
    if (static_cast<int>(batch.frames.size()) != frames_per_period)
      throw CorruptLogError("truncated trajectory file " + file.string());
    for (const auto& f : batch.frames) frames.push_back(f);
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    if (frames[i].t_s <= frames[i - 1].t_s)
      throw CorruptLogError("trajectory timestamps not increasing across batches");
  }

  // Parse the persisted per-window records.
  std::ifstream scores_in(experiment_dir / "scores.csv");
  if (!scores_in) throw CorruptLogError("missing scores.csv");
  std::string line;
  if (!std::getline(scores_in, line) ||
      line != "round,t_start_s,S,I_D,I_W,I_O,I_T,best_S,generations_done")
    throw CorruptLogError("unexpected scores.csv header");
  std::vector<RoundRecord> persisted;
  while (std::getline(scores_in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) throw CorruptLogError("bad scores.csv row: " + line);
    RoundRecord r;
    r.round = static_cast<int>(parse_field(f[0], "round"));
    r.t_start_s = parse_field(f[1], "t_start_s");
    r.integration.S = parse_field(f[2], "S");
    r.integration.I_D = parse_field(f[3], "I_D");
    r.integration.I_W = parse_field(f[4], "I_W");
    r.integration.I_O = parse_field(f[5], "I_O");
    r.integration.I_T = parse_field(f[6], "I_T");
    r.best_S = parse_field(f[7], "best_S");
    r.generations_done = static_cast<int>(parse_field(f[8], "generations_done"));
    persisted.push_back(r);
  }

  const auto scores = score_times(cfg);
  if (persisted.size() != scores.size())
    throw CorruptLogError("scores.csv has " + std::to_string(persisted.size()) +
                          " windows, schedule expects " +
                          std::to_string(scores.size()));

  auto mismatch = [](double a, double b) { return std::fabs(a - b) > 1e-9; };
  for (std::size_t w = 0; w < scores.size(); ++w) {
    const double t = scores[w];
    const wire::ScoresPayload payload =
        analyst_step(frames, cfg.window_s, t, cfg.control_dt_s, cfg.arena);
    const SimilarityReport& got = payload.integration;
    const RoundRecord& want = persisted[w];
    if (mismatch(want.t_start_s, t) || mismatch(got.S, want.integration.S) ||
        mismatch(got.I_D, want.integration.I_D) ||
        mismatch(got.I_W, want.integration.I_W) ||
        mismatch(got.I_O, want.integration.I_O) ||
        mismatch(got.I_T, want.integration.I_T))
      throw CorruptLogError("window at t=" + fmt(t) +
                            " s does not match the persisted scores");
    persisted[w].integration = got;
  }

  if (!series_csv.empty()) {
    std::ofstream out(series_csv);
    out << "t_s,biomimetic,inter-individual,wall-distance,occupation,transitions\n";
    for (const auto& r : persisted) {
      out << fmt(r.t_start_s) << ',' << fmt(r.integration.S) << ','
          << fmt(r.integration.I_D) << ',' << fmt(r.integration.I_W) << ','
          << fmt(r.integration.I_O) << ',' << fmt(r.integration.I_T) << '\n';
    }
  }
  return persisted;
}

}  // namespace fishcal::lab
