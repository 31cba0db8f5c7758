#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "fishcal/arena.hpp"
#include "fishcal/calibrator.hpp"
#include "fishcal/errors.hpp"
#include "fishcal/lab.hpp"
#include "fishcal/model.hpp"
#include "fishcal/rng.hpp"
#include "fishcal/stats.hpp"
#include "fishcal/wire.hpp"

#include <fstream>
#include <sstream>

namespace py = pybind11;
using namespace fishcal;

namespace {

Genome to_genome(const std::vector<double>& v) {
  if (v.size() != kGenomeSize)
    throw std::invalid_argument("genome must have 18 entries");
  Genome g{};
  std::copy(v.begin(), v.end(), g.begin());
  return g;
}

}  // namespace

PYBIND11_MODULE(_fishcal, m) {
  m.doc() = "Closed-loop calibration of a zone-based stochastic fish model";

  py::register_exception<OutOfArenaError>(m, "OutOfArenaError");
  py::register_exception<BinMismatchError>(m, "BinMismatchError");
  py::register_exception<NotNormalisedError>(m, "NotNormalisedError");
  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<CorruptLogError>(m, "CorruptLogError");

  py::class_<Vec2>(m, "Vec2")
      .def(py::init<double, double>(), py::arg("x"), py::arg("y"))
      .def_readwrite("x", &Vec2::x)
      .def_readwrite("y", &Vec2::y)
      .def("__repr__", [](const Vec2& v) {
        return "Vec2(" + std::to_string(v.x) + ", " + std::to_string(v.y) + ")";
      });

  py::enum_<Zone>(m, "Zone")
      .value("Wall", Zone::Wall)
      .value("RoomCenter", Zone::RoomCenter)
      .value("Corridor", Zone::Corridor);

  py::class_<ArenaGeometry>(m, "ArenaGeometry")
      .def_readonly("wall_band_mm", &ArenaGeometry::wall_band_mm);

  m.def("canonical_geometry", &canonical_geometry);
  m.def(
      "geometry_from_json",
      [](const std::string& text) {
        return geometry_from_json(nlohmann::json::parse(text));
      },
      py::arg("json_text"));
  m.def(
      "classify_zone",
      [](double x, double y, const ArenaGeometry& g) {
        return classify_zone({x, y}, g);
      },
      py::arg("x"), py::arg("y"), py::arg("geometry"));
  m.def(
      "nearest_wall_distance",
      [](double x, double y, const ArenaGeometry& g) {
        return nearest_wall_distance({x, y}, g);
      },
      py::arg("x"), py::arg("y"), py::arg("geometry"));
  m.def(
      "zone_of_probe",
      [](double x, double y, double heading, double d_probe,
         const ArenaGeometry& g) {
        return zone_of_probe({x, y}, heading, d_probe, g);
      },
      py::arg("x"), py::arg("y"), py::arg("heading"), py::arg("d_probe"),
      py::arg("geometry"));
  m.def("von_mises_density", &von_mises_density, py::arg("theta"),
        py::arg("mu"), py::arg("kappa"));

  m.def("genome_lower_bounds", [] {
    const Genome g = genome_lower_bounds();
    return std::vector<double>(g.begin(), g.end());
  });
  m.def("genome_upper_bounds", [] {
    const Genome g = genome_upper_bounds();
    return std::vector<double>(g.begin(), g.end());
  });
  m.def("default_ground_truth_genome", [] {
    const Genome g = lab::default_ground_truth_genome();
    return std::vector<double>(g.begin(), g.end());
  });

  py::class_<SimilarityReport>(m, "SimilarityReport")
      .def_readonly("I_D", &SimilarityReport::I_D)
      .def_readonly("I_W", &SimilarityReport::I_W)
      .def_readonly("I_O", &SimilarityReport::I_O)
      .def_readonly("I_T", &SimilarityReport::I_T)
      .def_readonly("S", &SimilarityReport::S);

  py::class_<BehaviorStats>(m, "BehaviorStats")
      .def("to_json", [](const BehaviorStats& s) { return stats_to_json(s).dump(); });

  m.def("hellinger", &hellinger, py::arg("p"), py::arg("q"));
  m.def("similarity", &similarity, py::arg("a"), py::arg("b"));
  m.def("aggregate_score", &aggregate_score, py::arg("i_d"), py::arg("i_w"),
        py::arg("i_o"), py::arg("i_t"));

  m.def(
      "simulate_csv",
      [](const std::vector<double>& genome, int agents, double seconds,
         double dt, std::uint64_t seed, const std::string& out_csv) {
        const ArenaGeometry arena = canonical_geometry();
        const SpeedDistribution speeds = SpeedDistribution::default_profile();
        const TrajectoryBatch batch = simulate_batch(
            to_genome(genome), agents, seconds, dt, arena, speeds, seed);
        std::ofstream out(out_csv);
        write_trajectory_csv(out, batch);
        return static_cast<int>(batch.frames.size());
      },
      py::arg("genome"), py::arg("agents"), py::arg("seconds"), py::arg("dt"),
      py::arg("seed"), py::arg("out_csv"),
      "Simulate identical agents and write the trajectory CSV; returns the "
      "frame count.");

  m.def(
      "stats_from_csv",
      [](const std::string& csv_path, bool include_robot) {
        std::ifstream in(csv_path);
        if (!in) throw ConfigError("cannot open '" + csv_path + "'");
        const TrajectoryBatch batch = read_trajectory_csv(in);
        return compute_stats(batch, canonical_geometry(), include_robot);
      },
      py::arg("csv_path"), py::arg("include_robot") = true);

  m.def(
      "evaluate_genome",
      [](const std::vector<double>& genome, const BehaviorStats& target,
         double sim_seconds, int n_agents, std::uint64_t seed) {
        const ArenaGeometry arena = canonical_geometry();
        const SpeedDistribution speeds = SpeedDistribution::default_profile();
        EvalContext ctx;
        ctx.arena = &arena;
        ctx.speeds = &speeds;
        ctx.sim_seconds = sim_seconds;
        ctx.n_agents = n_agents;
        const Evaluation e = evaluate_genome(to_genome(genome), target, ctx, seed);
        return py::make_tuple(e.performance,
                              std::vector<double>(e.feature_scores.begin(),
                                                  e.feature_scores.end()));
      },
      py::arg("genome"), py::arg("target"), py::arg("sim_seconds") = 120.0,
      py::arg("n_agents") = 5, py::arg("seed") = 1);

  py::class_<lab::RoundRecord>(m, "RoundRecord")
      .def_readonly("round", &lab::RoundRecord::round)
      .def_readonly("t_start_s", &lab::RoundRecord::t_start_s)
      .def_readonly("integration", &lab::RoundRecord::integration)
      .def_readonly("best_S", &lab::RoundRecord::best_S)
      .def_readonly("generations_done", &lab::RoundRecord::generations_done);

  py::class_<lab::RunSummary>(m, "RunSummary")
      .def_readonly("batches_published", &lab::RunSummary::batches_published)
      .def_readonly("windows_scored", &lab::RunSummary::windows_scored)
      .def_readonly("rounds_completed", &lab::RunSummary::rounds_completed)
      .def_readonly("params_applied", &lab::RunSummary::params_applied)
      .def_readonly("records", &lab::RunSummary::records);

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& out_dir) {
        const lab::ExperimentConfig cfg =
            lab::config_from_json(nlohmann::json::parse(config_json));
        py::gil_scoped_release release;
        return lab::run_experiment(cfg, out_dir);
      },
      py::arg("config_json"), py::arg("out_dir"),
      "Run the full closed-loop experiment from a config JSON string.");

  m.def(
      "replay",
      [](const std::string& experiment_dir, const std::string& series_csv) {
        return lab::replay(experiment_dir, series_csv.empty()
                                               ? std::filesystem::path()
                                               : std::filesystem::path(series_csv));
      },
      py::arg("experiment_dir"), py::arg("series_csv") = std::string());

  m.def("default_config_json", [] {
    return lab::config_to_json(lab::ExperimentConfig()).dump(2);
  });
}
