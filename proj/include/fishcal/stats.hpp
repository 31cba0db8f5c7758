#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "fishcal/arena.hpp"
#include "fishcal/geometry.hpp"

#include "json.hpp"

namespace fishcal {

/// Normalised histogram; `empty` marks a histogram that received no samples
/// (its values are all zero and carry no information).
struct Histogram {
  std::vector<double> values;
  bool empty = true;
};

inline constexpr int kDistBins = 30;
inline constexpr double kDistRangeMm = 1000.0;
inline constexpr int kWallBins = 20;
inline constexpr double kWallRangeMm = 200.0;  // last bin open-ended
inline constexpr int kTransitionBins = kZoneCount * kZoneCount;

/// One tracked frame: positions (and robot flags) for every agent.
struct TrajectoryFrame {
  double t_s = 0.0;
  std::vector<Vec2> positions;
  std::vector<std::uint8_t> robot_flags;
};

/// Time-ordered frames at a constant period with a constant agent count.
struct TrajectoryBatch {
  std::vector<TrajectoryFrame> frames;
  double frame_period_s = 0.2;

  void validate() const;  // throws EmptyBatchError / ConfigError
};

/// The four per-window histogram families: inter-individual distances (D) and
/// nearest-wall distances (W) per zone, zone occupation (O) and flattened
/// zone transitions (T), plus the occupancy weights used for aggregation.
struct BehaviorStats {
  std::array<Histogram, kZoneCount> dist_by_zone;
  std::array<Histogram, kZoneCount> wall_by_zone;
  Histogram occupation;
  Histogram transitions;
  std::array<double, kZoneCount> zone_weights{};
};

struct SimilarityReport {
  double I_D = 0.0;
  double I_W = 0.0;
  double I_O = 0.0;
  double I_T = 0.0;
  double S = 0.0;
};

/// Hellinger distance between two normalised histograms, in [0, 1].
/// Throws BinMismatchError / NotNormalisedError.
double hellinger(const std::vector<double>& p, const std::vector<double>& q);

/// Per-frame zone occupation, nearest-wall and pairwise-distance histograms
/// plus consecutive-frame zone transitions. include_robot=false drops
/// robot-flagged agents (Control case).
BehaviorStats compute_stats(const TrajectoryBatch& batch, const ArenaGeometry& g,
                            bool include_robot);

/// Fourth root of the product of the four feature similarities.
double aggregate_score(double i_d, double i_w, double i_o, double i_t);

/// Feature similarities 1-H between matching histograms; D and W aggregate
/// over zones weighted by b's occupancy. S is their geometric mean.
SimilarityReport similarity(const BehaviorStats& a, const BehaviorStats& b);

// -- serialisation ----------------------------------------------------------

/// CSV header `t_s,agent_id,x_mm,y_mm,is_robot`, one row per agent per frame.
void write_trajectory_csv(std::ostream& out, const TrajectoryBatch& batch);
TrajectoryBatch read_trajectory_csv(std::istream& in);

nlohmann::ordered_json stats_to_json(const BehaviorStats& s);
BehaviorStats stats_from_json(const nlohmann::json& j);
nlohmann::ordered_json similarity_to_json(const SimilarityReport& r);
SimilarityReport similarity_from_json(const nlohmann::json& j);

}  // namespace fishcal
