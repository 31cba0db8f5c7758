#pragma once

#include <array>
#include <span>
#include <vector>

#include "fishcal/arena.hpp"
#include "fishcal/geometry.hpp"
#include "fishcal/rng.hpp"

#include "json.hpp"

namespace fishcal {

struct AgentState {
  Vec2 position;          // mm
  double heading = 0.0;   // rad, in [-pi, pi)
  double speed = 0.0;     // mm/s
  bool is_robot = false;
};

/// Per-zone mixture parameters: persistence, wall following, social response
/// and the wall-vs-social weight.
struct ZoneParams {
  double kappa0 = 0.0;      // concentration on the current heading
  double kappa_wall = 0.0;  // concentration on the wall-parallel direction
  double kappa_fish = 0.0;  // concentration on neighbour bearings
  double alpha = 0.5;       // weight of the wall mixture, in [0,1]
};

inline constexpr int kGenomeSize = 18;
using Genome = std::array<double, kGenomeSize>;

/// Full parameter set: three ZoneParams plus the 3x3 zone-attraction matrix
/// gamma (diagonal fixed to 1). Genome layout, in order:
///   [Wall.k0, Wall.kw, Wall.kf, Wall.a,
///    Center.k0, Center.kw, Center.kf, Center.a,
///    Corridor.k0, Corridor.kw, Corridor.kf, Corridor.a,
///    gamma(Wall->Center), gamma(Wall->Corridor),
///    gamma(Center->Wall), gamma(Center->Corridor),
///    gamma(Corridor->Wall), gamma(Corridor->Center)]
struct ModelParams {
  std::array<ZoneParams, kZoneCount> per_zone;
  std::array<std::array<double, 3>, 3> gamma = {{{1, 1, 1}, {1, 1, 1}, {1, 1, 1}}};

  static ModelParams from_genome(const Genome& g);
  Genome to_genome() const;
};

Genome genome_lower_bounds();
Genome genome_upper_bounds();
bool genome_in_bounds(const Genome& g);
Genome clamp_genome(Genome g);
Genome random_genome(Rng& rng);

/// Binned instantaneous speed profile; speeds are drawn uniformly within the
/// selected bin. Not part of the genome.
struct SpeedDistribution {
  std::vector<double> bin_edges;    // size n+1, strictly increasing, mm/s
  std::vector<double> frequencies;  // size n, sums to 1

  void validate() const;  // throws ConfigError
  static SpeedDistribution default_profile();
  static SpeedDistribution from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

inline constexpr int kAngleGridSize = 360;

/// Direction PDF tabulated on K equally spaced angles over [-pi, pi);
/// normalised so the periodic trapezoidal integral is 1.
struct DirectionPdf {
  std::array<double, kAngleGridSize> density{};

  static double angle_at(int k) {
    return -kPi + 2.0 * kPi * static_cast<double>(k) / kAngleGridSize;
  }
  static double grid_step() { return 2.0 * kPi / kAngleGridSize; }
  double trapezoid_integral() const;
};

/// Grid CDF over [-pi, pi]; values[0] = 0 at -pi, values[K] ~ 1 at pi.
struct DirectionCdf {
  std::array<double, kAngleGridSize + 1> values{};
};

/// Modified Bessel function of order zero, power series, relative error
/// below 1e-12 over the supported concentration range.
double bessel_i0(double x);

/// exp(kappa*cos(theta-mu)) / (2*pi*I0(kappa)).
double von_mises_density(double theta, double mu, double kappa);

inline constexpr double kWallDecayMm = 50.0;      // wall-influence decay length
inline constexpr double kProbeDistanceMm = 50.0;  // gamma look-ahead distance

/// Zone-dependent mixture of von Mises components: wall following blended
/// with heading persistence by exp(-d/50mm), neighbour bearings averaged, the
/// two mixed by alpha, then modulated by gamma towards the zone 50 mm ahead
/// of each candidate direction and renormalised.
DirectionPdf direction_pdf(const AgentState& self,
                           std::span<const AgentState> others,
                           const ModelParams& params, const ArenaGeometry& g);

DirectionCdf cdf_from_pdf(const DirectionPdf& pdf);

/// Inverse-transform draw: linear interpolation of the inverse CDF at u.
double sample_direction(const DirectionCdf& cdf, double u);

/// Bin selected by u1 against cumulative frequencies, uniform within by u2.
double draw_speed(const SpeedDistribution& dist, double u1, double u2);

/// Position update X' = X + v*(cos theta, sin theta)*dt.
Vec2 advance_position(const Vec2& x, double theta, double speed, double dt);

/// One model step: draw a direction by inverse-transform sampling of the
/// direction PDF, draw a speed, update the position. Redraws up to 10 times
/// if the step would exit the water region, then projects to 1 mm inside the
/// nearest boundary.
AgentState step_agent(const AgentState& self, std::span<const AgentState> others,
                      const ModelParams& params, const SpeedDistribution& dist,
                      const ArenaGeometry& g, double dt, Rng& rng);

}  // namespace fishcal
