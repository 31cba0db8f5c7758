#include "fishcal/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fishcal/errors.hpp"

namespace fishcal {

namespace {

struct GridTables {
  std::array<double, kAngleGridSize> cos_t{}, sin_t{};
  GridTables() {
    for (int k = 0; k < kAngleGridSize; ++k) {
      const double a = DirectionPdf::angle_at(k);
      cos_t[k] = std::cos(a);
      sin_t[k] = std::sin(a);
    }
  }
};

const GridTables& grid() {
  static const GridTables t;
  return t;
}

// dens[k] += weight * vM(theta_k; mu, kappa) over the whole grid.
void accumulate_von_mises(std::array<double, kAngleGridSize>& dens, double weight,
                          double mu, double kappa) {
  if (weight <= 0.0) return;
  const auto& t = grid();
  const double cm = std::cos(mu);
  const double sm = std::sin(mu);
  const double scale = weight / (2.0 * kPi * bessel_i0(kappa));
  for (int k = 0; k < kAngleGridSize; ++k) {
    dens[k] += scale * std::exp(kappa * (t.cos_t[k] * cm + t.sin_t[k] * sm));
  }
}

Zone probe_zone(const Vec2& p, const Vec2& dir, double d_probe,
                const ArenaGeometry& g) {
  const Vec2 target = p + dir * d_probe;
  if (in_water(target, g)) return classify_zone(target, g);
  Vec2 last = p;
  const int steps = static_cast<int>(std::ceil(d_probe));
  for (int i = 1; i <= steps; ++i) {
    const double t = std::min(static_cast<double>(i), d_probe);
    const Vec2 q = p + dir * t;
    if (in_water(q, g)) last = q;
  }
  return classify_zone(last, g);
}

}  // namespace

ModelParams ModelParams::from_genome(const Genome& g) {
  ModelParams p;
  for (int z = 0; z < kZoneCount; ++z) {
    p.per_zone[z].kappa0 = g[4 * z + 0];
    p.per_zone[z].kappa_wall = g[4 * z + 1];
    p.per_zone[z].kappa_fish = g[4 * z + 2];
    p.per_zone[z].alpha = g[4 * z + 3];
  }
  int i = 12;
  for (int from = 0; from < 3; ++from) {
    for (int to = 0; to < 3; ++to) {
      p.gamma[from][to] = (from == to) ? 1.0 : g[i++];
    }
  }
  return p;
}

Genome ModelParams::to_genome() const {
  Genome g{};
  for (int z = 0; z < kZoneCount; ++z) {
    g[4 * z + 0] = per_zone[z].kappa0;
    g[4 * z + 1] = per_zone[z].kappa_wall;
    g[4 * z + 2] = per_zone[z].kappa_fish;
    g[4 * z + 3] = per_zone[z].alpha;
  }
  int i = 12;
  for (int from = 0; from < 3; ++from)
    for (int to = 0; to < 3; ++to)
      if (from != to) g[i++] = gamma[from][to];
  return g;
}

Genome genome_lower_bounds() {
  Genome g{};
  g.fill(0.0);
  return g;
}

Genome genome_upper_bounds() {
  Genome g{};
  for (int z = 0; z < kZoneCount; ++z) {
    g[4 * z + 0] = 20.0;
    g[4 * z + 1] = 20.0;
    g[4 * z + 2] = 20.0;
    g[4 * z + 3] = 1.0;
  }
  for (int i = 12; i < kGenomeSize; ++i) g[i] = 5.0;
  return g;
}

bool genome_in_bounds(const Genome& g) {
  const Genome lo = genome_lower_bounds();
  const Genome hi = genome_upper_bounds();
  for (int i = 0; i < kGenomeSize; ++i)
    if (!(g[i] >= lo[i] && g[i] <= hi[i])) return false;
  return true;
}

Genome clamp_genome(Genome g) {
  const Genome lo = genome_lower_bounds();
  const Genome hi = genome_upper_bounds();
  for (int i = 0; i < kGenomeSize; ++i) g[i] = std::clamp(g[i], lo[i], hi[i]);
  return g;
}

Genome random_genome(Rng& rng) {
  const Genome lo = genome_lower_bounds();
  const Genome hi = genome_upper_bounds();
  Genome g{};
  for (int i = 0; i < kGenomeSize; ++i) g[i] = rng.uniform(lo[i], hi[i]);
  return g;
}

void SpeedDistribution::validate() const {
  if (bin_edges.size() < 2 || frequencies.size() + 1 != bin_edges.size())
    throw ConfigError("speed distribution bin/edge sizes inconsistent");
  for (std::size_t i = 1; i < bin_edges.size(); ++i)
    if (!(bin_edges[i] > bin_edges[i - 1]))
      throw ConfigError("speed distribution bin edges must strictly increase");
  double sum = 0.0;
  for (double f : frequencies) {
    if (f < 0.0) throw ConfigError("speed distribution frequencies must be >= 0");
    sum += f;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw ConfigError("speed distribution frequencies must sum to 1");
}

SpeedDistribution SpeedDistribution::default_profile() {
  SpeedDistribution d;
  d.bin_edges.resize(13);
  for (int i = 0; i <= 12; ++i) d.bin_edges[i] = 10.0 * i;
  d.frequencies = {0.01, 0.02, 0.04, 0.07, 0.10, 0.15,
                   0.15, 0.12, 0.10, 0.10, 0.08, 0.06};
  d.validate();
  return d;
}

SpeedDistribution SpeedDistribution::from_json(const nlohmann::json& j) {
  if (j.is_null() || j.empty()) return default_profile();
  SpeedDistribution d;
  d.bin_edges = j.at("bin_edges").get<std::vector<double>>();
  d.frequencies = j.at("frequencies").get<std::vector<double>>();
  d.validate();
  return d;
}

nlohmann::json SpeedDistribution::to_json() const {
  return {{"bin_edges", bin_edges}, {"frequencies", frequencies}};
}

double DirectionPdf::trapezoid_integral() const {
  // Periodic grid: the [-pi,pi] trapezoid sum reduces to step * sum(density).
  double s = 0.0;
  for (double v : density) s += v;
  return s * grid_step();
}

double bessel_i0(double x) {
  const double q = 0.25 * x * x;
  double term = 1.0;
  double sum = 1.0;
  for (int k = 1; k < 1000; ++k) {
    term *= q / (static_cast<double>(k) * static_cast<double>(k));
    sum += term;
    if (term < sum * 1e-17) break;
  }
  return sum;
}

double von_mises_density(double theta, double mu, double kappa) {
  return std::exp(kappa * std::cos(theta - mu)) / (2.0 * kPi * bessel_i0(kappa));
}

DirectionPdf direction_pdf(const AgentState& self,
                           std::span<const AgentState> others,
                           const ModelParams& params, const ArenaGeometry& g) {
  const Zone z = classify_zone(self.position, g);
  const ZoneParams& p = params.per_zone[static_cast<int>(z)];

  DirectionPdf pdf;
  auto& dens = pdf.density;

  // Wall mixture: wall-parallel component fades with wall distance.
  const Segment& wall = nearest_wall(self.position, g);
  const double d = wall.distance_to(self.position);
  const double w = std::exp(-d / kWallDecayMm);
  const double seg_dir = wall.direction();
  const double mu_wall =
      angle_distance(seg_dir, self.heading) <= angle_distance(seg_dir + kPi, self.heading)
          ? wrap_angle(seg_dir)
          : wrap_angle(seg_dir + kPi);
  accumulate_von_mises(dens, p.alpha * w, mu_wall, p.kappa_wall);
  accumulate_von_mises(dens, p.alpha * (1.0 - w), self.heading, p.kappa0);

  // Social mixture: one component per neighbour, equal weights.
  if (others.empty()) {
    accumulate_von_mises(dens, 1.0 - p.alpha, self.heading, p.kappa0);
  } else {
    const double wn = (1.0 - p.alpha) / static_cast<double>(others.size());
    for (const auto& other : others) {
      accumulate_von_mises(dens, wn, bearing(self.position, other.position),
                           p.kappa_fish);
    }
  }

  // Zone-attraction modulation: weight each candidate direction by gamma
  // towards the zone 50 mm ahead.
  const auto& row = params.gamma[static_cast<int>(z)];
  if (!(row[0] == 1.0 && row[1] == 1.0 && row[2] == 1.0)) {
    const auto& t = grid();
    for (int k = 0; k < kAngleGridSize; ++k) {
      const Zone target =
          probe_zone(self.position, {t.cos_t[k], t.sin_t[k]}, kProbeDistanceMm, g);
      dens[k] *= row[static_cast<int>(target)];
    }
  }

  const double integral = pdf.trapezoid_integral();
  if (integral <= 0.0) {
    // Only reachable when gamma zeroes every direction (degenerate layouts).
    dens.fill(1.0 / (2.0 * kPi));
    return pdf;
  }
  const double inv = 1.0 / integral;
  for (auto& v : dens) v *= inv;
  return pdf;
}

DirectionCdf cdf_from_pdf(const DirectionPdf& pdf) {
  DirectionCdf cdf;
  const double step = DirectionPdf::grid_step();
  cdf.values[0] = 0.0;
  for (int k = 1; k <= kAngleGridSize; ++k) {
    const double f_prev = pdf.density[k - 1];
    const double f_here =
        (k == kAngleGridSize) ? pdf.density[0] : pdf.density[k];
    cdf.values[k] = cdf.values[k - 1] + 0.5 * step * (f_prev + f_here);
  }
  return cdf;
}

double sample_direction(const DirectionCdf& cdf, double u) {
  const auto& c = cdf.values;
  if (u <= 0.0) return -kPi;
  const double target = std::min(u, c.back());
  const auto it = std::lower_bound(c.begin(), c.end(), target);
  const int hi = static_cast<int>(it - c.begin());
  const int lo = hi - 1;
  const double denom = c[hi] - c[lo];
  const double frac = denom > 0.0 ? (target - c[lo]) / denom : 1.0;
  const double step = DirectionPdf::grid_step();
  double angle = -kPi + step * (static_cast<double>(lo) + frac);
  if (angle >= kPi) angle = -kPi;  // -pi and pi are the same direction
  return angle;
}

double draw_speed(const SpeedDistribution& dist, double u1, double u2) {
  const std::size_t n = dist.frequencies.size();
  double cum = 0.0;
  std::size_t idx = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    cum += dist.frequencies[i];
    if (u1 < cum) {
      idx = i;
      break;
    }
  }
  const double lo = dist.bin_edges[idx];
  const double hi = dist.bin_edges[idx + 1];
  return lo + u2 * (hi - lo);
}

Vec2 advance_position(const Vec2& x, double theta, double speed, double dt) {
  return x + unit_vector(theta) * (speed * dt);
}

AgentState step_agent(const AgentState& self, std::span<const AgentState> others,
                      const ModelParams& params, const SpeedDistribution& dist,
                      const ArenaGeometry& g, double dt, Rng& rng) {
  const DirectionPdf pdf = direction_pdf(self, others, params, g);
  const DirectionCdf cdf = cdf_from_pdf(pdf);

  double theta = 0.0;
  double speed = 0.0;
  Vec2 next;
  bool inside = false;
  for (int attempt = 0; attempt < 11 && !inside; ++attempt) {  // 1 draw + 10 redraws
    theta = sample_direction(cdf, rng.uniform());
    speed = draw_speed(dist, rng.uniform(), rng.uniform());
    next = advance_position(self.position, theta, speed, dt);
    inside = in_water(next, g);
  }
  if (!inside) {
    // Project the attempted position onto the boundary, 1 mm inward.
    double best = std::numeric_limits<double>::infinity();
    Vec2 bp;
    Vec2 inward{0.0, 0.0};
    for (const auto& s : g.walls) {
      const Vec2 q = s.closest_point(next);
      const double dq = distance(next, q);
      if (dq < best) {
        best = dq;
        bp = q;
        inward = s.inward;
      }
    }
    next = bp + inward * 1.0;
    if (!in_water(next, g)) next = self.position;  // outside corner; stay put
  }
  return {next, theta, speed, self.is_robot};
}

}  // namespace fishcal
