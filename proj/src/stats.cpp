#include "fishcal/stats.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "fishcal/errors.hpp"

namespace fishcal {

namespace {

constexpr double kNormTolerance = 1e-6;

Histogram normalise(std::vector<double> counts) {
  Histogram h;
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) {
    h.values.assign(counts.size(), 0.0);
    h.empty = true;
    return h;
  }
  for (auto& c : counts) c /= total;
  h.values = std::move(counts);
  h.empty = false;
  return h;
}

int dist_bin(double d) {
  const double width = kDistRangeMm / kDistBins;
  int idx = static_cast<int>(d / width);
  return std::clamp(idx, 0, kDistBins - 1);
}

int wall_bin(double d) {
  const double width = kWallRangeMm / kWallBins;
  int idx = static_cast<int>(d / width);
  return std::clamp(idx, 0, kWallBins - 1);  // last bin open-ended
}

std::string format_double(double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double parse_double(const std::string& s, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw CorruptLogError(std::string("bad ") + what + " field: '" + s + "'");
  return v;
}

}  // namespace

void TrajectoryBatch::validate() const {
  if (frames.empty()) throw EmptyBatchError("trajectory batch has no frames");
  const std::size_t n = frames.front().positions.size();
  for (const auto& f : frames) {
    if (f.positions.size() != n || f.robot_flags.size() != n)
      throw ConfigError("agent count varies across frames");
  }
  for (std::size_t i = 1; i < frames.size(); ++i) {
    const double dt = frames[i].t_s - frames[i - 1].t_s;
    if (dt <= 0.0) throw ConfigError("timestamps must strictly increase");
    if (std::fabs(dt - frame_period_s) > 1e-6)
      throw ConfigError("frame period is not constant");
  }
}

double hellinger(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size())
    throw BinMismatchError("histograms have different bin counts");
  double sp = 0.0, sq = 0.0;
  for (double v : p) sp += v;
  for (double v : q) sq += v;
  if (std::fabs(sp - 1.0) > kNormTolerance || std::fabs(sq - 1.0) > kNormTolerance)
    throw NotNormalisedError("histograms must sum to 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::sqrt(p[i]) - std::sqrt(q[i]);
    acc += d * d;
  }
  return std::clamp(std::sqrt(acc) / std::sqrt(2.0), 0.0, 1.0);
}

BehaviorStats compute_stats(const TrajectoryBatch& batch, const ArenaGeometry& g,
                            bool include_robot) {
  batch.validate();

  std::array<std::vector<double>, kZoneCount> d_counts;
  std::array<std::vector<double>, kZoneCount> w_counts;
  for (auto& v : d_counts) v.assign(kDistBins, 0.0);
  for (auto& v : w_counts) v.assign(kWallBins, 0.0);
  std::vector<double> o_counts(kZoneCount, 0.0);
  std::vector<double> t_counts(kTransitionBins, 0.0);

  const std::size_t n = batch.frames.front().positions.size();
  std::vector<int> prev_zone(n, -1);  // -1: not considered in previous frame
  std::vector<int> cur_zone(n, -1);
  std::vector<std::size_t> considered;
  considered.reserve(n);

  for (const auto& frame : batch.frames) {
    considered.clear();
    std::fill(cur_zone.begin(), cur_zone.end(), -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (!include_robot && frame.robot_flags[i]) continue;
      considered.push_back(i);
    }

    for (std::size_t i : considered) {
      const Vec2& p = frame.positions[i];
      const Zone z = classify_zone(p, g);
      const int zi = static_cast<int>(z);
      cur_zone[i] = zi;
      o_counts[zi] += 1.0;
      w_counts[zi][wall_bin(nearest_wall_distance(p, g))] += 1.0;
    }

    // Pairwise distances; the first agent of the pair picks the zone.
    for (std::size_t a = 0; a < considered.size(); ++a) {
      for (std::size_t b = a + 1; b < considered.size(); ++b) {
        const std::size_t i = considered[a];
        const std::size_t j = considered[b];
        const double d = distance(frame.positions[i], frame.positions[j]);
        d_counts[cur_zone[i]][dist_bin(d)] += 1.0;
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      if (prev_zone[i] >= 0 && cur_zone[i] >= 0)
        t_counts[prev_zone[i] * kZoneCount + cur_zone[i]] += 1.0;
    }
    prev_zone = cur_zone;
  }

  BehaviorStats s;
  for (int z = 0; z < kZoneCount; ++z) {
    s.dist_by_zone[z] = normalise(std::move(d_counts[z]));
    s.wall_by_zone[z] = normalise(std::move(w_counts[z]));
  }
  double o_total = 0.0;
  for (double c : o_counts) o_total += c;
  for (int z = 0; z < kZoneCount; ++z)
    s.zone_weights[z] = o_total > 0.0 ? o_counts[z] / o_total : 0.0;
  s.occupation = normalise(std::move(o_counts));
  s.transitions = normalise(std::move(t_counts));
  return s;
}

double aggregate_score(double i_d, double i_w, double i_o, double i_t) {
  return std::pow(i_d * i_w * i_o * i_t, 0.25);
}

namespace {

// Occupancy-weighted mean of 1-H over zones. Zones empty on both sides are
// skipped; a zone empty on one side only scores 0.
double zone_feature(const std::array<Histogram, kZoneCount>& a,
                    const std::array<Histogram, kZoneCount>& b,
                    const std::array<double, kZoneCount>& weights) {
  double wsum = 0.0;
  double contributing = 0;
  std::array<double, kZoneCount> term{};
  std::array<bool, kZoneCount> active{};
  for (int z = 0; z < kZoneCount; ++z) {
    if (a[z].empty && b[z].empty) continue;
    active[z] = true;
    ++contributing;
    term[z] = (!a[z].empty && !b[z].empty)
                  ? 1.0 - hellinger(a[z].values, b[z].values)
                  : 0.0;
    wsum += weights[z];
  }
  if (contributing == 0) return 1.0;  // identically empty on both sides
  double out = 0.0;
  for (int z = 0; z < kZoneCount; ++z) {
    if (!active[z]) continue;
    const double w = wsum > 0.0 ? weights[z] / wsum : 1.0 / contributing;
    out += w * term[z];
  }
  return out;
}

double single_feature(const Histogram& a, const Histogram& b) {
  if (a.empty && b.empty) return 1.0;
  if (a.empty || b.empty) return 0.0;
  return 1.0 - hellinger(a.values, b.values);
}

}  // namespace

SimilarityReport similarity(const BehaviorStats& a, const BehaviorStats& b) {
  SimilarityReport r;
  r.I_D = zone_feature(a.dist_by_zone, b.dist_by_zone, b.zone_weights);
  r.I_W = zone_feature(a.wall_by_zone, b.wall_by_zone, b.zone_weights);
  r.I_O = single_feature(a.occupation, b.occupation);
  r.I_T = single_feature(a.transitions, b.transitions);
  r.S = aggregate_score(r.I_D, r.I_W, r.I_O, r.I_T);
  return r;
}

void write_trajectory_csv(std::ostream& out, const TrajectoryBatch& batch) {
  out << "t_s,agent_id,x_mm,y_mm,is_robot\n";
  for (const auto& f : batch.frames) {
    for (std::size_t i = 0; i < f.positions.size(); ++i) {
      out << format_double(f.t_s) << ',' << i << ','
          << format_double(f.positions[i].x) << ','
          << format_double(f.positions[i].y) << ','
          << (f.robot_flags[i] ? 1 : 0) << '\n';
    }
  }
}

TrajectoryBatch read_trajectory_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CorruptLogError("empty trajectory CSV");
  if (line == "t_s,agent_id,x_mm,y_mm,is_robot\r")
    line.pop_back();
  if (line != "t_s,agent_id,x_mm,y_mm,is_robot")
    throw CorruptLogError("unexpected trajectory CSV header: '" + line + "'");

  TrajectoryBatch batch;
  TrajectoryFrame frame;
  bool have_frame = false;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::array<std::string, 5> field;
    std::size_t start = 0;
    for (int f = 0; f < 5; ++f) {
      const std::size_t comma = line.find(',', start);
      if (f < 4 && comma == std::string::npos)
        throw CorruptLogError("trajectory CSV row " + std::to_string(line_no) +
                              " has too few fields");
      field[f] = line.substr(start, comma == std::string::npos
                                        ? std::string::npos
                                        : comma - start);
      start = comma + 1;
    }
    const double t = parse_double(field[0], "t_s");
    const double id = parse_double(field[1], "agent_id");
    const Vec2 p{parse_double(field[2], "x_mm"), parse_double(field[3], "y_mm")};
    const double robot = parse_double(field[4], "is_robot");

    if (!have_frame || t != frame.t_s) {
      if (have_frame) batch.frames.push_back(std::move(frame));
      frame = TrajectoryFrame{};
      frame.t_s = t;
      have_frame = true;
    }
    if (static_cast<std::size_t>(id) != frame.positions.size())
      throw CorruptLogError("agent ids out of order at CSV row " +
                            std::to_string(line_no));
    frame.positions.push_back(p);
    frame.robot_flags.push_back(robot != 0.0 ? 1 : 0);
  }
  if (have_frame) batch.frames.push_back(std::move(frame));
  if (batch.frames.empty()) throw CorruptLogError("trajectory CSV has no rows");
  batch.frame_period_s = batch.frames.size() >= 2
                             ? batch.frames[1].t_s - batch.frames[0].t_s
                             : 0.2;
  batch.validate();
  return batch;
}

namespace {

std::vector<double> linspace_edges(double lo, double hi, int bins) {
  std::vector<double> e(bins + 1);
  for (int i = 0; i <= bins; ++i)
    e[i] = lo + (hi - lo) * static_cast<double>(i) / bins;
  return e;
}

nlohmann::ordered_json histogram_to_json(const Histogram& h) {
  return {{"values", h.values}, {"empty", h.empty}};
}

Histogram histogram_from_json(const nlohmann::json& j) {
  Histogram h;
  h.values = j.at("values").get<std::vector<double>>();
  h.empty = j.at("empty").get<bool>();
  return h;
}

}  // namespace

nlohmann::ordered_json stats_to_json(const BehaviorStats& s) {
  nlohmann::ordered_json j;
  const char* zones[] = {"wall", "room_center", "corridor"};
  nlohmann::ordered_json d, w;
  d["bin_edges"] = linspace_edges(0.0, kDistRangeMm, kDistBins);
  w["bin_edges"] = linspace_edges(0.0, kWallRangeMm, kWallBins);
  w["last_bin_open"] = true;
  for (int z = 0; z < kZoneCount; ++z) {
    d[zones[z]] = histogram_to_json(s.dist_by_zone[z]);
    w[zones[z]] = histogram_to_json(s.wall_by_zone[z]);
  }
  j["D"] = d;
  j["W"] = w;
  j["O"] = histogram_to_json(s.occupation);
  j["O"]["zones"] = {zones[0], zones[1], zones[2]};
  j["T"] = histogram_to_json(s.transitions);
  j["T"]["layout"] = "row-major from->to over (wall,room_center,corridor)";
  j["zone_weights"] = s.zone_weights;
  return j;
}

BehaviorStats stats_from_json(const nlohmann::json& j) {
  BehaviorStats s;
  const char* zones[] = {"wall", "room_center", "corridor"};
  for (int z = 0; z < kZoneCount; ++z) {
    s.dist_by_zone[z] = histogram_from_json(j.at("D").at(zones[z]));
    s.wall_by_zone[z] = histogram_from_json(j.at("W").at(zones[z]));
  }
  s.occupation = histogram_from_json(j.at("O"));
  s.transitions = histogram_from_json(j.at("T"));
  const auto w = j.at("zone_weights").get<std::vector<double>>();
  if (w.size() != kZoneCount) throw MalformedMessageError("bad zone_weights");
  std::copy(w.begin(), w.end(), s.zone_weights.begin());
  return s;
}

nlohmann::ordered_json similarity_to_json(const SimilarityReport& r) {
  return {{"I_D", r.I_D}, {"I_W", r.I_W}, {"I_O", r.I_O}, {"I_T", r.I_T},
          {"S", r.S}};
}

SimilarityReport similarity_from_json(const nlohmann::json& j) {
  SimilarityReport r;
  r.I_D = j.at("I_D").get<double>();
  r.I_W = j.at("I_W").get<double>();
  r.I_O = j.at("I_O").get<double>();
  r.I_T = j.at("I_T").get<double>();
  r.S = j.at("S").get<double>();
  return r;
}

}  // namespace fishcal
