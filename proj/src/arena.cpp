#include "fishcal/arena.hpp"

#include <array>
#include <cmath>
#include <limits>

#include "fishcal/errors.hpp"

namespace fishcal {

namespace {

struct Interval {
  double lo, hi;
};

// Removes the open cover intervals from [lo, hi], returning what is left.
std::vector<Interval> subtract_cover(double lo, double hi,
                                     std::vector<Interval> cover) {
  std::sort(cover.begin(), cover.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  std::vector<Interval> out;
  double cursor = lo;
  for (const auto& c : cover) {
    if (c.hi <= cursor) continue;
    if (c.lo >= hi) break;
    if (c.lo > cursor) out.push_back({cursor, std::min(c.lo, hi)});
    cursor = std::max(cursor, c.hi);
    if (cursor >= hi) break;
  }
  if (cursor < hi) out.push_back({cursor, hi});
  return out;
}

// Edge of `rect` minus the parts lying strictly inside the other rectangles.
// `horizontal` edges run along x at height y; vertical edges run along y at x.
void emit_wall_segments(const Rect& rect, const std::array<Rect, 2>& others,
                        std::vector<Segment>& walls) {
  struct Edge {
    bool horizontal;
    double fixed;    // y for horizontal, x for vertical
    double lo, hi;   // varying coordinate range
    Vec2 inward;
  };
  const std::array<Edge, 4> edges = {{
      {true, rect.y0, rect.x0, rect.x1, {0.0, 1.0}},    // bottom
      {true, rect.y1, rect.x0, rect.x1, {0.0, -1.0}},   // top
      {false, rect.x0, rect.y0, rect.y1, {1.0, 0.0}},   // left
      {false, rect.x1, rect.y0, rect.y1, {-1.0, 0.0}},  // right
  }};

  for (const auto& e : edges) {
    std::vector<Interval> cover;
    for (const auto& o : others) {
      if (e.horizontal) {
        if (e.fixed > o.y0 && e.fixed < o.y1) cover.push_back({o.x0, o.x1});
      } else {
        if (e.fixed > o.x0 && e.fixed < o.x1) cover.push_back({o.y0, o.y1});
      }
    }
    for (const auto& piece : subtract_cover(e.lo, e.hi, cover)) {
      if (piece.hi - piece.lo <= 1e-12) continue;
      Segment s;
      if (e.horizontal) {
        s.a = {piece.lo, e.fixed};
        s.b = {piece.hi, e.fixed};
      } else {
        s.a = {e.fixed, piece.lo};
        s.b = {e.fixed, piece.hi};
      }
      s.inward = e.inward;
      walls.push_back(s);
    }
  }
}

double overlap_area(const Rect& a, const Rect& b) {
  const double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
  const double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
  return (w > 0.0 && h > 0.0) ? w * h : 0.0;
}

}  // namespace

const char* zone_name(Zone z) {
  switch (z) {
    case Zone::Wall: return "wall";
    case Zone::RoomCenter: return "room_center";
    case Zone::Corridor: return "corridor";
  }
  return "?";
}

ArenaGeometry make_geometry(const Rect& room_a, const Rect& room_b,
                            const Rect& corridor, double wall_band_mm) {
  for (const Rect* r : {&room_a, &room_b, &corridor}) {
    if (r->width() <= 0.0 || r->height() <= 0.0)
      throw ConfigError("arena rectangle has non-positive extent");
  }
  if (overlap_area(corridor, room_a) <= 0.0 || overlap_area(corridor, room_b) <= 0.0)
    throw ConfigError("corridor must overlap both rooms by a positive area");
  const double smaller_side =
      std::min({room_a.width(), room_a.height(), room_b.width(), room_b.height()});
  if (wall_band_mm <= 0.0 || wall_band_mm >= 0.5 * smaller_side)
    throw ConfigError("wall_band_mm must lie in (0, half the smaller room side)");

  ArenaGeometry g;
  g.room_a = room_a;
  g.room_b = room_b;
  g.corridor = corridor;
  g.wall_band_mm = wall_band_mm;
  emit_wall_segments(room_a, {room_b, corridor}, g.walls);
  emit_wall_segments(room_b, {room_a, corridor}, g.walls);
  emit_wall_segments(corridor, {room_a, room_b}, g.walls);
  return g;
}

ArenaGeometry canonical_geometry() {
  return make_geometry({0.0, 325.0, 350.0, 675.0}, {650.0, 325.0, 1000.0, 675.0},
                       {310.0, 450.0, 690.0, 550.0}, 30.0);
}

namespace {
Rect rect_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4)
    throw ConfigError("rectangle must be [x0,y0,x1,y1]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
          j[3].get<double>()};
}
}  // namespace

ArenaGeometry geometry_from_json(const nlohmann::json& j) {
  if (j.is_null() || j.empty()) return canonical_geometry();
  const ArenaGeometry def = canonical_geometry();
  const Rect a = j.contains("roomA") ? rect_from_json(j.at("roomA")) : def.room_a;
  const Rect b = j.contains("roomB") ? rect_from_json(j.at("roomB")) : def.room_b;
  const Rect c =
      j.contains("corridor") ? rect_from_json(j.at("corridor")) : def.corridor;
  const double band = j.value("wall_band_mm", def.wall_band_mm);
  return make_geometry(a, b, c, band);
}

nlohmann::json geometry_to_json(const ArenaGeometry& g) {
  auto rect = [](const Rect& r) {
    return nlohmann::json::array({r.x0, r.y0, r.x1, r.y1});
  };
  return {{"roomA", rect(g.room_a)},
          {"roomB", rect(g.room_b)},
          {"corridor", rect(g.corridor)},
          {"wall_band_mm", g.wall_band_mm}};
}

bool in_water(const Vec2& p, const ArenaGeometry& g) {
  return g.room_a.contains(p) || g.room_b.contains(p) || g.corridor.contains(p);
}

Zone classify_zone(const Vec2& p, const ArenaGeometry& g) {
  if (!in_water(p, g))
    throw OutOfArenaError("point (" + std::to_string(p.x) + ", " +
                          std::to_string(p.y) + ") outside water region");
  if (g.corridor.contains(p)) return Zone::Corridor;
  return nearest_wall_distance(p, g) <= g.wall_band_mm ? Zone::Wall
                                                       : Zone::RoomCenter;
}

double nearest_wall_distance(const Vec2& p, const ArenaGeometry& g) {
  return nearest_wall(p, g).distance_to(p);
}

const Segment& nearest_wall(const Vec2& p, const ArenaGeometry& g) {
  if (!in_water(p, g))
    throw OutOfArenaError("point (" + std::to_string(p.x) + ", " +
                          std::to_string(p.y) + ") outside water region");
  double best = std::numeric_limits<double>::infinity();
  const Segment* hit = &g.walls.front();
  for (const auto& s : g.walls) {
    const double d = s.distance_to(p);
    if (d < best) {
      best = d;
      hit = &s;
    }
  }
  return *hit;
}

Zone zone_of_probe(const Vec2& p, double heading, double d_probe,
                   const ArenaGeometry& g) {
  const Vec2 dir = unit_vector(heading);
  const Vec2 target = p + dir * d_probe;
  if (in_water(target, g)) return classify_zone(target, g);

  // 1 mm stepping; keep the last sample still inside the region.
  Vec2 last = p;
  bool found = in_water(p, g);
  const int steps = static_cast<int>(std::ceil(d_probe));
  for (int i = 1; i <= steps; ++i) {
    const double t = std::min(static_cast<double>(i), d_probe);
    const Vec2 q = p + dir * t;
    if (in_water(q, g)) {
      last = q;
      found = true;
    }
  }
  if (!found)
    throw OutOfArenaError("probe origin outside water region");
  return classify_zone(last, g);
}

}  // namespace fishcal
