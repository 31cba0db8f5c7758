#pragma once

#include <string>
#include <vector>

#include "fishcal/geometry.hpp"

#include "json.hpp"

namespace fishcal {

/// Behavioural zone of the arena. Values index parameter tables.
enum class Zone : int { Wall = 0, RoomCenter = 1, Corridor = 2 };

inline constexpr int kZoneCount = 3;

const char* zone_name(Zone z);

/// Two-rooms-plus-corridor water region. All lengths in mm.
/// The corridor rectangle must overlap each room by a positive area so the
/// region is connected; points in the overlap strips classify as Corridor.
struct ArenaGeometry {
  Rect room_a;
  Rect room_b;
  Rect corridor;
  double wall_band_mm = 30.0;

  /// Solid boundary segments of the union polygon (corridor openings are not
  /// walls). Built by make_geometry.
  std::vector<Segment> walls;
};

/// Assembles a geometry, validates its invariants and precomputes the wall
/// segments. Throws ConfigError on an invalid layout.
ArenaGeometry make_geometry(const Rect& room_a, const Rect& room_b,
                            const Rect& corridor, double wall_band_mm);

/// Default layout: two 350x350 rooms joined by a 380x100 corridor, each side
/// of the corridor reaching 40 mm into a room, total extent 1000 mm.
ArenaGeometry canonical_geometry();

/// Reads roomA/roomB/corridor as [x0,y0,x1,y1] plus wall_band_mm. Missing
/// object means the canonical layout.
ArenaGeometry geometry_from_json(const nlohmann::json& j);
nlohmann::json geometry_to_json(const ArenaGeometry& g);

bool in_water(const Vec2& p, const ArenaGeometry& g);

/// Zone of an in-region point. Throws OutOfArenaError otherwise.
Zone classify_zone(const Vec2& p, const ArenaGeometry& g);

/// Euclidean distance to the nearest solid wall segment.
/// Throws OutOfArenaError if p is outside the water region.
double nearest_wall_distance(const Vec2& p, const ArenaGeometry& g);

/// Nearest solid wall segment (ties broken by segment order).
const Segment& nearest_wall(const Vec2& p, const ArenaGeometry& g);

/// Zone of the point d_probe ahead of p along `heading`. If the probe exits
/// the water region, the last in-region sample along the segment decides
/// (1 mm stepping), so a target zone is always defined.
Zone zone_of_probe(const Vec2& p, double heading, double d_probe,
                   const ArenaGeometry& g);

/// Uniform point in the water region (rejection sampling off the bounding
/// box). Declared here so every consumer draws identically.
template <typename RngT>
Vec2 random_point_in_region(RngT& rng, const ArenaGeometry& g) {
  const double x0 = std::min({g.room_a.x0, g.room_b.x0, g.corridor.x0});
  const double x1 = std::max({g.room_a.x1, g.room_b.x1, g.corridor.x1});
  const double y0 = std::min({g.room_a.y0, g.room_b.y0, g.corridor.y0});
  const double y1 = std::max({g.room_a.y1, g.room_b.y1, g.corridor.y1});
  for (;;) {
    const Vec2 p{rng.uniform(x0, x1), rng.uniform(y0, y1)};
    if (in_water(p, g)) return p;
  }
}

}  // namespace fishcal
