#pragma once

#include <algorithm>
#include <cmath>

namespace fishcal {

inline constexpr double kPi = 3.14159265358979323846;

/// Wrap an angle to [-pi, pi).
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// Smallest absolute difference between two angles, in [0, pi].
inline double angle_distance(double a, double b) {
  double d = std::fabs(wrap_angle(a - b));
  return d;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double dot(const Vec2& o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline double distance(const Vec2& a, const Vec2& b) { return (a - b).norm(); }

/// Bearing of b as seen from a, in [-pi, pi).
inline double bearing(const Vec2& a, const Vec2& b) {
  return std::atan2(b.y - a.y, b.x - a.x);
}

inline Vec2 unit_vector(double angle) { return {std::cos(angle), std::sin(angle)}; }

/// Axis-aligned rectangle, corners (x0,y0) and (x1,y1) with x0<x1, y0<y1.
struct Rect {
  double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(const Vec2& p) const {
    return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
  }
  bool contains_open(const Vec2& p) const {
    return p.x > x0 && p.x < x1 && p.y > y0 && p.y < y1;
  }
};

/// Line segment with the inward normal of the region it bounds.
struct Segment {
  Vec2 a, b;
  Vec2 inward;  // unit normal pointing into the water region

  Vec2 closest_point(const Vec2& p) const {
    const Vec2 ab = b - a;
    const double len2 = ab.dot(ab);
    if (len2 == 0.0) return a;
    double t = (p - a).dot(ab) / len2;
    t = std::clamp(t, 0.0, 1.0);
    return a + ab * t;
  }

  double distance_to(const Vec2& p) const { return distance(p, closest_point(p)); }

  double direction() const { return std::atan2(b.y - a.y, b.x - a.x); }
};

}  // namespace fishcal
