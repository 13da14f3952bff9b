#pragma once

#include <cmath>

namespace csr {

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct Segment {
  Point a;
  Point b;

  friend bool operator==(const Segment&, const Segment&) = default;
};

// Axis-aligned rectangle, closed on all sides.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  bool contains(Point p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  Point center() const { return {(x0 + x1) / 2.0, (y0 + y1) / 2.0}; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

namespace detail {

inline int orientation(Point p, Point q, Point r) {
  const double v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
  constexpr double kEps = 1e-12;
  if (v > kEps) return 1;
  if (v < -kEps) return -1;
  return 0;
}

}  // namespace detail

// True when the two segments cross at a single interior point of both.
// Touching at an endpoint, or running collinear, is not a crossing.
inline bool segments_cross(const Segment& s, const Segment& t) {
  const int o1 = detail::orientation(s.a, s.b, t.a);
  const int o2 = detail::orientation(s.a, s.b, t.b);
  const int o3 = detail::orientation(t.a, t.b, s.a);
  const int o4 = detail::orientation(t.a, t.b, s.b);
  return o1 * o2 < 0 && o3 * o4 < 0;
}

}  // namespace csr
