#include "spgraph/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace spgraph {

double signed_area(const Ring& ring) {
  double a = 0.0;
  const size_t n = ring.size();
  for (size_t i = 0; i < n; ++i) {
    const Point& p = ring[i];
    const Point& q = ring[(i + 1) % n];
    a += p.x * q.y - q.x * p.y;
  }
  return 0.5 * a;
}

double perimeter(const Ring& ring) {
  double s = 0.0;
  for (size_t i = 0; i < ring.size(); ++i) {
    const Point& p = ring[i];
    const Point& q = ring[(i + 1) % ring.size()];
    s += std::hypot(q.x - p.x, q.y - p.y);
  }
  return s;
}

void rasterize_rings(const std::vector<Ring>& rings, Mask& out) {
  std::vector<double> xs;
  for (int y = 0; y < out.height; ++y) {
    const double yc = y + 0.5;
    xs.clear();
    for (const Ring& r : rings) {
      const size_t n = r.size();
      for (size_t i = 0; i < n; ++i) {
        const Point& a = r[i];
        const Point& b = r[(i + 1) % n];
        if ((a.y <= yc) == (b.y <= yc)) continue;
        xs.push_back(a.x + (yc - a.y) * (b.x - a.x) / (b.y - a.y));
      }
    }
    std::sort(xs.begin(), xs.end());
    for (size_t i = 0; i + 1 < xs.size(); i += 2) {
      // centres x+0.5 in [xs[i], xs[i+1])
      const int x0 = std::max(0, static_cast<int>(std::ceil(xs[i] - 0.5)));
      const int x1 = std::min(out.width - 1, static_cast<int>(std::ceil(xs[i + 1] - 0.5)) - 1);
      for (int x = x0; x <= x1; ++x) out.at(x, y) = 1;
    }
  }
}

Mask rasterize_rings(const std::vector<Ring>& rings, int width, int height) {
  Mask m(width, height);
  rasterize_rings(rings, m);
  return m;
}

double point_segment_distance(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

namespace {

double directed_hausdorff(const Ring& from, const Ring& to, double step) {
  double worst = 0.0;
  const size_t n = from.size();
  auto dist_to = [&](const Point& p) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < to.size(); ++j) best = std::min(best, point_segment_distance(p, to[j], to[(j + 1) % to.size()]));
    return best;
  };
  for (size_t i = 0; i < n; ++i) {
    const Point& a = from[i];
    const Point& b = from[(i + 1) % n];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    const int samples = std::max(1, static_cast<int>(std::ceil(len / step)));
    for (int s = 0; s < samples; ++s) {
      const double t = static_cast<double>(s) / samples;
      worst = std::max(worst, dist_to({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)}));
    }
  }
  return worst;
}

double cross(const Point& o, const Point& a, const Point& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

bool on_segment(const Point& p, const Point& a, const Point& b) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

bool segments_intersect(const Point& a, const Point& b, const Point& c, const Point& d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b);
  const double d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  if (d1 == 0 && on_segment(a, c, d)) return true;
  if (d2 == 0 && on_segment(b, c, d)) return true;
  if (d3 == 0 && on_segment(c, a, b)) return true;
  if (d4 == 0 && on_segment(d, a, b)) return true;
  return false;
}

}  // namespace

double hausdorff(const Ring& a, const Ring& b, double step) {
  if (a.empty() || b.empty()) return std::numeric_limits<double>::infinity();
  return std::max(directed_hausdorff(a, b, step), directed_hausdorff(b, a, step));
}

bool self_intersects(const Ring& ring) {
  const size_t n = ring.size();
  if (n < 3) return true;
  for (size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    for (size_t j = i + 1; j < n; ++j) {
      const Point& c = ring[j];
      const Point& d = ring[(j + 1) % n];
      const bool adjacent = (j == i + 1) || (i == 0 && j == n - 1);
      if (adjacent) {
        // Shared vertex is fine; folding back onto the previous edge is not.
        const Point& shared = (j == i + 1) ? b : a;
        const Point& p = (j == i + 1) ? a : b;
        const Point& q = (j == i + 1) ? d : c;
        if (cross(shared, p, q) == 0.0) {
          const double dot = (p.x - shared.x) * (q.x - shared.x) + (p.y - shared.y) * (q.y - shared.y);
          if (dot > 0.0) return true;
        }
        continue;
      }
      if (segments_intersect(a, b, c, d)) return true;
    }
  }
  return false;
}

Mask rasterize_polygon(const Polygon& polygon, int width, int height) {
  std::vector<Ring> rings{polygon.exterior};
  rings.insert(rings.end(), polygon.holes.begin(), polygon.holes.end());
  return rasterize_rings(rings, width, height);
}

}  // namespace spgraph
