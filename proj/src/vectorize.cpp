#include "spgraph/vectorize.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <queue>

#include "spgraph/errors.hpp"

namespace spgraph {

std::string to_string(PolygonStage s) {
  switch (s) {
    case PolygonStage::Raw: return "raw";
    case PolygonStage::Simplified: return "simplified";
    case PolygonStage::Regularized: return "regularized";
  }
  return "raw";
}

namespace {

constexpr std::array<int, 4> kDx{1, 0, -1, 0};
constexpr std::array<int, 4> kDy{0, 1, 0, -1};
constexpr double kPi = 3.14159265358979323846;

LabelMap component_labels(const Mask& mask, int& count) {
  LabelMap labels(mask.width, mask.height, 1, 0);
  count = 0;
  std::vector<std::pair<int, int>> stack;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y) || labels.at(x, y)) continue;
      labels.at(x, y) = ++count;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const auto [cx, cy] = stack.back();
        stack.pop_back();
        for (int d = 0; d < 4; ++d) {
          const int nx = cx + kDx[static_cast<size_t>(d)], ny = cy + kDy[static_cast<size_t>(d)];
          if (mask.contains(nx, ny) && mask.at(nx, ny) && !labels.at(nx, ny)) {
            labels.at(nx, ny) = count;
            stack.push_back({nx, ny});
          }
        }
      }
    }
  }
  return labels;
}

}  // namespace

std::vector<FootprintPolygon> trace(const Mask& mask) {
  const int w = mask.width, h = mask.height;
  const int vw = w + 1;
  auto fg = [&](int x, int y) { return mask.contains(x, y) && mask.at(x, y) != 0; };

  // Boundary edges keyed by start vertex; bit d set when an edge leaves in direction d.
  std::vector<uint8_t> out(static_cast<size_t>(vw) * (h + 1), 0), used(out.size(), 0);
  auto vid = [&](int x, int y) { return static_cast<size_t>(y) * vw + x; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(x, y)) continue;
      if (!fg(x, y - 1)) out[vid(x, y)] |= 1;
      if (!fg(x + 1, y)) out[vid(x + 1, y)] |= 2;
      if (!fg(x, y + 1)) out[vid(x + 1, y + 1)] |= 4;
      if (!fg(x - 1, y)) out[vid(x, y + 1)] |= 8;
    }
  }

  int n_comp = 0;
  const LabelMap comp = component_labels(mask, n_comp);
  std::vector<FootprintPolygon> polys(static_cast<size_t>(n_comp));
  for (int i = 0; i < n_comp; ++i) polys[static_cast<size_t>(i)].instance = i + 1;

  auto follow = [&](int x0, int y0, int d0) {
    Ring ring;
    int x = x0, y = y0, d = d0;
    while (true) {
      used[vid(x, y)] |= static_cast<uint8_t>(1 << d);
      x += kDx[static_cast<size_t>(d)];
      y += kDy[static_cast<size_t>(d)];
      const uint8_t avail = out[vid(x, y)];
      // Right turn first keeps diagonal foreground pixels apart.
      int next = -1;
      for (int turn : {1, 0, 3}) {
        const int c = (d + turn) % 4;
        if (avail & (1 << c)) {
          next = c;
          break;
        }
      }
      if (next < 0) throw std::logic_error("trace: open boundary");
      if (next != d) ring.push_back({static_cast<double>(x), static_cast<double>(y)});
      d = next;
      if (x == x0 && y == y0 && d == d0) break;
    }
    // Start at the first edge's origin when it is a corner.
    if (!ring.empty() && ring.back() == Point{static_cast<double>(x0), static_cast<double>(y0)}) {
      std::rotate(ring.begin(), ring.end() - 1, ring.end());
    }
    return ring;
  };

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!fg(x, y)) continue;
      const int owner = comp.at(x, y);
      // Edge origins for top, right, bottom, left sides of this pixel.
      const std::array<std::array<int, 2>, 4> origin{{{x, y}, {x + 1, y}, {x + 1, y + 1}, {x, y + 1}}};
      for (int d = 0; d < 4; ++d) {
        const auto [ox, oy] = origin[static_cast<size_t>(d)];
        const size_t v = vid(ox, oy);
        if (!(out[v] & (1 << d)) || (used[v] & (1 << d))) continue;
        Ring ring = follow(ox, oy, d);
        auto& poly = polys[static_cast<size_t>(owner - 1)];
        if (signed_area(ring) > 0) {
          poly.shape.exterior = std::move(ring);
        } else {
          poly.shape.holes.push_back(std::move(ring));
        }
      }
    }
  }
  return polys;
}

namespace {

double segment_distance(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  if (len2 == 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  const double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2;
  if (t <= 0.0) return std::hypot(p.x - a.x, p.y - a.y);
  if (t >= 1.0) return std::hypot(p.x - b.x, p.y - b.y);
  return std::abs(dx * (p.y - a.y) - dy * (p.x - a.x)) / std::sqrt(len2);
}

// Marks vertices to keep on the cyclic chain from index `from` to `to`.
void douglas_peucker(const Ring& ring, size_t from, size_t to, double eps, std::vector<char>& keep) {
  const size_t n = ring.size();
  std::vector<std::pair<size_t, size_t>> stack{{from, to}};
  while (!stack.empty()) {
    const auto [a, b] = stack.back();
    stack.pop_back();
    double best = -1.0;
    size_t best_i = a;
    for (size_t i = (a + 1) % n; i != b; i = (i + 1) % n) {
      const double d = segment_distance(ring[i], ring[a], ring[b]);
      if (d > best) {
        best = d;
        best_i = i;
      }
    }
    if (best > eps) {
      keep[best_i] = 1;
      stack.push_back({a, best_i});
      stack.push_back({best_i, b});
    }
  }
}

}  // namespace

Ring simplify(const Ring& ring, double epsilon) {
  if (epsilon < 0) throw InvalidArgument("simplify: epsilon must be non-negative");
  const size_t n = ring.size();
  if (n < 3) throw DegeneratePolygon("simplify: ring has fewer than 3 vertices");
  size_t a = 0;
  for (size_t i = 1; i < n; ++i) {
    if (ring[i].x < ring[a].x || (ring[i].x == ring[a].x && ring[i].y < ring[a].y)) a = i;
  }
  size_t b = a;
  double far = -1.0;
  for (size_t i = 0; i < n; ++i) {
    const double d = std::hypot(ring[i].x - ring[a].x, ring[i].y - ring[a].y);
    if (d > far) {
      far = d;
      b = i;
    }
  }
  if (far <= 0.0) throw DegeneratePolygon("simplify: all vertices coincide");
  std::vector<char> keep(n, 0);
  keep[a] = keep[b] = 1;
  douglas_peucker(ring, a, b, epsilon, keep);
  douglas_peucker(ring, b, a, epsilon, keep);
  Ring out;
  for (size_t i = 0; i < n; ++i)
    if (keep[i]) out.push_back(ring[i]);
  if (out.size() < 3 || signed_area(out) == 0.0) throw DegeneratePolygon("simplify: ring collapsed below 3 vertices");
  return out;
}

namespace {

double wrap90(double deg) {
  double m = std::fmod(deg, 90.0);
  if (m < 0) m += 90.0;
  return m >= 90.0 ? 0.0 : m;
}

// Signed difference a - b on the 90-degree circle, in [-45, 45).
double diff90(double a, double b) { return wrap90(a - b + 45.0) - 45.0; }

Point unit(double deg) {
  // Exact vectors on the axes so axis-aligned input survives unchanged.
  const double m = std::fmod(std::fmod(deg, 360.0) + 360.0, 360.0);
  if (m == 0.0) return {1, 0};
  if (m == 90.0) return {0, 1};
  if (m == 180.0) return {-1, 0};
  if (m == 270.0) return {0, -1};
  return {std::cos(m * kPi / 180.0), std::sin(m * kPi / 180.0)};
}

struct Line {
  Point p;
  Point d;
  double length;
};

double cross(const Point& a, const Point& b) { return a.x * b.y - a.y * b.x; }

std::optional<Ring> regularize_ring(const Ring& ring, double theta, double tol) {
  const size_t n = ring.size();
  if (n < 3) return std::nullopt;
  std::vector<Line> lines;
  for (size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) continue;
    const double ang = std::atan2(b.y - a.y, b.x - a.x) * 180.0 / kPi;
    const double delta = diff90(ang, theta);
    if (std::abs(delta) <= tol) {
      lines.push_back({{0.5 * (a.x + b.x), 0.5 * (a.y + b.y)}, unit(ang - delta), len});
    } else {
      lines.push_back({a, {(b.x - a.x) / len, (b.y - a.y) / len}, len});
    }
  }

  // Collapse runs of (near-)parallel neighbours; their intersections are undefined.
  const double parallel = std::sin(1.0 * kPi / 180.0);
  for (int pass = 0; pass < 2 && lines.size() >= 3; ++pass) {
    bool merged = false;
    std::vector<Line> next;
    for (const Line& l : lines) {
      if (!next.empty() && std::abs(cross(next.back().d, l.d)) < parallel) {
        Line& m = next.back();
        const double wsum = m.length + l.length;
        Point lp = l.p;
        // Project both anchor points onto a common direction, weighted by length.
        m.p = {(m.p.x * m.length + lp.x * l.length) / wsum, (m.p.y * m.length + lp.y * l.length) / wsum};
        if (m.d.x * l.d.x + m.d.y * l.d.y < 0 && l.length > m.length) m.d = l.d;
        m.length = wsum;
        merged = true;
      } else {
        next.push_back(l);
      }
    }
    if (next.size() >= 2 && std::abs(cross(next.back().d, next.front().d)) < parallel) {
      Line l = next.back();
      next.pop_back();
      Line& m = next.front();
      const double wsum = m.length + l.length;
      m.p = {(m.p.x * m.length + l.p.x * l.length) / wsum, (m.p.y * m.length + l.p.y * l.length) / wsum};
      m.length = wsum;
      merged = true;
    }
    lines = std::move(next);
    if (!merged) break;
  }
  if (lines.size() < 3) return std::nullopt;

  Ring out;
  for (size_t i = 0; i < lines.size(); ++i) {
    const Line& l1 = lines[(i + lines.size() - 1) % lines.size()];
    const Line& l2 = lines[i];
    const double den = cross(l1.d, l2.d);
    if (std::abs(den) < parallel) return std::nullopt;
    const double t = cross({l2.p.x - l1.p.x, l2.p.y - l1.p.y}, l2.d) / den;
    out.push_back({l1.p.x + t * l1.d.x, l1.p.y + t * l1.d.y});
  }
  return out;
}

}  // namespace

double dominant_direction(const Ring& ring, double angle_tol_deg) {
  std::array<double, 90> hist{};
  const size_t n = ring.size();
  std::vector<std::pair<double, double>> edges;  // (angle mod 90, length)
  for (size_t i = 0; i < n; ++i) {
    const Point& a = ring[i];
    const Point& b = ring[(i + 1) % n];
    const double len = std::hypot(b.x - a.x, b.y - a.y);
    if (len == 0.0) continue;
    const double m = wrap90(std::atan2(b.y - a.y, b.x - a.x) * 180.0 / kPi);
    hist[static_cast<size_t>(std::min(89.0, std::floor(m)))] += len;
    edges.push_back({m, len});
  }
  if (edges.empty()) return 0.0;
  const size_t peak = static_cast<size_t>(std::max_element(hist.begin(), hist.end()) - hist.begin());
  const double centre = static_cast<double>(peak) + 0.5;
  // Circular mean (period 90) of the edges near the peak bin.
  const double window = std::min(2.0, angle_tol_deg);
  double c = 0.0, s = 0.0;
  for (const auto& [m, len] : edges) {
    if (std::abs(diff90(m, centre)) > window) continue;
    c += len * std::cos(m * 4.0 * kPi / 180.0);
    s += len * std::sin(m * 4.0 * kPi / 180.0);
  }
  if (c == 0.0 && s == 0.0) return centre;
  return wrap90(std::atan2(s, c) * 180.0 / kPi / 4.0);
}

double polygon_iou(const Polygon& a, const Polygon& b, int supersample) {
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const Polygon* p : {&a, &b}) {
    for (const Point& v : p->exterior) {
      x0 = std::min(x0, v.x);
      y0 = std::min(y0, v.y);
      x1 = std::max(x1, v.x);
      y1 = std::max(y1, v.y);
    }
  }
  if (x1 <= x0 || y1 <= y0) return 0.0;
  const double s = supersample;
  const double ox = std::floor(x0), oy = std::floor(y0);
  const int w = static_cast<int>(std::ceil((x1 - ox) * s)) + 1, h = static_cast<int>(std::ceil((y1 - oy) * s)) + 1;
  auto scaled = [&](const Polygon& p) {
    std::vector<Ring> rings{p.exterior};
    rings.insert(rings.end(), p.holes.begin(), p.holes.end());
    for (Ring& r : rings)
      for (Point& v : r) v = {(v.x - ox) * s, (v.y - oy) * s};
    return rasterize_rings(rings, w, h);
  };
  const Mask ma = scaled(a), mb = scaled(b);
  long inter = 0, uni = 0;
  for (size_t i = 0; i < ma.pixels(); ++i) {
    inter += (ma.data[i] && mb.data[i]) ? 1 : 0;
    uni += (ma.data[i] || mb.data[i]) ? 1 : 0;
  }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

FootprintPolygon regularize(const FootprintPolygon& polygon, const RegularizeOptions& options) {
  const Ring& ext = polygon.shape.exterior;
  if (ext.size() < 3) return polygon;
  const double theta = dominant_direction(ext, options.angle_tol_deg);
  FootprintPolygon out = polygon;
  auto ring = regularize_ring(ext, theta, options.angle_tol_deg);
  if (!ring || ring->size() > ext.size() || self_intersects(*ring) ||
      (signed_area(*ring) > 0) != (signed_area(ext) > 0)) {
    return polygon;
  }
  out.shape.exterior = std::move(*ring);
  for (size_t i = 0; i < polygon.shape.holes.size(); ++i) {
    const Ring& hole = polygon.shape.holes[i];
    auto hr = regularize_ring(hole, theta, options.angle_tol_deg);
    if (!hr || hr->size() > hole.size() || self_intersects(*hr) || (signed_area(*hr) > 0) != (signed_area(hole) > 0)) {
      return polygon;
    }
    out.shape.holes[i] = std::move(*hr);
  }
  if (polygon_iou(polygon.shape, out.shape) < options.min_iou) return polygon;
  out.stage = PolygonStage::Regularized;
  return out;
}

std::vector<FootprintPolygon> vectorize_mask(const Mask& mask, const VectorizeOptions& options) {
  std::vector<FootprintPolygon> polys = trace(mask);
  std::erase_if(polys, [&](const FootprintPolygon& p) { return signed_area(p.shape.exterior) < options.min_area; });
  for (FootprintPolygon& p : polys) {
    try {
      p.shape.exterior = simplify(p.shape.exterior, options.epsilon);
    } catch (const DegeneratePolygon&) {
      continue;  // too small to simplify; stays raw
    }
    for (Ring& hole : p.shape.holes) {
      try {
        hole = simplify(hole, options.epsilon);
      } catch (const DegeneratePolygon&) {
      }
    }
    p.stage = PolygonStage::Simplified;
    if (options.regularize) {
      RegularizeOptions ro;
      ro.angle_tol_deg = options.angle_tol_deg;
      p = regularize(p, ro);
    }
  }
  return polys;
}

nlohmann::json to_geojson(const std::vector<FootprintPolygon>& polygons) {
  auto ring_json = [](const Ring& r) {
    nlohmann::json a = nlohmann::json::array();
    for (const Point& p : r) a.push_back({p.x, p.y});
    if (!r.empty()) a.push_back({r.front().x, r.front().y});
    return a;
  };
  nlohmann::json features = nlohmann::json::array();
  for (const FootprintPolygon& p : polygons) {
    nlohmann::json coords = nlohmann::json::array();
    coords.push_back(ring_json(p.shape.exterior));
    for (const Ring& h : p.shape.holes) coords.push_back(ring_json(h));
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", std::move(coords)}}},
                        {"properties",
                         {{"instance", p.instance},
                          {"stage", to_string(p.stage)},
                          {"vertices", p.shape.exterior.size()},
                          {"area", signed_area(p.shape.exterior)}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

std::vector<Polygon> polygons_from_geojson(const nlohmann::json& fc) {
  try {
    if (fc.at("type") != "FeatureCollection") throw FormatError("GeoJSON: expected a FeatureCollection");
    std::vector<Polygon> out;
    for (const auto& f : fc.at("features")) {
      const auto& g = f.at("geometry");
      if (g.at("type") != "Polygon") throw FormatError("GeoJSON: only Polygon geometries are supported");
      Polygon p;
      bool first = true;
      for (const auto& rj : g.at("coordinates")) {
        Ring r;
        for (const auto& pt : rj) r.push_back({pt.at(0).get<double>(), pt.at(1).get<double>()});
        if (r.size() > 1 && r.front() == r.back()) r.pop_back();
        if (first) {
          p.exterior = std::move(r);
          first = false;
        } else {
          p.holes.push_back(std::move(r));
        }
      }
      out.push_back(std::move(p));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("GeoJSON: ") + e.what());
  }
}

}  // namespace spgraph
