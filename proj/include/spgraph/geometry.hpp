#pragma once

#include <vector>

#include "spgraph/image.hpp"

namespace spgraph {

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

// Implicitly closed: the last vertex connects back to the first.
using Ring = std::vector<Point>;

// Exterior ring plus holes, all pixel-corner coordinates.
struct Polygon {
  Ring exterior;
  std::vector<Ring> holes;
};

// Shoelace area; positive for counter-clockwise rings in (x right, y up)
// terms, i.e. clockwise on screen where y points down.
double signed_area(const Ring& ring);
double perimeter(const Ring& ring);

// Pixel (x, y) is covered iff its centre (x+0.5, y+0.5) lies inside under the
// even-odd rule over all rings. Scanline fill; ORs into `out`.
void rasterize_rings(const std::vector<Ring>& rings, Mask& out);
Mask rasterize_rings(const std::vector<Ring>& rings, int width, int height);
Mask rasterize_polygon(const Polygon& polygon, int width, int height);

double point_segment_distance(const Point& p, const Point& a, const Point& b);
// Symmetric Hausdorff distance between two closed polylines, sampling both
// at `step` pixel spacing.
double hausdorff(const Ring& a, const Ring& b, double step = 0.25);

// True if any two non-adjacent edges intersect or adjacent edges overlap.
bool self_intersects(const Ring& ring);

}  // namespace spgraph
