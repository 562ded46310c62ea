#pragma once

#include <string>
#include <vector>

#include "json.hpp"
#include "spgraph/geometry.hpp"
#include "spgraph/image.hpp"

namespace spgraph {

enum class PolygonStage { Raw, Simplified, Regularized };
std::string to_string(PolygonStage s);

struct FootprintPolygon {
  Polygon shape;  // exterior with positive signed area, holes negative
  int instance = 0;
  PolygonStage stage = PolygonStage::Raw;
};

// One polygon per 4-connected foreground component, traced on the pixel
// corner lattice (foreground kept on the right on screen, turning right at
// saddle corners). Collinear lattice points are omitted. Holes are the
// 8-connected background regions enclosed by a component. Instances are
// numbered 1.. in raster order of their first pixel.
std::vector<FootprintPolygon> trace(const Mask& mask);

// Douglas-Peucker on a closed ring split at two extreme vertices (the first
// lowest-leftmost vertex and the vertex farthest from it). Vertices within
// `epsilon` of the kept chord are removed, so epsilon = 0 only drops exactly
// collinear ones. Throws DegeneratePolygon below 3 vertices.
Ring simplify(const Ring& ring, double epsilon);

// Length-weighted dominant edge direction modulo 90 degrees, in [0, 90).
double dominant_direction(const Ring& ring, double angle_tol_deg = 15.0);

struct RegularizeOptions {
  double angle_tol_deg = 15.0;
  double min_iou = 0.9;
};

// Snaps edges near the dominant direction (or its perpendicular) and rebuilds
// corners from consecutive line intersections. Falls back to the input with
// stage unchanged when the result self-intersects, flips orientation or loses
// too much overlap.
FootprintPolygon regularize(const FootprintPolygon& polygon, const RegularizeOptions& options = {});

// IoU of two polygons by supersampled rasterization over their joint bounds.
double polygon_iou(const Polygon& a, const Polygon& b, int supersample = 4);

struct VectorizeOptions {
  double epsilon = 1.5;
  double angle_tol_deg = 15.0;
  bool regularize = true;
  double min_area = 64.0;  // px; smaller components are dropped
};

// Trace, simplify and regularize each component. Components too small to
// survive simplification stay raw.
std::vector<FootprintPolygon> vectorize_mask(const Mask& mask, const VectorizeOptions& options = {});

// RFC 7946 FeatureCollection in pixel coordinates; rings closed (first = last).
nlohmann::json to_geojson(const std::vector<FootprintPolygon>& polygons);
std::vector<Polygon> polygons_from_geojson(const nlohmann::json& fc);

}  // namespace spgraph
