#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "spgraph/geometry.hpp"
#include "spgraph/image.hpp"

namespace spgraph {

// Achievable segmentation accuracy. Background (gt id 0) counts as one segment.
double asa(const LabelMap& superpixels, const Raster<uint16_t>& gt_instances);

// round(0.0025 * image diagonal), at least 1.
int default_boundary_tolerance(int width, int height);

struct BoundaryScores {
  double recall = 0.0;
  double precision = 0.0;
  int tolerance = 0;
};

// Chebyshev-distance tolerance. Throws UndefinedMetric if gt has no boundary
// pixels.
BoundaryScores br_bp(const Mask& sp_boundaries, const Mask& gt_boundaries, int tolerance);

// Square (2r+1) max filter.
Mask dilate(const Mask& mask, int radius);

struct PixelMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double iou = 0.0;
};

// Empty denominators count as perfect when the matching numerator side is
// empty too (nothing predicted and nothing to find).
PixelMetrics pixel_metrics(const Mask& pred, const Mask& gt);

double mask_iou(const Mask& a, const Mask& b);

struct VectorMetrics {
  double ap50 = 0.0;  // percent
  double ap75 = 0.0;  // percent
  double wc = 0.0;
  double bf = 0.0;
  double hd = 0.0;
  double vne = 0.0;
  int matched = 0;  // pairs at IoU >= 0.5, the support of bf/hd/vne
  int n_pred = 0;
  int n_gt = 0;
};

// AP@t = one-to-one greedy matches (descending IoU, IoU >= t) / max(#pred, #gt) * 100.
// WC  = sum_g |g| max_p IoU(g,p) / sum_g |g|.
// BF  = mean boundary F-score over IoU>=0.5 matches, boundary tolerance `bf_tolerance` px.
// HD  = mean symmetric Hausdorff distance between exteriors over those matches.
// VNE = mean |V_pred - V_gt| / V_gt over those matches (exterior vertex counts).
// bf/hd/vne are 0 when nothing matched. Throws UndefinedMetric with no gt polygons.
VectorMetrics vector_metrics(const std::vector<Polygon>& pred, const std::vector<Polygon>& gt, int width,
                             int height, int bf_tolerance = 3);

// {metric: {value, params}} report.
class MetricReport {
 public:
  void add(const std::string& name, double value, nlohmann::json params = nlohmann::json::object(),
           long support = -1);
  const nlohmann::json& json() const { return j_; }
  double value(const std::string& name) const;

 private:
  nlohmann::json j_ = nlohmann::json::object();
};

}  // namespace spgraph
