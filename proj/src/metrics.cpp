#include "spgraph/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>
#include <unordered_map>

#include "spgraph/errors.hpp"
#include "spgraph/synth.hpp"

namespace spgraph {

namespace {

void require_same(int w1, int h1, int w2, int h2, const char* what) {
  if (w1 != w2 || h1 != h2) throw InvalidArgument(std::string(what) + ": raster sizes differ");
}

}  // namespace

double asa(const LabelMap& superpixels, const Raster<uint16_t>& gt) {
  require_same(superpixels.width, superpixels.height, gt.width, gt.height, "asa");
  if (superpixels.pixels() == 0) throw UndefinedMetric("asa: empty image");
  std::unordered_map<int32_t, std::unordered_map<uint16_t, long>> overlap;
  for (size_t p = 0; p < superpixels.pixels(); ++p) ++overlap[superpixels.data[p]][gt.data[p]];
  long hit = 0;
  for (const auto& [id, counts] : overlap) {
    long best = 0;
    for (const auto& [g, c] : counts) best = std::max(best, c);
    hit += best;
  }
  return static_cast<double>(hit) / static_cast<double>(superpixels.pixels());
}

int default_boundary_tolerance(int width, int height) {
  const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
  return std::max(1, static_cast<int>(std::lround(0.0025 * diag)));
}

Mask dilate(const Mask& mask, int radius) {
  if (radius <= 0) return mask;
  const int w = mask.width, h = mask.height;
  Mask rows(w, h), out(w, h);
  for (int y = 0; y < h; ++y) {
    // Distance to the last set pixel on the left, then a right-to-left pass.
    int last = -1'000'000;
    for (int x = 0; x < w; ++x) {
      if (mask.at(x, y)) last = x;
      if (x - last <= radius) rows.at(x, y) = 1;
    }
    last = 1'000'000;
    for (int x = w - 1; x >= 0; --x) {
      if (mask.at(x, y)) last = x;
      if (last - x <= radius) rows.at(x, y) = 1;
    }
  }
  for (int x = 0; x < w; ++x) {
    int last = -1'000'000;
    for (int y = 0; y < h; ++y) {
      if (rows.at(x, y)) last = y;
      if (y - last <= radius) out.at(x, y) = 1;
    }
    last = 1'000'000;
    for (int y = h - 1; y >= 0; --y) {
      if (rows.at(x, y)) last = y;
      if (last - y <= radius) out.at(x, y) = 1;
    }
  }
  return out;
}

BoundaryScores br_bp(const Mask& sp, const Mask& gt, int tolerance) {
  require_same(sp.width, sp.height, gt.width, gt.height, "br_bp");
  if (tolerance < 0) throw InvalidArgument("br_bp: negative tolerance");
  const Mask sp_near = dilate(sp, tolerance);
  const Mask gt_near = dilate(gt, tolerance);
  long n_gt = 0, n_sp = 0, recalled = 0, precise = 0;
  for (size_t p = 0; p < sp.pixels(); ++p) {
    if (gt.data[p]) {
      ++n_gt;
      recalled += sp_near.data[p] ? 1 : 0;
    }
    if (sp.data[p]) {
      ++n_sp;
      precise += gt_near.data[p] ? 1 : 0;
    }
  }
  if (n_gt == 0) throw UndefinedMetric("br_bp: ground truth has no boundary pixels");
  BoundaryScores s;
  s.tolerance = tolerance;
  s.recall = static_cast<double>(recalled) / static_cast<double>(n_gt);
  s.precision = n_sp ? static_cast<double>(precise) / static_cast<double>(n_sp) : 0.0;
  return s;
}

PixelMetrics pixel_metrics(const Mask& pred, const Mask& gt) {
  require_same(pred.width, pred.height, gt.width, gt.height, "pixel_metrics");
  long tp = 0, fp = 0, fn = 0;
  for (size_t p = 0; p < pred.pixels(); ++p) {
    const bool a = pred.data[p] != 0, b = gt.data[p] != 0;
    tp += (a && b) ? 1 : 0;
    fp += (a && !b) ? 1 : 0;
    fn += (!a && b) ? 1 : 0;
  }
  auto ratio = [](long num, long den) { return den == 0 ? 1.0 : static_cast<double>(num) / static_cast<double>(den); };
  PixelMetrics m;
  m.precision = (tp + fp == 0 && fn > 0) ? 0.0 : ratio(tp, tp + fp);
  m.recall = ratio(tp, tp + fn);
  m.f1 = (m.precision + m.recall) > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.iou = ratio(tp, tp + fp + fn);
  return m;
}

double mask_iou(const Mask& a, const Mask& b) { return pixel_metrics(a, b).iou; }

namespace {

struct Rasterized {
  Mask mask;
  long area = 0;
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // inclusive bounding box
};

Rasterized rasterize_instance(const Polygon& poly, int width, int height) {
  Rasterized r;
  r.mask = rasterize_polygon(poly, width, height);
  r.x0 = width;
  r.y0 = height;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!r.mask.at(x, y)) continue;
      ++r.area;
      r.x0 = std::min(r.x0, x);
      r.y0 = std::min(r.y0, y);
      r.x1 = std::max(r.x1, x);
      r.y1 = std::max(r.y1, y);
    }
  }
  return r;
}

double instance_iou(const Rasterized& a, const Rasterized& b) {
  if (a.area == 0 && b.area == 0) return 0.0;
  const int x0 = std::max(a.x0, b.x0), x1 = std::min(a.x1, b.x1);
  const int y0 = std::max(a.y0, b.y0), y1 = std::min(a.y1, b.y1);
  long inter = 0;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) inter += (a.mask.at(x, y) && b.mask.at(x, y)) ? 1 : 0;
  return static_cast<double>(inter) / static_cast<double>(a.area + b.area - inter);
}

// Foreground pixels with a 4-neighbour outside the shape (image border counts as outside).
Mask inner_boundary(const Mask& m) {
  Mask out(m.width, m.height);
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (!m.at(x, y)) continue;
      const bool edge = x == 0 || y == 0 || x + 1 == m.width || y + 1 == m.height || !m.at(x - 1, y) ||
                        !m.at(x + 1, y) || !m.at(x, y - 1) || !m.at(x, y + 1);
      out.at(x, y) = edge ? 1 : 0;
    }
  }
  return out;
}

double boundary_f(const Mask& pred, const Mask& gt, int tol) {
  const Mask bp = inner_boundary(pred), bg = inner_boundary(gt);
  bool any_gt = false;
  for (uint8_t v : bg.data) any_gt = any_gt || v;
  if (!any_gt) return 0.0;
  const BoundaryScores s = br_bp(bp, bg, tol);
  return s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
}

// Greedy one-to-one matching by descending IoU.
std::vector<std::pair<int, int>> greedy_match(const std::vector<std::vector<double>>& iou, double threshold) {
  std::vector<std::tuple<double, int, int>> cand;
  for (size_t i = 0; i < iou.size(); ++i)
    for (size_t j = 0; j < iou[i].size(); ++j)
      if (iou[i][j] >= threshold) cand.emplace_back(iou[i][j], static_cast<int>(i), static_cast<int>(j));
  std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
    if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
    return std::tie(std::get<1>(a), std::get<2>(a)) < std::tie(std::get<1>(b), std::get<2>(b));
  });
  std::vector<char> used_p(iou.size(), 0), used_g(iou.empty() ? 0 : iou[0].size(), 0);
  std::vector<std::pair<int, int>> out;
  for (const auto& [v, i, j] : cand) {
    if (used_p[static_cast<size_t>(i)] || used_g[static_cast<size_t>(j)]) continue;
    used_p[static_cast<size_t>(i)] = used_g[static_cast<size_t>(j)] = 1;
    out.emplace_back(i, j);
  }
  return out;
}

}  // namespace

VectorMetrics vector_metrics(const std::vector<Polygon>& pred, const std::vector<Polygon>& gt, int width,
                             int height, int bf_tolerance) {
  if (gt.empty()) throw UndefinedMetric("vector_metrics: no ground-truth polygons");
  std::vector<Rasterized> rp, rg;
  for (const auto& p : pred) rp.push_back(rasterize_instance(p, width, height));
  for (const auto& g : gt) rg.push_back(rasterize_instance(g, width, height));

  std::vector<std::vector<double>> iou(rp.size(), std::vector<double>(rg.size(), 0.0));
  for (size_t i = 0; i < rp.size(); ++i)
    for (size_t j = 0; j < rg.size(); ++j) iou[i][j] = instance_iou(rp[i], rg[j]);

  VectorMetrics m;
  m.n_pred = static_cast<int>(pred.size());
  m.n_gt = static_cast<int>(gt.size());
  const double denom = static_cast<double>(std::max(pred.size(), gt.size()));
  const auto m50 = greedy_match(iou, 0.5);
  m.ap50 = 100.0 * static_cast<double>(m50.size()) / denom;
  m.ap75 = 100.0 * static_cast<double>(greedy_match(iou, 0.75).size()) / denom;

  double covered = 0.0, total = 0.0;
  for (size_t j = 0; j < rg.size(); ++j) {
    double best = 0.0;
    for (size_t i = 0; i < rp.size(); ++i) best = std::max(best, iou[i][j]);
    covered += static_cast<double>(rg[j].area) * best;
    total += static_cast<double>(rg[j].area);
  }
  m.wc = total > 0 ? covered / total : 0.0;

  m.matched = static_cast<int>(m50.size());
  for (const auto& [i, j] : m50) {
    const auto& p = pred[static_cast<size_t>(i)];
    const auto& g = gt[static_cast<size_t>(j)];
    m.bf += boundary_f(rp[static_cast<size_t>(i)].mask, rg[static_cast<size_t>(j)].mask, bf_tolerance);
    m.hd += hausdorff(p.exterior, g.exterior);
    m.vne += std::abs(static_cast<double>(p.exterior.size()) - static_cast<double>(g.exterior.size())) /
             static_cast<double>(g.exterior.size());
  }
  if (m.matched > 0) {
    m.bf /= m.matched;
    m.hd /= m.matched;
    m.vne /= m.matched;
  }
  return m;
}

void MetricReport::add(const std::string& name, double value, nlohmann::json params, long support) {
  if (!std::isfinite(value)) throw NumericError("metric " + name + " is not finite");
  nlohmann::json entry{{"value", value}, {"params", std::move(params)}};
  if (support >= 0) entry["support"] = support;
  j_[name] = std::move(entry);
}

double MetricReport::value(const std::string& name) const { return j_.at(name).at("value").get<double>(); }

}  // namespace spgraph
