#include "spgraph/pipeline.hpp"

#include <algorithm>
#include <map>

#include "spgraph/errors.hpp"

namespace spgraph {

Pipeline::Pipeline(SuperpixelNet<float> superpixel, GatModel<float> gat)
    : superpixel_(std::move(superpixel)), gat_(std::move(gat)) {
  if (superpixel_.config().feat_channels != gat_.config().in_channels) {
    throw InvalidArgument("pipeline: superpixel features (" + std::to_string(superpixel_.config().feat_channels) +
                          ") do not match GAT input (" + std::to_string(gat_.config().in_channels) + ")");
  }
}

Pipeline Pipeline::load(const std::filesystem::path& sp_checkpoint, const std::filesystem::path& gat_checkpoint) {
  return Pipeline(load_superpixel(sp_checkpoint), load_gat(gat_checkpoint));
}

TileAnalysis Pipeline::analyze(const Raster<float>& rgb, double phi) const {
  TileAnalysis t;
  t.superpixels = run_superpixel(superpixel_, rgb);
  t.compact = relabel(t.superpixels.assignment, t.superpixels.grid.count()).labels;
  t.graph = build_graph(t.superpixels);
  run_gat(gat_, t.graph);
  t.cut = edit_cycle(t.graph, t.compact, {}, phi);
  return t;
}

std::vector<SpGraph> labelled_graphs(const SuperpixelNet<float>& net, const std::vector<ImageTile>& tiles) {
  std::vector<SpGraph> out;
  out.reserve(tiles.size());
  for (const auto& tile : tiles) out.push_back(build_graph(run_superpixel(net, tile.rgb), &tile.mask));
  return out;
}

std::vector<Polygon> instance_polygons(const Raster<uint16_t>& instances) {
  std::map<uint16_t, Mask> masks;
  for (int y = 0; y < instances.height; ++y) {
    for (int x = 0; x < instances.width; ++x) {
      const uint16_t id = instances.at(x, y);
      if (id == 0) continue;
      auto it = masks.try_emplace(id, instances.width, instances.height).first;
      it->second.at(x, y) = 1;
    }
  }
  std::vector<Polygon> out;
  for (const auto& [id, m] : masks)
    for (auto& p : trace(m)) out.push_back(std::move(p.shape));
  return out;
}

void DatasetEvaluation::add(const TilePrediction& pred, const ImageTile& gt) {
  ++tiles_;
  if (pred.superpixels.pixels() > 0) {
    tolerance_ = default_boundary_tolerance(gt.width, gt.height);
    asa_ += asa(pred.superpixels, gt.instances);
    const auto b = br_bp(label_boundaries(pred.superpixels), gt.boundary_building, tolerance_);
    br_ += b.recall;
    bp_ += b.precision;
    ++sp_tiles_;
  }
  if (pred.mask.pixels() > 0) {
    const auto m = pixel_metrics(pred.mask, gt.mask);
    precision_ += m.precision;
    recall_ += m.recall;
    f1_ += m.f1;
    iou_ += m.iou;
    ++px_tiles_;
  }
  if (pred.has_polygons) {
    const auto gt_polys = instance_polygons(gt.instances);
    if (gt_polys.empty()) return;
    const auto v = vector_metrics(pred.polygons, gt_polys, gt.width, gt.height);
    const double denom = std::max(v.n_pred, v.n_gt);
    matched50_ += v.ap50 / 100.0 * denom;
    matched75_ += v.ap75 / 100.0 * denom;
    denom_ += denom;
    double area = 0;
    for (uint8_t x : gt.mask.data) area += x;
    wc_num_ += v.wc * area;
    wc_den_ += area;
    bf_ += v.bf * v.matched;
    hd_ += v.hd * v.matched;
    vne_ += v.vne * v.matched;
    pairs_ += v.matched;
    ++vec_tiles_;
  }
}

MetricReport DatasetEvaluation::report() const {
  MetricReport r;
  if (sp_tiles_ > 0) {
    const double n = sp_tiles_;
    r.add("ASA", asa_ / n, {{"background", "one segment"}}, sp_tiles_);
    r.add("BR", br_ / n, {{"tolerance_px", tolerance_}, {"boundary", "building"}}, sp_tiles_);
    r.add("BP", bp_ / n, {{"tolerance_px", tolerance_}, {"boundary", "building"}}, sp_tiles_);
  }
  if (px_tiles_ > 0) {
    const double n = px_tiles_;
    r.add("precision", precision_ / n, {{"reduction", "tile mean"}}, px_tiles_);
    r.add("recall", recall_ / n, {{"reduction", "tile mean"}}, px_tiles_);
    r.add("F1", f1_ / n, {{"reduction", "tile mean"}}, px_tiles_);
    r.add("IoU", iou_ / n, {{"reduction", "tile mean"}}, px_tiles_);
  }
  if (vec_tiles_ > 0) {
    const auto pairs = nlohmann::json{{"pairs", "IoU >= 0.5 matches"}};
    r.add("AP50", denom_ > 0 ? 100.0 * matched50_ / denom_ : 0.0, {{"iou", 0.5}}, static_cast<long>(denom_));
    r.add("AP75", denom_ > 0 ? 100.0 * matched75_ / denom_ : 0.0, {{"iou", 0.75}}, static_cast<long>(denom_));
    r.add("WC", wc_den_ > 0 ? wc_num_ / wc_den_ : 0.0, {{"weight", "gt area"}}, vec_tiles_);
    r.add("BF", pairs_ > 0 ? bf_ / pairs_ : 0.0, {{"tolerance_px", 3}}, pairs_);
    r.add("HD", pairs_ > 0 ? hd_ / pairs_ : 0.0, pairs, pairs_);
    r.add("VNE", pairs_ > 0 ? vne_ / pairs_ : 0.0, pairs, pairs_);
  }
  return r;
}

}  // namespace spgraph
