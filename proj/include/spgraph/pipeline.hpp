#pragma once

#include <filesystem>
#include <vector>

#include "spgraph/gat.hpp"
#include "spgraph/graph.hpp"
#include "spgraph/metrics.hpp"
#include "spgraph/mrf.hpp"
#include "spgraph/superpixel_net.hpp"
#include "spgraph/vectorize.hpp"

namespace spgraph {

// Everything derived from one image before any stroke is drawn.
struct TileAnalysis {
  SuperpixelResult superpixels;
  LabelMap compact;  // node id per pixel
  SpGraph graph;     // node_prob and edge_alpha filled
  EditResult cut;    // MRF solution without strokes
};

class Pipeline {
 public:
  Pipeline(SuperpixelNet<float> superpixel, GatModel<float> gat);
  static Pipeline load(const std::filesystem::path& sp_checkpoint, const std::filesystem::path& gat_checkpoint);

  const SuperpixelNet<float>& superpixel() const { return superpixel_; }
  const GatModel<float>& gat() const { return gat_; }

  // Throws InvalidArgument when the image size does not suit the network.
  TileAnalysis analyze(const Raster<float>& rgb, double phi = kDefaultPhi) const;

 private:
  SuperpixelNet<float> superpixel_;
  GatModel<float> gat_;
};

// Graphs with node labels from a frozen superpixel network, for GAT training.
std::vector<SpGraph> labelled_graphs(const SuperpixelNet<float>& net, const std::vector<ImageTile>& tiles);

// Ground-truth footprints: one traced polygon per instance id.
std::vector<Polygon> instance_polygons(const Raster<uint16_t>& instances);

// Predictions for one tile; any part may be left empty to skip its metrics.
struct TilePrediction {
  LabelMap superpixels;
  Mask mask;
  std::vector<Polygon> polygons;
  bool has_polygons = false;
};

// Dataset-level metrics. Superpixel and pixel scores are tile means; AP
// pools matches over all tiles, WC weights by ground-truth area and BF, HD
// and VNE average over matched pairs.
class DatasetEvaluation {
 public:
  void add(const TilePrediction& pred, const ImageTile& gt);
  MetricReport report() const;
  int tiles() const { return tiles_; }

 private:
  int tiles_ = 0;
  int sp_tiles_ = 0, px_tiles_ = 0, vec_tiles_ = 0;
  double asa_ = 0, br_ = 0, bp_ = 0;
  double precision_ = 0, recall_ = 0, f1_ = 0, iou_ = 0;
  double matched50_ = 0, matched75_ = 0, denom_ = 0;
  double wc_num_ = 0, wc_den_ = 0;
  double bf_ = 0, hd_ = 0, vne_ = 0;
  int pairs_ = 0;
  int tolerance_ = 0;
};

}  // namespace spgraph
