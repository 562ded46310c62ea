#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "json.hpp"
#include "spgraph/image.hpp"
#include "spgraph/superpixel.hpp"

namespace spgraph {

struct SuperpixelResult;

using Edge = std::pair<int, int>;  // i < j

// Superpixel adjacency graph. Node i covers the pixels with compact id i.
struct SpGraph {
  int n_nodes = 0;
  int feat_channels = 0;
  std::vector<float> node_feat;                  // n_nodes x feat_channels
  std::vector<std::array<double, 2>> centroid;   // pixel-centre mean (x, y)
  std::vector<long> area;
  std::vector<Edge> edges;                       // sorted, deduplicated
  std::vector<uint8_t> node_label;               // training targets, may be empty
  std::vector<double> node_prob;                 // building probability, may be empty
  std::vector<double> edge_alpha;                // per edge, may be empty
  std::vector<int32_t> raw_to_node;              // raw grid id -> node id, -1 if dropped
  std::vector<int32_t> node_to_raw;
};

struct Relabeling {
  LabelMap labels;  // compact ids 0..n-1
  std::vector<int32_t> raw_to_node;
  std::vector<int32_t> node_to_raw;
};

// Renumbers raw ids in increasing raw order, dropping ids with no pixels.
Relabeling relabel(const LabelMap& raw, int raw_count);

// V_n = sum_p f_p Q_p(n) / Z_n over all raw grid cells: [N_raw, C] row-major.
std::vector<float> pool_features(std::span<const float> features, int channels, std::span<const float> q,
                                 const CandidateTable& table);

// 4-adjacency between distinct compact ids.
std::vector<Edge> build_edges(const LabelMap& compact);

// B_n = 1 iff more than half of the node's pixels are building.
std::vector<uint8_t> aggregate_labels(const LabelMap& compact, int n_nodes, const Mask& building);

// Full graph from a superpixel inference result. `building` (optional) fills node_label.
SpGraph build_graph(const SuperpixelResult& sp, const Mask* building = nullptr);

// Paints each pixel with its node's label.
Mask render_labels(const LabelMap& compact, std::span<const uint8_t> labels);

// {nodes:[{id,centroid,area,prob}], edges:[{i,j,alpha}]}
nlohmann::json graph_to_json(const SpGraph& g);
// Reads the subset needed for cuts: node count, prob, edges and alpha.
SpGraph graph_from_json(const nlohmann::json& j);

}  // namespace spgraph
