#include "spgraph/graph.hpp"

#include <algorithm>

#include "spgraph/errors.hpp"
#include "spgraph/nn/ops.hpp"
#include "spgraph/superpixel_net.hpp"

namespace spgraph {

Relabeling relabel(const LabelMap& raw, int raw_count) {
  Relabeling r;
  r.raw_to_node.assign(static_cast<size_t>(raw_count), -1);
  std::vector<char> present(static_cast<size_t>(raw_count), 0);
  for (int32_t id : raw.data) {
    if (id < 0 || id >= raw_count) throw InvalidArgument("relabel: id " + std::to_string(id) + " out of range");
    present[static_cast<size_t>(id)] = 1;
  }
  for (int i = 0; i < raw_count; ++i) {
    if (!present[static_cast<size_t>(i)]) continue;
    r.raw_to_node[static_cast<size_t>(i)] = static_cast<int32_t>(r.node_to_raw.size());
    r.node_to_raw.push_back(i);
  }
  r.labels = LabelMap(raw.width, raw.height);
  for (size_t p = 0; p < raw.pixels(); ++p) r.labels.data[p] = r.raw_to_node[static_cast<size_t>(raw.data[p])];
  return r;
}

std::vector<float> pool_features(std::span<const float> features, int channels, std::span<const float> q,
                                 const CandidateTable& table) {
  const CellGrid& g = table.grid;
  nn::NoGradGuard no_grad;
  const auto f = nn::Tensor<float>::from({channels, g.height, g.width}, {features.begin(), features.end()});
  const auto qt = nn::Tensor<float>::from({kCandidates, g.height, g.width}, {q.begin(), q.end()});
  const auto pooled = aggregate(f, qt, table);
  return {pooled.data().begin(), pooled.data().end()};
}

std::vector<Edge> build_edges(const LabelMap& m) {
  std::vector<Edge> edges;
  auto add = [&](int32_t a, int32_t b) {
    if (a != b) edges.emplace_back(std::min(a, b), std::max(a, b));
  };
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (x + 1 < m.width) add(m.at(x, y), m.at(x + 1, y));
      if (y + 1 < m.height) add(m.at(x, y), m.at(x, y + 1));
    }
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

std::vector<uint8_t> aggregate_labels(const LabelMap& m, int n_nodes, const Mask& building) {
  if (m.width != building.width || m.height != building.height) throw InvalidArgument("aggregate_labels: size mismatch");
  std::vector<long> pos(static_cast<size_t>(n_nodes), 0), tot(static_cast<size_t>(n_nodes), 0);
  for (size_t p = 0; p < m.pixels(); ++p) {
    const auto id = static_cast<size_t>(m.data[p]);
    ++tot[id];
    pos[id] += building.data[p] ? 1 : 0;
  }
  std::vector<uint8_t> b(static_cast<size_t>(n_nodes), 0);
  for (size_t i = 0; i < b.size(); ++i) b[i] = 2 * pos[i] > tot[i] ? 1 : 0;
  return b;
}

SpGraph build_graph(const SuperpixelResult& sp, const Mask* building) {
  const Relabeling r = relabel(sp.assignment, sp.grid.count());
  SpGraph g;
  g.n_nodes = static_cast<int>(r.node_to_raw.size());
  g.feat_channels = sp.feat_channels;
  g.raw_to_node = r.raw_to_node;
  g.node_to_raw = r.node_to_raw;

  const auto pooled = pool_features(sp.features, sp.feat_channels, sp.q, *candidate_table(sp.grid));
  const auto c = static_cast<size_t>(sp.feat_channels);
  g.node_feat.resize(static_cast<size_t>(g.n_nodes) * c);
  for (int i = 0; i < g.n_nodes; ++i) {
    const auto raw = static_cast<size_t>(r.node_to_raw[static_cast<size_t>(i)]);
    std::copy_n(pooled.begin() + static_cast<std::ptrdiff_t>(raw * c), c,
                g.node_feat.begin() + static_cast<std::ptrdiff_t>(static_cast<size_t>(i) * c));
  }

  g.area.assign(static_cast<size_t>(g.n_nodes), 0);
  g.centroid.assign(static_cast<size_t>(g.n_nodes), {0.0, 0.0});
  for (int y = 0; y < r.labels.height; ++y) {
    for (int x = 0; x < r.labels.width; ++x) {
      const auto id = static_cast<size_t>(r.labels.at(x, y));
      ++g.area[id];
      g.centroid[id][0] += x + 0.5;
      g.centroid[id][1] += y + 0.5;
    }
  }
  for (size_t i = 0; i < g.area.size(); ++i) {
    g.centroid[i][0] /= static_cast<double>(g.area[i]);
    g.centroid[i][1] /= static_cast<double>(g.area[i]);
  }
  g.edges = build_edges(r.labels);
  if (building) g.node_label = aggregate_labels(r.labels, g.n_nodes, *building);
  return g;
}

Mask render_labels(const LabelMap& m, std::span<const uint8_t> labels) {
  Mask out(m.width, m.height);
  for (size_t p = 0; p < m.pixels(); ++p) out.data[p] = labels[static_cast<size_t>(m.data[p])] ? 1 : 0;
  return out;
}

nlohmann::json graph_to_json(const SpGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < g.n_nodes; ++i) {
    const auto u = static_cast<size_t>(i);
    nlohmann::json n{{"id", i}, {"centroid", {g.centroid[u][0], g.centroid[u][1]}}, {"area", g.area[u]}};
    n["prob"] = g.node_prob.empty() ? nlohmann::json(nullptr) : nlohmann::json(g.node_prob[u]);
    nodes.push_back(std::move(n));
  }
  nlohmann::json edges = nlohmann::json::array();
  for (size_t e = 0; e < g.edges.size(); ++e) {
    nlohmann::json ej{{"i", g.edges[e].first}, {"j", g.edges[e].second}};
    ej["alpha"] = g.edge_alpha.empty() ? nlohmann::json(nullptr) : nlohmann::json(g.edge_alpha[e]);
    edges.push_back(std::move(ej));
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

SpGraph graph_from_json(const nlohmann::json& j) {
  try {
    SpGraph g;
    const auto& nodes = j.at("nodes");
    g.n_nodes = static_cast<int>(nodes.size());
    for (const auto& n : nodes) {
      if (n.at("id").get<int>() != static_cast<int>(g.area.size())) throw FormatError("graph JSON: node ids must be 0..n-1 in order");
      g.area.push_back(n.value("area", 0L));
      const auto& c = n.value("centroid", nlohmann::json::array({0.0, 0.0}));
      g.centroid.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
      if (n.contains("prob") && !n["prob"].is_null()) g.node_prob.push_back(n["prob"].get<double>());
    }
    if (!g.node_prob.empty() && static_cast<int>(g.node_prob.size()) != g.n_nodes) throw FormatError("graph JSON: prob missing on some nodes");
    for (const auto& e : j.at("edges")) {
      int a = e.at("i").get<int>(), b = e.at("j").get<int>();
      if (a < 0 || b < 0 || a >= g.n_nodes || b >= g.n_nodes || a == b) throw FormatError("graph JSON: bad edge");
      g.edges.emplace_back(std::min(a, b), std::max(a, b));
      if (e.contains("alpha") && !e["alpha"].is_null()) g.edge_alpha.push_back(e["alpha"].get<double>());
    }
    if (!g.edge_alpha.empty() && g.edge_alpha.size() != g.edges.size()) throw FormatError("graph JSON: alpha missing on some edges");
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("graph JSON: ") + e.what());
  }
}

}  // namespace spgraph
