#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spgraph/graph.hpp"
#include "spgraph/nn/tensor.hpp"

namespace spgraph {

// How per-direction attention becomes one weight per undirected edge, after
// each row is divided by its maximum.
enum class AlphaSymmetrization { Mean, Min };

std::string to_string(AlphaSymmetrization s);
AlphaSymmetrization parse_symmetrization(const std::string& s);

struct GatConfig {
  int in_channels = 32;
  int hidden = 64;
  int layers = 4;
  double slope = 0.2;  // LeakyReLU inside the attention score
  double lr = 1e-3;
  int epochs = 150;
  uint64_t seed = 1;
  AlphaSymmetrization symmetrize = AlphaSymmetrization::Min;

  nlohmann::json to_json() const;
  static GatConfig from_json(const nlohmann::json& j);
};

// Directed pairs (receiver i, sender j): the n self-loops first, then both
// directions of every undirected edge e at 2e (i<j) and 2e+1 (j<i).
struct DirectedEdges {
  int n_nodes = 0;
  std::vector<int64_t> receiver;
  std::vector<int64_t> sender;
};

DirectedEdges directed_edges(int n_nodes, const std::vector<Edge>& edges);

template <typename T>
struct GatOutput {
  nn::Tensor<T> embedding;           // [N, hidden]
  nn::Tensor<T> logits;              // [N, 2]
  std::vector<nn::Tensor<T>> alpha;  // per layer, [pairs] in DirectedEdges order
};

template <typename T>
class GatModel {
 public:
  explicit GatModel(const GatConfig& config);

  const GatConfig& config() const { return config_; }
  std::vector<nn::NamedTensor<T>>& params() { return params_; }
  const std::vector<nn::NamedTensor<T>>& params() const { return params_; }

  // x: [N, in_channels].
  GatOutput<T> forward(const nn::Tensor<T>& x, const DirectedEdges& edges) const;

  // One attention layer: V_i = sum_j alpha_ij Theta V_j over j in N(i) and i.
  // Returns (V, alpha) without the inter-layer activation.
  std::pair<nn::Tensor<T>, nn::Tensor<T>> layer(int l, const nn::Tensor<T>& x, const DirectedEdges& edges) const;

 private:
  struct Layer {
    nn::Tensor<T> theta;  // [C_in, C_out]
    nn::Tensor<T> a_dst;  // [C_out, 1], half of a applied to the receiver
    nn::Tensor<T> a_src;  // [C_out, 1], half applied to the sender
  };
  GatConfig config_;
  std::vector<Layer> layers_;
  nn::Tensor<T> head_w_, head_b_;
  std::vector<nn::NamedTensor<T>> params_;
};

// Mean cross-entropy over nodes of softmax(logits) against B.
template <typename T>
nn::Tensor<T> loss_g(const nn::Tensor<T>& logits, const std::vector<uint8_t>& labels);

// Node feature tensor [N, C] from a graph.
template <typename T>
nn::Tensor<T> node_features(const SpGraph& g);

// One weight in [0,1] per undirected edge from the last layer's attention.
std::vector<double> edge_similarity(std::span<const float> alpha, const DirectedEdges& edges, size_t n_edges,
                                    AlphaSymmetrization mode);

struct GatEpochLog {
  int epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double ema = 0.0;       // exponential moving average, weight 0.3 on the newest epoch
  double smoothed = 0.0;  // running minimum of ema
  double seconds = 0.0;
};

struct GatTrainResult {
  std::vector<GatEpochLog> history;
};

// Graphs must carry node_label. One Adam step per graph, shuffled each epoch.
GatTrainResult train_gat(GatModel<float>& model, const std::vector<SpGraph>& graphs,
                         const std::function<void(const GatEpochLog&)>& on_epoch = {});

// Fills node_prob (softmax class 1) and edge_alpha.
void run_gat(const GatModel<float>& model, SpGraph& graph);

void save_gat(const std::filesystem::path& path, const GatModel<float>& model, const GatTrainResult* history = nullptr);
GatModel<float> load_gat(const std::filesystem::path& path);

}  // namespace spgraph
