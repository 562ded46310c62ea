#include "spgraph/gat.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include "spgraph/errors.hpp"
#include "spgraph/nn/checkpoint.hpp"
#include "spgraph/nn/ops.hpp"
#include "spgraph/nn/optim.hpp"

namespace spgraph {

using nn::Tensor;

std::string to_string(AlphaSymmetrization s) { return s == AlphaSymmetrization::Mean ? "mean" : "min"; }

AlphaSymmetrization parse_symmetrization(const std::string& s) {
  if (s == "mean") return AlphaSymmetrization::Mean;
  if (s == "min") return AlphaSymmetrization::Min;
  throw InvalidArgument("unknown symmetrization '" + s + "' (expected mean or min)");
}

nlohmann::json GatConfig::to_json() const {
  return {{"in_channels", in_channels}, {"hidden", hidden}, {"layers", layers},
          {"slope", slope},             {"lr", lr},         {"epochs", epochs},
          {"seed", seed},               {"symmetrize", to_string(symmetrize)}};
}

GatConfig GatConfig::from_json(const nlohmann::json& j) {
  GatConfig c;
  c.in_channels = j.value("in_channels", c.in_channels);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.slope = j.value("slope", c.slope);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.symmetrize = parse_symmetrization(j.value("symmetrize", to_string(c.symmetrize)));
  return c;
}

DirectedEdges directed_edges(int n_nodes, const std::vector<Edge>& edges) {
  DirectedEdges d;
  d.n_nodes = n_nodes;
  d.receiver.reserve(static_cast<size_t>(n_nodes) + 2 * edges.size());
  d.sender.reserve(d.receiver.capacity());
  for (int i = 0; i < n_nodes; ++i) {
    d.receiver.push_back(i);
    d.sender.push_back(i);
  }
  for (const auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n_nodes || b >= n_nodes || a == b) throw InvalidArgument("directed_edges: bad edge");
    d.receiver.push_back(a);
    d.sender.push_back(b);
    d.receiver.push_back(b);
    d.sender.push_back(a);
  }
  return d;
}

template <typename T>
GatModel<T>::GatModel(const GatConfig& config) : config_(config) {
  if (config_.layers < 1 || config_.in_channels < 1 || config_.hidden < 1) throw InvalidArgument("GatModel: invalid configuration");
  std::mt19937_64 rng(config_.seed);
  auto glorot = [&](int64_t rows, int64_t cols) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    std::vector<T> v(static_cast<size_t>(rows * cols));
    for (T& x : v) x = static_cast<T>(dist(rng));
    return Tensor<T>::from({rows, cols}, std::move(v), true);
  };
  int cin = config_.in_channels;
  for (int l = 0; l < config_.layers; ++l) {
    Layer layer{glorot(cin, config_.hidden), glorot(config_.hidden, 1), glorot(config_.hidden, 1)};
    const std::string p = "gat" + std::to_string(l);
    params_.push_back({p + ".theta", layer.theta});
    params_.push_back({p + ".a_dst", layer.a_dst});
    params_.push_back({p + ".a_src", layer.a_src});
    layers_.push_back(layer);
    cin = config_.hidden;
  }
  head_w_ = glorot(config_.hidden, 2);
  head_b_ = Tensor<T>::zeros({2}, true);
  params_.push_back({"head.w", head_w_});
  params_.push_back({"head.b", head_b_});
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> GatModel<T>::layer(int l, const Tensor<T>& x, const DirectedEdges& d) const {
  const Layer& L = layers_.at(static_cast<size_t>(l));
  const int64_t n = d.n_nodes;
  if (x.rank() != 2 || x.dim(0) != n) throw InvalidArgument("GAT layer: features " + nn::shape_str(x.shape()) + " for " + std::to_string(n) + " nodes");
  const Tensor<T> z = nn::matmul(x, L.theta);
  const Tensor<T> s_dst = nn::reshape(nn::matmul(z, L.a_dst), {n});
  const Tensor<T> s_src = nn::reshape(nn::matmul(z, L.a_src), {n});
  const Tensor<T> score = nn::leaky_relu(nn::add(nn::gather_rows(s_dst, d.receiver), nn::gather_rows(s_src, d.sender)),
                                         static_cast<T>(config_.slope));
  Tensor<T> alpha = nn::segment_softmax(score, d.receiver, n);
  Tensor<T> out = nn::scatter_add_rows(nn::mul_rows(nn::gather_rows(z, d.sender), alpha), d.receiver, n);
  return {out, alpha};
}

template <typename T>
GatOutput<T> GatModel<T>::forward(const Tensor<T>& x, const DirectedEdges& d) const {
  GatOutput<T> out;
  Tensor<T> v = x;
  for (int l = 0; l < config_.layers; ++l) {
    auto [next, alpha] = layer(l, v, d);
    out.alpha.push_back(alpha);
    v = l + 1 < config_.layers ? nn::relu(next) : next;
  }
  out.embedding = v;
  out.logits = nn::linear(nn::relu(v), head_w_, head_b_);
  return out;
}

template <typename T>
Tensor<T> loss_g(const Tensor<T>& logits, const std::vector<uint8_t>& labels) {
  if (logits.rank() != 2 || logits.dim(1) != 2 || logits.dim(0) != static_cast<int64_t>(labels.size())) {
    throw InvalidArgument("loss_g: logits " + nn::shape_str(logits.shape()) + " for " + std::to_string(labels.size()) + " labels");
  }
  std::vector<T> target(labels.size() * 2, T(0));
  for (size_t i = 0; i < labels.size(); ++i) target[2 * i + (labels[i] ? 1 : 0)] = T(1);
  Tensor<T> loss = nn::cross_entropy_logits(Tensor<T>::from(logits.shape(), std::move(target)), logits, 1);
  if (!std::isfinite(static_cast<double>(loss.item()))) throw NumericError("loss_g is not finite");
  return loss;
}

template <typename T>
Tensor<T> node_features(const SpGraph& g) {
  std::vector<T> v(g.node_feat.begin(), g.node_feat.end());
  return Tensor<T>::from({g.n_nodes, g.feat_channels}, std::move(v));
}

std::vector<double> edge_similarity(std::span<const float> alpha, const DirectedEdges& d, size_t n_edges,
                                    AlphaSymmetrization mode) {
  const size_t n = static_cast<size_t>(d.n_nodes);
  if (alpha.size() != n + 2 * n_edges) throw InvalidArgument("edge_similarity: attention length mismatch");
  std::vector<double> row_max(n, 0.0);
  for (size_t e = 0; e < alpha.size(); ++e) {
    const auto i = static_cast<size_t>(d.receiver[e]);
    row_max[i] = std::max(row_max[i], static_cast<double>(alpha[e]));
  }
  auto norm = [&](size_t e) {
    const double m = row_max[static_cast<size_t>(d.receiver[e])];
    return m > 0 ? static_cast<double>(alpha[e]) / m : 0.0;
  };
  std::vector<double> out(n_edges);
  for (size_t e = 0; e < n_edges; ++e) {
    const double ab = norm(n + 2 * e), ba = norm(n + 2 * e + 1);
    out[e] = mode == AlphaSymmetrization::Mean ? 0.5 * (ab + ba) : std::min(ab, ba);
  }
  return out;
}

GatTrainResult train_gat(GatModel<float>& model, const std::vector<SpGraph>& graphs,
                         const std::function<void(const GatEpochLog&)>& on_epoch) {
  if (graphs.empty()) throw InvalidArgument("train_gat: no training graphs");
  std::vector<DirectedEdges> dir;
  std::vector<Tensor<float>> feats;
  for (const auto& g : graphs) {
    if (static_cast<int>(g.node_label.size()) != g.n_nodes) throw InvalidArgument("train_gat: graph without node labels");
    if (g.feat_channels != model.config().in_channels) throw InvalidArgument("train_gat: feature width does not match the model");
    dir.push_back(directed_edges(g.n_nodes, g.edges));
    feats.push_back(node_features<float>(g));
  }
  const GatConfig& cfg = model.config();
  nn::Adam adam({model.params().begin(), model.params().end()}, {static_cast<float>(cfg.lr)});
  std::mt19937_64 rng(cfg.seed ^ 0x6a09e667f3bcc908ull);
  std::vector<size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), size_t{0});

  GatTrainResult result;
  double ema = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Cosine decay to a tenth of the base rate.
    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch - 1) / (cfg.epochs - 1) : 0.0;
    adam.set_lr(static_cast<float>(cfg.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(progress * 3.141592653589793)))));
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    long correct = 0, count = 0;
    for (size_t k : order) {
      const auto out = model.forward(feats[k], dir[k]);
      Tensor<float> loss;
      try {
        loss = loss_g(out.logits, graphs[k].node_label);
      } catch (const NumericError&) {
        throw NumericError("GAT training diverged at epoch " + std::to_string(epoch));
      }
      loss.backward();
      adam.step();
      total += loss.item();
      const auto lg = out.logits.data();
      for (int i = 0; i < graphs[k].n_nodes; ++i) {
        const bool pred = lg[static_cast<size_t>(2 * i + 1)] > lg[static_cast<size_t>(2 * i)];
        correct += pred == (graphs[k].node_label[static_cast<size_t>(i)] != 0) ? 1 : 0;
      }
      count += graphs[k].n_nodes;
    }
    GatEpochLog log;
    log.epoch = epoch;
    log.loss = total / static_cast<double>(graphs.size());
    log.accuracy = count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0;
    ema = epoch == 1 ? log.loss : 0.7 * ema + 0.3 * log.loss;
    log.ema = ema;
    log.smoothed = epoch == 1 ? ema : std::min(result.history.back().smoothed, ema);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

void run_gat(const GatModel<float>& model, SpGraph& g) {
  nn::NoGradGuard no_grad;
  const DirectedEdges d = directed_edges(g.n_nodes, g.edges);
  const auto out = model.forward(node_features<float>(g), d);
  const auto lg = out.logits.data();
  g.node_prob.resize(static_cast<size_t>(g.n_nodes));
  for (size_t i = 0; i < g.node_prob.size(); ++i) {
    g.node_prob[i] = 1.0 / (1.0 + std::exp(static_cast<double>(lg[2 * i]) - static_cast<double>(lg[2 * i + 1])));
  }
  g.edge_alpha = edge_similarity(out.alpha.back().data(), d, g.edges.size(), model.config().symmetrize);
}

void save_gat(const std::filesystem::path& path, const GatModel<float>& model, const GatTrainResult* history) {
  nlohmann::json meta{{"kind", "gat"}, {"config", model.config().to_json()}};
  if (history) {
    meta["history"] = nlohmann::json::array();
    for (const auto& h : history->history)
      meta["history"].push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"accuracy", h.accuracy}, {"smoothed", h.smoothed}});
  }
  nn::save_checkpoint(path, {model.params().begin(), model.params().end()}, meta);
}

GatModel<float> load_gat(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.meta.value("kind", std::string()) != "gat") throw FormatError(path.string() + " is not a GAT checkpoint");
  GatModel<float> model(GatConfig::from_json(ckpt.meta.at("config")));
  std::vector<nn::Parameter> params(model.params().begin(), model.params().end());
  nn::restore_parameters(ckpt, params);
  return model;
}

template class GatModel<float>;
template class GatModel<double>;
template Tensor<float> loss_g(const Tensor<float>&, const std::vector<uint8_t>&);
template Tensor<double> loss_g(const Tensor<double>&, const std::vector<uint8_t>&);
template Tensor<float> node_features<float>(const SpGraph&);
template Tensor<double> node_features<double>(const SpGraph&);

}  // namespace spgraph
