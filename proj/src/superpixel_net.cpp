#include "spgraph/superpixel_net.hpp"

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

nlohmann::json SuperpixelConfig::to_json() const {
  return {{"cell", cell},       {"feat_channels", feat_channels}, {"base_width", base_width},
          {"levels", levels},   {"lambda", lambda},               {"lr", lr},
          {"epochs", epochs},   {"batch", batch},                 {"crop", crop},
          {"seed", seed},       {"ablate_semantic", ablate_semantic},
          {"zero_init_heads", zero_init_heads}};
}

SuperpixelConfig SuperpixelConfig::from_json(const nlohmann::json& j) {
  SuperpixelConfig c;
  c.cell = j.value("cell", c.cell);
  c.feat_channels = j.value("feat_channels", c.feat_channels);
  c.base_width = j.value("base_width", c.base_width);
  c.levels = j.value("levels", c.levels);
  c.lambda = j.value("lambda", c.lambda);
  c.lr = j.value("lr", c.lr);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.crop = j.value("crop", c.crop);
  c.seed = j.value("seed", c.seed);
  c.ablate_semantic = j.value("ablate_semantic", c.ablate_semantic);
  c.zero_init_heads = j.value("zero_init_heads", c.zero_init_heads);
  return c;
}

namespace {

template <typename T>
Tensor<T> cell_coordinates(int width, int height, int cell) {
  const size_t plane = static_cast<size_t>(width) * height;
  std::vector<T> v(2 * plane);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const size_t p = static_cast<size_t>(y) * width + x;
      v[p] = (static_cast<T>(x % cell) + T(0.5)) / static_cast<T>(cell) - T(0.5);
      v[plane + p] = (static_cast<T>(y % cell) + T(0.5)) / static_cast<T>(cell) - T(0.5);
    }
  }
  return Tensor<T>::from({2, height, width}, std::move(v));
}

// Additive mask: 0 for valid candidates, a large negative value otherwise.
template <typename T>
Tensor<T> candidate_bias(const CandidateTable& table) {
  std::vector<T> v(table.ids.size());
  for (size_t i = 0; i < v.size(); ++i) v[i] = table.ids[i] >= 0 ? T(0) : T(-1e30);
  return Tensor<T>::from({kCandidates, table.grid.height, table.grid.width}, std::move(v));
}

int level_width(const SuperpixelConfig& c, int level) {
  return c.base_width * std::min(1 << level, 4);
}

}  // namespace

template <typename T>
SuperpixelNet<T>::SuperpixelNet(const SuperpixelConfig& config) : config_(config) {
  if (config_.levels < 1 || config_.cell < 1 || config_.feat_channels < 1 || config_.base_width < 1) {
    throw InvalidArgument("SuperpixelNet: invalid configuration");
  }
  convs_.reserve(static_cast<size_t>(4 * config_.levels + 4));
  std::mt19937_64 rng(config_.seed);
  auto init = [&](Conv& c, bool zero) {
    auto w = c.w.mutable_data();
    if (zero) return;
    const int64_t fan_in = c.w.dim(1) * c.w.dim(2) * c.w.dim(3);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (T& v : w) v = static_cast<T>(dist(rng));
  };

  const int levels = config_.levels;
  for (int l = 0; l < levels; ++l) {
    const int cin = l == 0 ? 5 : level_width(config_, l - 1);
    const int cout = level_width(config_, l);
    init(add_conv("enc" + std::to_string(l) + ".down", cin, cout, 3, l == 0 ? 1 : 2), false);
    down_.push_back(static_cast<int>(convs_.size()) - 1);
    init(add_conv("enc" + std::to_string(l) + ".res_a", cout, cout, 3, 1), false);
    res_a_.push_back(static_cast<int>(convs_.size()) - 1);
    init(add_conv("enc" + std::to_string(l) + ".res_b", cout, cout, 3, 1), false);
    res_b_.push_back(static_cast<int>(convs_.size()) - 1);
  }
  up_.assign(static_cast<size_t>(std::max(0, levels - 1)), -1);
  int below = level_width(config_, levels - 1);
  for (int l = levels - 2; l >= 0; --l) {
    const int cout = l == 0 ? config_.feat_channels : level_width(config_, l);
    init(add_conv("dec" + std::to_string(l), below + level_width(config_, l), cout, 3, 1), false);
    up_[static_cast<size_t>(l)] = static_cast<int>(convs_.size()) - 1;
    below = cout;
  }
  if (levels == 1) {
    init(add_conv("dec0", level_width(config_, 0), config_.feat_channels, 3, 1), false);
    up_.push_back(static_cast<int>(convs_.size()) - 1);
  }
  init(add_conv("head.assoc", config_.feat_channels + 2, kCandidates, 1, 1), config_.zero_init_heads);
  q_head_ = static_cast<int>(convs_.size()) - 1;
  init(add_conv("head.seg", config_.feat_channels, 2, 1, 1), config_.zero_init_heads);
  seg_head_ = static_cast<int>(convs_.size()) - 1;
}

template <typename T>
typename SuperpixelNet<T>::Conv& SuperpixelNet<T>::add_conv(const std::string& name, int cin, int cout, int k,
                                                            int stride, bool) {
  Conv c;
  c.w = Tensor<T>::zeros({cout, cin, k, k}, true);
  c.b = Tensor<T>::zeros({cout}, true);
  c.stride = stride;
  params_.push_back({name + ".w", c.w});
  params_.push_back({name + ".b", c.b});
  convs_.push_back(c);
  return convs_.back();
}

template <typename T>
Tensor<T> SuperpixelNet<T>::apply(const Conv& c, const Tensor<T>& x) const {
  return nn::conv2d(x, c.w, c.b, c.stride);
}

template <typename T>
Tensor<T> SuperpixelNet<T>::conv_norm_relu(const Conv& c, const Tensor<T>& x) const {
  return nn::relu(nn::instance_norm(apply(c, x)));
}

template <typename T>
Tensor<T> SuperpixelNet<T>::residual(const Conv& a, const Conv& b, const Tensor<T>& x) const {
  Tensor<T> y = nn::instance_norm(apply(b, conv_norm_relu(a, x)));
  return nn::relu(nn::add(x, y));
}

template <typename T>
SuperpixelOutput<T> SuperpixelNet<T>::forward(const Tensor<T>& rgb) const {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw InvalidArgument("forward: expected a [3,H,W] image");
  const int h = static_cast<int>(rgb.dim(1)), w = static_cast<int>(rgb.dim(2));
  const int factor = downsampling();
  if (h % factor != 0 || w % factor != 0) {
    throw InvalidArgument("forward: image " + std::to_string(w) + "x" + std::to_string(h) +
                          " is not a multiple of the downsampling factor " + std::to_string(factor));
  }
  const Tensor<T> coords = cell_coordinates<T>(w, h, config_.cell);
  const int levels = config_.levels;

  std::vector<Tensor<T>> skips;
  Tensor<T> x = nn::concat<T>({rgb, coords});
  for (int l = 0; l < levels; ++l) {
    x = conv_norm_relu(convs_[static_cast<size_t>(down_[static_cast<size_t>(l)])], x);
    x = residual(convs_[static_cast<size_t>(res_a_[static_cast<size_t>(l)])],
                 convs_[static_cast<size_t>(res_b_[static_cast<size_t>(l)])], x);
    skips.push_back(x);
  }
  if (levels == 1) {
    x = conv_norm_relu(convs_[static_cast<size_t>(up_[0])], x);
  }
  for (int l = levels - 2; l >= 0; --l) {
    x = nn::concat<T>({nn::upsample2x(x), skips[static_cast<size_t>(l)]});
    x = conv_norm_relu(convs_[static_cast<size_t>(up_[static_cast<size_t>(l)])], x);
  }

  SuperpixelOutput<T> out;
  out.features = x;
  const auto table = candidate_table(CellGrid(w, h, config_.cell));
  out.q_logits = nn::add(apply(convs_[static_cast<size_t>(q_head_)], nn::concat<T>({x, coords})),
                         candidate_bias<T>(*table));
  out.q = nn::softmax(out.q_logits, 0);
  out.seg_logits = apply(convs_[static_cast<size_t>(seg_head_)], x);
  return out;
}

template <typename T>
SuperpixelLosses<T> superpixel_losses(const SuperpixelNet<T>& net, const SuperpixelOutput<T>& out, const Mask& mask) {
  const auto table = candidate_table(CellGrid(mask.width, mask.height, net.config().cell));
  const Tensor<T> h = one_hot_tensor<T>(mask);
  const Tensor<T> h_rec = disperse(aggregate(h, out.q, *table), out.q, *table);
  const PositionPair<T> pos = positions(out.q, *table);
  SuperpixelLosses<T> l;
  l.sp = loss_superpixel(h, h_rec, pixel_positions<T>(table->grid), pos.reconstructed,
                         static_cast<T>(net.config().lambda));
  l.se = loss_semantic(h, out.seg_logits);
  l.total = net.config().ablate_semantic ? l.sp : nn::add(l.sp, l.se);
  return l;
}

template <typename T>
Tensor<T> rgb_tensor(const Raster<float>& rgb) {
  if (rgb.channels != 3) throw InvalidArgument("rgb_tensor: expected 3 channels");
  const size_t plane = rgb.pixels();
  std::vector<T> v(3 * plane);
  for (size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c) v[static_cast<size_t>(c) * plane + p] = static_cast<T>(rgb.data[p * 3 + static_cast<size_t>(c)]);
  return Tensor<T>::from({3, rgb.height, rgb.width}, std::move(v));
}

namespace {

struct Sample {
  Raster<float> rgb;
  Mask mask;
};

Sample crop_and_flip(const ImageTile& tile, int crop, int cell, std::mt19937_64& rng) {
  const int cw = (crop > 0 && crop < tile.width) ? crop : tile.width;
  const int ch = (crop > 0 && crop < tile.height) ? crop : tile.height;
  const int ox = cell * std::uniform_int_distribution<int>(0, (tile.width - cw) / cell)(rng);
  const int oy = cell * std::uniform_int_distribution<int>(0, (tile.height - ch) / cell)(rng);
  const bool fx = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  const bool fy = std::uniform_int_distribution<int>(0, 1)(rng) == 1;
  Sample s{Raster<float>(cw, ch, 3), Mask(cw, ch)};
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      const int sx = ox + (fx ? cw - 1 - x : x);
      const int sy = oy + (fy ? ch - 1 - y : y);
      for (int c = 0; c < 3; ++c) s.rgb.at(x, y, c) = tile.rgb.at(sx, sy, c);
      s.mask.at(x, y) = tile.mask.at(sx, sy);
    }
  }
  return s;
}

std::vector<nn::Parameter> as_parameters(SuperpixelNet<float>& net) {
  return {net.params().begin(), net.params().end()};
}

}  // namespace

SuperpixelTrainResult train_superpixel(SuperpixelNet<float>& net, const std::vector<ImageTile>& tiles,
                                       const EpochCallback& on_epoch) {
  const SuperpixelConfig& cfg = net.config();
  if (tiles.empty()) throw InvalidArgument("train_superpixel: empty training split");
  if (cfg.crop > 0 && cfg.crop % cfg.cell != 0) throw InvalidArgument("train_superpixel: crop must be a multiple of the cell size");

  nn::Adam adam(as_parameters(net), {static_cast<float>(cfg.lr)});
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  std::vector<size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), size_t{0});

  SuperpixelTrainResult result;
  double ema = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    // Cosine decay to a tenth of the base rate.
    const double progress = cfg.epochs > 1 ? static_cast<double>(epoch - 1) / (cfg.epochs - 1) : 0.0;
    adam.set_lr(static_cast<float>(cfg.lr * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(progress * 3.141592653589793)))));
    std::shuffle(order.begin(), order.end(), rng);

    double total = 0.0, sp = 0.0, se = 0.0;
    int pending = 0;
    for (size_t i : order) {
      const Sample s = crop_and_flip(tiles[i], cfg.crop, cfg.cell, rng);
      const auto out = net.forward(rgb_tensor<float>(s.rgb));
      SuperpixelLosses<float> losses;
      try {
        losses = superpixel_losses(net, out, s.mask);
      } catch (const NumericError& e) {
        throw NumericError("superpixel training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      losses.total.backward();
      total += losses.total.item();
      sp += losses.sp.item();
      se += losses.se.item();
      if (++pending == cfg.batch) {
        adam.step(static_cast<float>(pending));
        pending = 0;
      }
    }
    if (pending > 0) adam.step(static_cast<float>(pending));

    const double n = static_cast<double>(tiles.size());
    EpochLog log;
    log.epoch = epoch;
    log.loss = total / n;
    log.loss_sp = sp / n;
    log.loss_se = se / n;
    if (!std::isfinite(log.loss)) throw NumericError("superpixel training diverged at epoch " + std::to_string(epoch));
    ema = epoch == 1 ? log.loss : 0.7 * ema + 0.3 * log.loss;
    log.ema = ema;
    log.smoothed = epoch == 1 ? ema : std::min(result.history.back().smoothed, ema);
    log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return result;
}

void save_superpixel(const std::filesystem::path& path, const SuperpixelNet<float>& net,
                     const SuperpixelTrainResult* history) {
  nlohmann::json meta;
  meta["kind"] = "superpixel";
  meta["config"] = net.config().to_json();
  if (history) {
    meta["history"] = nlohmann::json::array();
    for (const auto& h : history->history) {
      meta["history"].push_back({{"epoch", h.epoch}, {"loss", h.loss}, {"loss_sp", h.loss_sp},
                                 {"loss_se", h.loss_se}, {"smoothed", h.smoothed}});
    }
  }
  nn::save_checkpoint(path, {net.params().begin(), net.params().end()}, meta);
}

SuperpixelNet<float> load_superpixel(const std::filesystem::path& path) {
  const nn::Checkpoint ckpt = nn::load_checkpoint(path);
  if (ckpt.meta.value("kind", std::string()) != "superpixel") throw FormatError(path.string() + " is not a superpixel checkpoint");
  SuperpixelNet<float> net(SuperpixelConfig::from_json(ckpt.meta.at("config")));
  std::vector<nn::Parameter> params(net.params().begin(), net.params().end());
  nn::restore_parameters(ckpt, params);
  return net;
}

SuperpixelResult run_superpixel(const SuperpixelNet<float>& net, const Raster<float>& rgb) {
  nn::NoGradGuard no_grad;
  const auto out = net.forward(rgb_tensor<float>(rgb));
  SuperpixelResult r;
  r.grid = CellGrid(rgb.width, rgb.height, net.config().cell);
  r.q.assign(out.q.data().begin(), out.q.data().end());
  r.features.assign(out.features.data().begin(), out.features.data().end());
  r.feat_channels = static_cast<int>(out.features.dim(0));
  const size_t plane = rgb.pixels();
  r.seg_prob.resize(plane);
  const auto s = out.seg_logits.data();
  for (size_t p = 0; p < plane; ++p) r.seg_prob[p] = 1.0f / (1.0f + std::exp(s[p] - s[plane + p]));
  r.assignment = hard_assign<float>(r.q, *candidate_table(r.grid));
  return r;
}

template class SuperpixelNet<float>;
template class SuperpixelNet<double>;
template SuperpixelLosses<float> superpixel_losses(const SuperpixelNet<float>&, const SuperpixelOutput<float>&, const Mask&);
template SuperpixelLosses<double> superpixel_losses(const SuperpixelNet<double>&, const SuperpixelOutput<double>&, const Mask&);
template Tensor<float> rgb_tensor<float>(const Raster<float>&);
template Tensor<double> rgb_tensor<double>(const Raster<float>&);

}  // namespace spgraph
