#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spgraph/dataset.hpp"
#include "spgraph/nn/tensor.hpp"
#include "spgraph/superpixel.hpp"

namespace spgraph {

struct SuperpixelConfig {
  int cell = 16;            // g
  int feat_channels = 32;   // C_f
  int base_width = 16;
  int levels = 4;           // resolution levels; input must be divisible by 2^(levels-1)
  double lambda = 0.003;    // position term weight, positions in cell units
  double lr = 1e-3;
  int epochs = 30;
  int batch = 4;
  int crop = 128;           // training crop side (multiple of cell); 0 = whole tile
  uint64_t seed = 1;
  bool ablate_semantic = false;  // drop L_se from the training objective
  bool zero_init_heads = true;

  nlohmann::json to_json() const;
  static SuperpixelConfig from_json(const nlohmann::json& j);
};

template <typename T>
struct SuperpixelOutput {
  nn::Tensor<T> q_logits;    // [9,H,W], invalid candidates at a large negative value
  nn::Tensor<T> q;           // [9,H,W]
  nn::Tensor<T> seg_logits;  // [2,H,W]
  nn::Tensor<T> features;    // [C_f,H,W]
};

// Encoder-decoder feature extractor with a 1x1 association head (9 logits)
// and a 1x1 segmentation head (2 logits).
template <typename T>
class SuperpixelNet {
 public:
  explicit SuperpixelNet(const SuperpixelConfig& config);

  const SuperpixelConfig& config() const { return config_; }
  std::vector<nn::NamedTensor<T>>& params() { return params_; }
  const std::vector<nn::NamedTensor<T>>& params() const { return params_; }

  // rgb: [3,H,W] in [0,1]. Throws InvalidArgument when H or W is not a
  // multiple of the downsampling factor.
  SuperpixelOutput<T> forward(const nn::Tensor<T>& rgb) const;
  int downsampling() const { return 1 << (config_.levels - 1); }

 private:
  struct Conv {
    nn::Tensor<T> w, b;
    int stride = 1;
  };
  Conv& add_conv(const std::string& name, int cin, int cout, int k, int stride, bool zero = false);
  nn::Tensor<T> apply(const Conv& c, const nn::Tensor<T>& x) const;
  nn::Tensor<T> conv_norm_relu(const Conv& c, const nn::Tensor<T>& x) const;
  nn::Tensor<T> residual(const Conv& a, const Conv& b, const nn::Tensor<T>& x) const;

  SuperpixelConfig config_;
  std::vector<nn::NamedTensor<T>> params_;
  std::vector<Conv> convs_;
  // Indices into convs_.
  std::vector<int> down_, res_a_, res_b_, up_;
  int q_head_ = -1, seg_head_ = -1;
};

// Loss terms for one image.
template <typename T>
struct SuperpixelLosses {
  nn::Tensor<T> sp;
  nn::Tensor<T> se;
  nn::Tensor<T> total;
};

template <typename T>
SuperpixelLosses<T> superpixel_losses(const SuperpixelNet<T>& net, const SuperpixelOutput<T>& out,
                                      const Mask& mask);

// [3,H,W] tensor from an interleaved RGB raster.
template <typename T>
nn::Tensor<T> rgb_tensor(const Raster<float>& rgb);

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;
  double loss_sp = 0.0;
  double loss_se = 0.0;
  double ema = 0.0;       // exponential moving average, weight 0.3 on the newest epoch
  double smoothed = 0.0;  // running minimum of ema
  double seconds = 0.0;
};

struct SuperpixelTrainResult {
  std::vector<EpochLog> history;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Trains in single precision on the given tiles. Throws NumericError (with
// the epoch number) if the loss diverges.
SuperpixelTrainResult train_superpixel(SuperpixelNet<float>& net, const std::vector<ImageTile>& tiles,
                                       const EpochCallback& on_epoch = {});

void save_superpixel(const std::filesystem::path& path, const SuperpixelNet<float>& net,
                     const SuperpixelTrainResult* history = nullptr);
SuperpixelNet<float> load_superpixel(const std::filesystem::path& path);

// Inference products for one image.
struct SuperpixelResult {
  CellGrid grid;
  std::vector<float> q;         // [9,H,W]
  std::vector<float> features;  // [C_f,H,W]
  std::vector<float> seg_prob;  // [H,W] building probability from the segmentation head
  LabelMap assignment;          // raw grid ids (hard_assign)
  int feat_channels = 0;
};

SuperpixelResult run_superpixel(const SuperpixelNet<float>& net, const Raster<float>& rgb);

}  // namespace spgraph
