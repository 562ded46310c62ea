#pragma once

#include <vector>

#include "spgraph/nn/tensor.hpp"

namespace spgraph::nn {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

class Adam {
 public:
  Adam(std::vector<Parameter> params, AdamConfig config = {});

  // Applies one update from the accumulated gradients, divided by
  // `grad_scale` (the number of samples accumulated), then clears them.
  void step(float grad_scale = 1.0f);
  void zero_grad();

  const std::vector<Parameter>& params() const { return params_; }
  void set_lr(float lr) { config_.lr = lr; }

 private:
  std::vector<Parameter> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_, v_;
  long t_ = 0;
};

}  // namespace spgraph::nn
