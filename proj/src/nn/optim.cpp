#include "spgraph/nn/optim.hpp"

#include <cmath>

namespace spgraph::nn {

Adam::Adam(std::vector<Parameter> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
    v_.emplace_back(static_cast<size_t>(p.tensor.numel()), 0.0f);
  }
}

void Adam::step(float grad_scale) {
  ++t_;
  const float bc1 = 1.0f - std::pow(config_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(config_.beta2, static_cast<float>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& tensor = params_[i].tensor;
    auto g = tensor.grad();
    if (g.empty()) continue;
    auto w = tensor.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (size_t k = 0; k < w.size(); ++k) {
      const float gk = g[k] / grad_scale;
      m[k] = config_.beta1 * m[k] + (1.0f - config_.beta1) * gk;
      v[k] = config_.beta2 * v[k] + (1.0f - config_.beta2) * gk * gk;
      w[k] -= config_.lr * (m[k] / bc1) / (std::sqrt(v[k] / bc2) + config_.eps);
    }
  }
  zero_grad();
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace spgraph::nn
