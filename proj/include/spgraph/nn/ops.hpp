#pragma once

// Differentiable op set used by the superpixel and graph networks.
//
// Image tensors are single images laid out [C, H, W]. Node/edge tensors are
// [N, C] or [N]. Shape mismatches throw spgraph::InvalidArgument.

#include <cstdint>
#include <span>
#include <vector>

#include "spgraph/nn/tensor.hpp"

namespace spgraph::nn {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

// [M,K] x [K,N] -> [M,N]
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x [N,Cin] * w [Cin,Cout] + b [Cout]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Softmax along `axis` of a tensor of any rank.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, int axis);
template <typename T> Tensor<T> leaky_relu(const Tensor<T>& x, T slope);
template <typename T> Tensor<T> relu(const Tensor<T>& x);

// Per-channel normalization over H*W of a [C,H,W] tensor (no affine).
template <typename T> Tensor<T> instance_norm(const Tensor<T>& x, T eps = T(1e-5));

// x [Cin,H,W], w [Cout,Cin,k,k], b [Cout]; zero padding k/2; stride 1 or 2.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride = 1);
// Nearest-neighbour x2 upsampling of [C,H,W].
template <typename T> Tensor<T> upsample2x(const Tensor<T>& x);
// Concatenate along axis 0 (channels for images, rows for matrices).
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts);

// -mean over positions of sum_c target_c * log(clamp(probs_c, eps, 1-eps)),
// with the class axis first ([K, ...]). target is treated as a constant.
template <typename T>
Tensor<T> cross_entropy_probs(const Tensor<T>& target, const Tensor<T>& probs, T eps);
// Same with softmax(logits) along `axis`; used for [K,H,W] maps (axis 0)
// and [N,K] node logits (axis 1).
template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& target, const Tensor<T>& logits, int axis);

// Mean over positions of the Euclidean norm of (a - b) along axis 0.
// Subgradient 0 where a == b.
template <typename T> Tensor<T> mean_l2_distance(const Tensor<T>& a, const Tensor<T>& b);

// Row gather: out[e] = x[index[e]] for x [N] or [N,C].
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const int64_t> index);
// Row scatter-add: out[index[e]] += x[e], out has `slots` rows.
template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::span<const int64_t> index, int64_t slots);
// Softmax of x [E] within groups given by segment[e] in [0, segments).
template <typename T>
Tensor<T> segment_softmax(const Tensor<T>& x, std::span<const int64_t> segment, int64_t segments);
// x [E,C] scaled row-wise by w [E].
template <typename T> Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& w);

}  // namespace spgraph::nn
