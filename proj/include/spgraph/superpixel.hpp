#pragma once

// Fixed-lattice superpixel association: each pixel holds a soft assignment
// over the 3x3 block of grid cells around its own cell. Aggregation pools
// pixel values into superpixels weighted by that assignment; dispersion maps
// superpixel values back to pixels.

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "spgraph/image.hpp"
#include "spgraph/nn/tensor.hpp"

namespace spgraph {

inline constexpr int kCandidates = 9;

struct CellGrid {
  int width = 0;
  int height = 0;
  int cell = 16;
  int rows = 0;  // ceil(height / cell)
  int cols = 0;  // ceil(width / cell)

  CellGrid() = default;
  CellGrid(int width, int height, int cell);

  int count() const { return rows * cols; }
  int row_of(int y) const { return y / cell; }
  int col_of(int x) const { return x / cell; }
  int cell_of(int x, int y) const { return row_of(y) * cols + col_of(x); }
};

// Candidate k = (dr + 1) * 3 + (dc + 1); out-of-range cells get id -1.
struct Neighborhood {
  std::array<int, kCandidates> ids{};
  std::array<bool, kCandidates> valid{};
};

Neighborhood neighborhood(int x, int y, const CellGrid& grid);

// Candidate ids for every pixel, laid out [9, H, W] like the association tensor.
struct CandidateTable {
  CellGrid grid;
  std::vector<int32_t> ids;

  explicit CandidateTable(const CellGrid& grid);
  int32_t at(int k, size_t pixel) const { return ids[static_cast<size_t>(k) * grid.width * grid.height + pixel]; }
};

std::shared_ptr<const CandidateTable> candidate_table(const CellGrid& grid);

// Z_n below this marks an empty superpixel.
inline constexpr double kEmptyMass = 1e-8;

// Per-superpixel normalizer Z_n = sum_p Q_p(n) from association values [9,H,W].
template <typename T>
std::vector<T> superpixel_mass(std::span<const T> q, const CandidateTable& table);

// H_n = sum_p v_p Q_p(n) / Z_n for values [k,H,W] -> [N,k]. An empty
// superpixel (Z_n < kEmptyMass) takes the value of its cell-centre pixel.
template <typename T>
nn::Tensor<T> aggregate(const nn::Tensor<T>& values, const nn::Tensor<T>& q, const CandidateTable& table);

// h_p = sum over valid candidates of H_n Q_p(n): [N,k] -> [k,H,W].
template <typename T>
nn::Tensor<T> disperse(const nn::Tensor<T>& superpixel_values, const nn::Tensor<T>& q,
                       const CandidateTable& table);

// Pixel positions (x/g, y/g) as a constant [2,H,W] tensor.
template <typename T>
nn::Tensor<T> pixel_positions(const CellGrid& grid);

template <typename T>
struct PositionPair {
  nn::Tensor<T> centroids;      // [N,2]
  nn::Tensor<T> reconstructed;  // [2,H,W]
};

template <typename T>
PositionPair<T> positions(const nn::Tensor<T>& q, const CandidateTable& table);

// L_sp = CE(h, h_rec) + lambda * mean_p ||p - p_rec||, h_rec clamped to [eps, 1-eps].
template <typename T>
nn::Tensor<T> loss_superpixel(const nn::Tensor<T>& h, const nn::Tensor<T>& h_rec, const nn::Tensor<T>& p,
                              const nn::Tensor<T>& p_rec, T lambda, T eps = T(1e-6));
// L_se = CE(b, softmax(b_logits)) over [2,H,W].
template <typename T>
nn::Tensor<T> loss_semantic(const nn::Tensor<T>& b, const nn::Tensor<T>& b_logits);

// M_p = argmax over valid candidates, ties to the smallest superpixel id.
template <typename T>
LabelMap hard_assign(std::span<const T> q, const CandidateTable& table);

// One-hot [2,H,W] tensor from a binary mask (channel 0 background).
template <typename T>
nn::Tensor<T> one_hot_tensor(const Mask& mask);

}  // namespace spgraph
