#include "spgraph/superpixel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>

#include "spgraph/errors.hpp"
#include "spgraph/nn/ops.hpp"

namespace spgraph {

using nn::Node;
using nn::Tensor;

CellGrid::CellGrid(int w, int h, int g) : width(w), height(h), cell(g) {
  if (w <= 0 || h <= 0 || g <= 0) throw InvalidArgument("CellGrid: non-positive dimension");
  rows = (h + g - 1) / g;
  cols = (w + g - 1) / g;
}

Neighborhood neighborhood(int x, int y, const CellGrid& grid) {
  Neighborhood nb;
  const int r = grid.row_of(y), c = grid.col_of(x);
  for (int dr = -1; dr <= 1; ++dr) {
    for (int dc = -1; dc <= 1; ++dc) {
      const int k = (dr + 1) * 3 + (dc + 1);
      const int rr = r + dr, cc = c + dc;
      const bool ok = rr >= 0 && rr < grid.rows && cc >= 0 && cc < grid.cols;
      nb.valid[static_cast<size_t>(k)] = ok;
      nb.ids[static_cast<size_t>(k)] = ok ? rr * grid.cols + cc : -1;
    }
  }
  return nb;
}

CandidateTable::CandidateTable(const CellGrid& g) : grid(g) {
  const size_t plane = static_cast<size_t>(g.width) * g.height;
  ids.assign(kCandidates * plane, -1);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const Neighborhood nb = neighborhood(x, y, g);
      const size_t p = static_cast<size_t>(y) * g.width + x;
      for (int k = 0; k < kCandidates; ++k) ids[static_cast<size_t>(k) * plane + p] = nb.ids[static_cast<size_t>(k)];
    }
  }
}

std::shared_ptr<const CandidateTable> candidate_table(const CellGrid& grid) {
  static std::mutex mu;
  static std::map<std::array<int, 3>, std::shared_ptr<const CandidateTable>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[{grid.width, grid.height, grid.cell}];
  if (!slot) slot = std::make_shared<const CandidateTable>(grid);
  return slot;
}

namespace {

size_t plane_of(const CellGrid& g) { return static_cast<size_t>(g.width) * g.height; }

void check_association(const nn::Shape& qs, const CellGrid& g) {
  if (qs.size() != 3 || qs[0] != kCandidates || qs[1] != g.height || qs[2] != g.width) {
    throw InvalidArgument("association tensor " + nn::shape_str(qs) + " does not match grid " +
                          std::to_string(g.width) + "x" + std::to_string(g.height));
  }
}

size_t center_pixel(int n, const CellGrid& g) {
  const int r = n / g.cols, c = n % g.cols;
  const int y = std::min(g.height - 1, r * g.cell + g.cell / 2);
  const int x = std::min(g.width - 1, c * g.cell + g.cell / 2);
  return static_cast<size_t>(y) * g.width + x;
}

}  // namespace

template <typename T>
std::vector<T> superpixel_mass(std::span<const T> q, const CandidateTable& table) {
  const size_t plane = plane_of(table.grid);
  std::vector<T> z(static_cast<size_t>(table.grid.count()), T(0));
  for (int k = 0; k < kCandidates; ++k) {
    for (size_t p = 0; p < plane; ++p) {
      const int32_t id = table.at(k, p);
      if (id >= 0) z[static_cast<size_t>(id)] += q[static_cast<size_t>(k) * plane + p];
    }
  }
  return z;
}

template <typename T>
Tensor<T> aggregate(const Tensor<T>& values, const Tensor<T>& q, const CandidateTable& table) {
  const CellGrid& g = table.grid;
  check_association(q.shape(), g);
  if (values.rank() != 3 || values.dim(1) != g.height || values.dim(2) != g.width) {
    throw InvalidArgument("aggregate: values " + nn::shape_str(values.shape()) + " do not match the grid");
  }
  const size_t plane = plane_of(g);
  const int64_t k = values.dim(0);
  const int n = g.count();
  const auto v = values.data();
  const auto qv = q.data();

  std::vector<T> z = superpixel_mass<T>(qv, table);
  std::vector<T> out(static_cast<size_t>(n * k), T(0));
  for (int kc = 0; kc < kCandidates; ++kc) {
    for (size_t p = 0; p < plane; ++p) {
      const int32_t id = table.at(kc, p);
      if (id < 0) continue;
      const T w = qv[static_cast<size_t>(kc) * plane + p];
      if (w == T(0)) continue;
      T* dst = out.data() + static_cast<int64_t>(id) * k;
      for (int64_t c = 0; c < k; ++c) dst[c] += w * v[static_cast<size_t>(c) * plane + p];
    }
  }
  std::vector<bool> empty(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const T zi = z[static_cast<size_t>(i)];
    empty[static_cast<size_t>(i)] = zi < T(kEmptyMass);
    T* row = out.data() + static_cast<int64_t>(i) * k;
    if (empty[static_cast<size_t>(i)]) {
      const size_t cp = center_pixel(i, g);
      for (int64_t c = 0; c < k; ++c) row[c] = v[static_cast<size_t>(c) * plane + cp];
    } else {
      for (int64_t c = 0; c < k; ++c) row[c] /= zi;
    }
  }

  auto tab = candidate_table(g);
  return nn::make_result<T>({n, k}, std::move(out), {values.node(), q.node()},
                            [tab, k, n, plane, z = std::move(z), empty = std::move(empty)](Node<T>& nd) {
    auto& pv = nd.parents[0];
    auto& pq = nd.parents[1];
    const CellGrid& g = tab->grid;
    T* gv = pv->requires_grad ? pv->grad_data() : nullptr;
    T* gq = pq->requires_grad ? pq->grad_data() : nullptr;
    const auto& vv = pv->value;
    const auto& qq = pq->value;
    for (int kc = 0; kc < kCandidates; ++kc) {
      for (size_t p = 0; p < plane; ++p) {
        const int32_t id = tab->at(kc, p);
        if (id < 0 || empty[static_cast<size_t>(id)]) continue;
        const T inv_z = T(1) / z[static_cast<size_t>(id)];
        const T* go = nd.grad.data() + static_cast<int64_t>(id) * k;
        const T* hn = nd.value.data() + static_cast<int64_t>(id) * k;
        const size_t qi = static_cast<size_t>(kc) * plane + p;
        T dq = 0;
        for (int64_t c = 0; c < k; ++c) {
          const size_t vi = static_cast<size_t>(c) * plane + p;
          if (gv) gv[vi] += go[c] * qq[qi] * inv_z;
          dq += go[c] * (vv[vi] - hn[c]);
        }
        if (gq) gq[qi] += dq * inv_z;
      }
    }
    if (gv) {
      for (int i = 0; i < n; ++i) {
        if (!empty[static_cast<size_t>(i)]) continue;
        const size_t cp = center_pixel(i, g);
        for (int64_t c = 0; c < k; ++c) gv[static_cast<size_t>(c) * plane + cp] += nd.grad[static_cast<size_t>(i * k + c)];
      }
    }
  });
}

template <typename T>
Tensor<T> disperse(const Tensor<T>& sp, const Tensor<T>& q, const CandidateTable& table) {
  const CellGrid& g = table.grid;
  check_association(q.shape(), g);
  if (sp.rank() != 2 || sp.dim(0) != g.count()) {
    throw InvalidArgument("disperse: superpixel values " + nn::shape_str(sp.shape()) + " do not match the grid");
  }
  const size_t plane = plane_of(g);
  const int64_t k = sp.dim(1);
  const auto hv = sp.data();
  const auto qv = q.data();
  std::vector<T> out(static_cast<size_t>(k) * plane, T(0));
  for (int kc = 0; kc < kCandidates; ++kc) {
    for (size_t p = 0; p < plane; ++p) {
      const int32_t id = table.at(kc, p);
      if (id < 0) continue;
      const T w = qv[static_cast<size_t>(kc) * plane + p];
      const T* row = hv.data() + static_cast<int64_t>(id) * k;
      for (int64_t c = 0; c < k; ++c) out[static_cast<size_t>(c) * plane + p] += w * row[c];
    }
  }
  auto tab = candidate_table(g);
  return nn::make_result<T>({k, g.height, g.width}, std::move(out), {sp.node(), q.node()},
                            [tab, k, plane](Node<T>& nd) {
    auto& ph = nd.parents[0];
    auto& pq = nd.parents[1];
    T* gh = ph->requires_grad ? ph->grad_data() : nullptr;
    T* gq = pq->requires_grad ? pq->grad_data() : nullptr;
    for (int kc = 0; kc < kCandidates; ++kc) {
      for (size_t p = 0; p < plane; ++p) {
        const int32_t id = tab->at(kc, p);
        if (id < 0) continue;
        const size_t qi = static_cast<size_t>(kc) * plane + p;
        const T w = pq->value[qi];
        const T* row = ph->value.data() + static_cast<int64_t>(id) * k;
        T dq = 0;
        for (int64_t c = 0; c < k; ++c) {
          const T go = nd.grad[static_cast<size_t>(c) * plane + p];
          if (gh) gh[static_cast<int64_t>(id) * k + c] += go * w;
          dq += go * row[c];
        }
        if (gq) gq[qi] += dq;
      }
    }
  });
}

template <typename T>
Tensor<T> pixel_positions(const CellGrid& g) {
  const size_t plane = plane_of(g);
  std::vector<T> pos(2 * plane);
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const size_t p = static_cast<size_t>(y) * g.width + x;
      pos[p] = static_cast<T>(x) / static_cast<T>(g.cell);
      pos[plane + p] = static_cast<T>(y) / static_cast<T>(g.cell);
    }
  }
  return Tensor<T>::from({2, g.height, g.width}, std::move(pos));
}

template <typename T>
PositionPair<T> positions(const Tensor<T>& q, const CandidateTable& table) {
  Tensor<T> pos = pixel_positions<T>(table.grid);
  Tensor<T> centroids = aggregate(pos, q, table);
  Tensor<T> rec = disperse(centroids, q, table);
  return {centroids, rec};
}

template <typename T>
Tensor<T> loss_superpixel(const Tensor<T>& h, const Tensor<T>& h_rec, const Tensor<T>& p, const Tensor<T>& p_rec,
                          T lambda, T eps) {
  Tensor<T> recon = nn::cross_entropy_probs(h, h_rec, eps);
  Tensor<T> total = lambda == T(0) ? recon : nn::add(recon, nn::scale(nn::mean_l2_distance(p, p_rec), lambda));
  if (!std::isfinite(static_cast<double>(total.item()))) throw NumericError("superpixel loss is not finite");
  return total;
}

template <typename T>
Tensor<T> loss_semantic(const Tensor<T>& b, const Tensor<T>& b_logits) {
  Tensor<T> l = nn::cross_entropy_logits(b, b_logits, 0);
  if (!std::isfinite(static_cast<double>(l.item()))) throw NumericError("semantic loss is not finite");
  return l;
}

template <typename T>
LabelMap hard_assign(std::span<const T> q, const CandidateTable& table) {
  const CellGrid& g = table.grid;
  const size_t plane = plane_of(g);
  if (q.size() != kCandidates * plane) throw InvalidArgument("hard_assign: association size mismatch");
  LabelMap m(g.width, g.height);
  for (size_t p = 0; p < plane; ++p) {
    int32_t best_id = -1;
    T best = T(0);
    for (int k = 0; k < kCandidates; ++k) {
      const int32_t id = table.at(k, p);
      if (id < 0) continue;
      const T v = q[static_cast<size_t>(k) * plane + p];
      if (best_id < 0 || v > best || (v == best && id < best_id)) {
        best = v;
        best_id = id;
      }
    }
    m.data[p] = best_id;
  }
  return m;
}

template <typename T>
Tensor<T> one_hot_tensor(const Mask& mask) {
  const size_t plane = mask.pixels();
  std::vector<T> v(2 * plane);
  for (size_t p = 0; p < plane; ++p) {
    v[p] = mask.data[p] ? T(0) : T(1);
    v[plane + p] = mask.data[p] ? T(1) : T(0);
  }
  return Tensor<T>::from({2, mask.height, mask.width}, std::move(v));
}

#define SPGRAPH_INSTANTIATE_SUPERPIXEL(T)                                                              \
  template std::vector<T> superpixel_mass(std::span<const T>, const CandidateTable&);                  \
  template Tensor<T> aggregate(const Tensor<T>&, const Tensor<T>&, const CandidateTable&);             \
  template Tensor<T> disperse(const Tensor<T>&, const Tensor<T>&, const CandidateTable&);              \
  template Tensor<T> pixel_positions(const CellGrid&);                                                 \
  template PositionPair<T> positions(const Tensor<T>&, const CandidateTable&);                         \
  template Tensor<T> loss_superpixel(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,             \
                                     const Tensor<T>&, T, T);                                          \
  template Tensor<T> loss_semantic(const Tensor<T>&, const Tensor<T>&);                                \
  template LabelMap hard_assign(std::span<const T>, const CandidateTable&);                            \
  template Tensor<T> one_hot_tensor(const Mask&);

SPGRAPH_INSTANTIATE_SUPERPIXEL(float)
SPGRAPH_INSTANTIATE_SUPERPIXEL(double)

}  // namespace spgraph
