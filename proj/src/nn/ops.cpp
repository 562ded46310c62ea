#include "spgraph/nn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "spgraph/errors.hpp"

namespace spgraph::nn {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& a, int rank, const char* op) {
  if (a.rank() != rank) {
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                          shape_str(a.shape()));
  }
}

template <typename T>
void accumulate(const std::shared_ptr<Node<T>>& p, const T* src) {
  if (!p->requires_grad) return;
  T* dst = p->grad_data();
  const size_t n = p->value.size();
  for (size_t i = 0; i < n; ++i) dst[i] += src[i];
}

struct AxisSplit {
  int64_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, int axis) {
  const int r = static_cast<int>(shape.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw InvalidArgument("axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  AxisSplit s;
  for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<size_t>(i)];
  s.len = shape[static_cast<size_t>(axis)];
  for (int i = axis + 1; i < r; ++i) s.inner *= shape[static_cast<size_t>(i)];
  return s;
}

template <typename T>
std::vector<T> softmax_values(const std::vector<T>& x, const AxisSplit& s) {
  std::vector<T> y(x.size());
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.len * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t l = 0; l < s.len; ++l) mx = std::max(mx, x[static_cast<size_t>(base + l * s.inner)]);
      T z = 0;
      for (int64_t l = 0; l < s.len; ++l) {
        const size_t k = static_cast<size_t>(base + l * s.inner);
        y[k] = std::exp(x[k] - mx);
        z += y[k];
      }
      for (int64_t l = 0; l < s.len; ++l) y[static_cast<size_t>(base + l * s.inner)] /= z;
    }
  }
  return y;
}

int64_t rows_of(const Shape& s) { return s.empty() ? 1 : s[0]; }
int64_t row_width(const Shape& s) {
  int64_t w = 1;
  for (size_t i = 1; i < s.size(); ++i) w *= s[i];
  return w;
}

// Column buffer for a k x k convolution with zero padding k/2.
template <typename T>
void im2col(const T* x, int64_t cin, int64_t h, int64_t w, int k, int stride, int64_t ho, int64_t wo,
            T* col) {
  const int pad = k / 2;
  const int64_t plane = ho * wo;
  for (int64_t c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = col + ((c * k + ky) * k + kx) * plane;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride + ky - pad;
          T* row = dst + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(row, row + wo, T(0));
            continue;
          }
          const T* src = x + (c * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride + kx - pad;
            row[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int64_t cin, int64_t h, int64_t w, int k, int stride, int64_t ho, int64_t wo,
            T* dx) {
  const int pad = k / 2;
  const int64_t plane = ho * wo;
  for (int64_t c = 0; c < cin; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = col + ((c * k + ky) * k + kx) * plane;
        for (int64_t oy = 0; oy < ho; ++oy) {
          const int64_t iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = dx + (c * h + iy) * w;
          const T* row = src + oy * wo;
          for (int64_t ox = 0; ox < wo; ++ox) {
            const int64_t ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += row[ox];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    accumulate(n.parents[0], n.grad.data());
    accumulate(n.parents[1], n.grad.data());
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    accumulate(n.parents[0], n.grad.data());
    if (n.parents[1]->requires_grad) {
      T* g = n.parents[1]->grad_data();
      for (size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.data().begin(), a.data().end());
  auto bd = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  return make_result<T>(a.shape(), std::move(out), {a.node(), b.node()}, [](Node<T>& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    if (pa->requires_grad) {
      T* g = pa->grad_data();
      for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * pb->value[i];
    }
    if (pb->requires_grad) {
      T* g = pb->grad_data();
      for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i] * pa->value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (T& v : out) v *= factor;
  return make_result<T>(a.shape(), std::move(out), {a.node()}, [factor](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += factor * n.grad[i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw InvalidArgument("reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return make_result<T>(std::move(shape), {a.data().begin(), a.data().end()}, {a.node()}, [](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (T v : a.data()) s += v;
  return make_result<T>({1}, {s}, {a.node()}, [](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    const T go = n.grad[0];
    for (size_t i = 0; i < n.parents[0]->value.size(); ++i) g[i] += go;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(std::max<int64_t>(1, a.numel())));
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) throw InvalidArgument("matmul: inner dimension mismatch " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  std::vector<T> out(static_cast<size_t>(m * n));
  MapMat<T>(out.data(), m, n).noalias() = CMapMat<T>(a.data().data(), m, k) * CMapMat<T>(b.data().data(), k, n);
  return make_result<T>({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node<T>& nd) {
    auto& pa = nd.parents[0];
    auto& pb = nd.parents[1];
    CMapMat<T> g(nd.grad.data(), m, n);
    if (pa->requires_grad) MapMat<T>(pa->grad_data(), m, k).noalias() += g * CMapMat<T>(pb->value.data(), k, n).transpose();
    if (pb->requires_grad) MapMat<T>(pb->grad_data(), k, n).noalias() += CMapMat<T>(pa->value.data(), m, k).transpose() * g;
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require_rank(b, 1, "linear");
  Tensor<T> y = matmul(x, w);
  const int64_t rows = y.dim(0), cols = y.dim(1);
  if (b.dim(0) != cols) throw InvalidArgument("linear: bias size mismatch");
  std::vector<T> out(y.data().begin(), y.data().end());
  auto bd = b.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < cols; ++c) out[static_cast<size_t>(r * cols + c)] += bd[static_cast<size_t>(c)];
  return make_result<T>(y.shape(), std::move(out), {y.node(), b.node()}, [rows, cols](Node<T>& n) {
    accumulate(n.parents[0], n.grad.data());
    if (n.parents[1]->requires_grad) {
      T* g = n.parents[1]->grad_data();
      for (int64_t r = 0; r < rows; ++r)
        for (int64_t c = 0; c < cols; ++c) g[c] += n.grad[static_cast<size_t>(r * cols + c)];
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const AxisSplit s = split_axis(x.shape(), axis);
  std::vector<T> y = softmax_values(x.node()->value, s);
  return make_result<T>(x.shape(), std::move(y), {x.node()}, [s](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t i = 0; i < s.inner; ++i) {
        const int64_t base = o * s.len * s.inner + i;
        T dot = 0;
        for (int64_t l = 0; l < s.len; ++l) {
          const size_t k = static_cast<size_t>(base + l * s.inner);
          dot += n.grad[k] * n.value[k];
        }
        for (int64_t l = 0; l < s.len; ++l) {
          const size_t k = static_cast<size_t>(base + l * s.inner);
          g[k] += n.value[k] * (n.grad[k] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& x, T slope) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v = v > T(0) ? v : slope * v;
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [slope](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    const auto& xin = n.parents[0]->value;
    for (size_t i = 0; i < n.grad.size(); ++i) g[i] += xin[i] > T(0) ? n.grad[i] : slope * n.grad[i];
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.data().begin(), x.data().end());
  for (T& v : out) v = std::max(v, T(0));
  return make_result<T>(x.shape(), std::move(out), {x.node()}, [](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    const auto& xin = n.parents[0]->value;
    for (size_t i = 0; i < n.grad.size(); ++i)
      if (xin[i] > T(0)) g[i] += n.grad[i];
  });
}

template <typename T>
Tensor<T> instance_norm(const Tensor<T>& x, T eps) {
  require_rank(x, 3, "instance_norm");
  const int64_t c = x.dim(0), hw = x.dim(1) * x.dim(2);
  std::vector<T> y(x.data().begin(), x.data().end());
  std::vector<T> inv_std(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    T* v = y.data() + ch * hw;
    T mu = 0;
    for (int64_t i = 0; i < hw; ++i) mu += v[i];
    mu /= static_cast<T>(hw);
    T var = 0;
    for (int64_t i = 0; i < hw; ++i) var += (v[i] - mu) * (v[i] - mu);
    var /= static_cast<T>(hw);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(ch)] = is;
    for (int64_t i = 0; i < hw; ++i) v[i] = (v[i] - mu) * is;
  }
  return make_result<T>(x.shape(), std::move(y), {x.node()}, [c, hw, inv_std](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    for (int64_t ch = 0; ch < c; ++ch) {
      const T* dy = n.grad.data() + ch * hw;
      const T* yv = n.value.data() + ch * hw;
      T mdy = 0, mdyy = 0;
      for (int64_t i = 0; i < hw; ++i) {
        mdy += dy[i];
        mdyy += dy[i] * yv[i];
      }
      mdy /= static_cast<T>(hw);
      mdyy /= static_cast<T>(hw);
      const T is = inv_std[static_cast<size_t>(ch)];
      T* gx = g + ch * hw;
      for (int64_t i = 0; i < hw; ++i) gx[i] += is * (dy[i] - mdy - yv[i] * mdyy);
    }
  });
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b, int stride) {
  require_rank(x, 3, "conv2d");
  require_rank(w, 4, "conv2d");
  require_rank(b, 1, "conv2d");
  if (stride != 1 && stride != 2) throw InvalidArgument("conv2d: stride must be 1 or 2");
  const int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const int64_t cout = w.dim(0);
  const int k = static_cast<int>(w.dim(2));
  if (w.dim(1) != cin || w.dim(3) != k || k % 2 == 0 || b.dim(0) != cout) {
    throw InvalidArgument("conv2d: weight " + shape_str(w.shape()) + " incompatible with input " + shape_str(x.shape()));
  }
  const int pad = k / 2;
  const int64_t ho = (h + 2 * pad - k) / stride + 1;
  const int64_t wo = (wd + 2 * pad - k) / stride + 1;
  const int64_t plane = ho * wo;
  const int64_t kk = cin * k * k;
  const bool direct = (k == 1 && stride == 1);

  std::vector<T> col;
  const T* colp = x.data().data();
  if (!direct) {
    col.resize(static_cast<size_t>(kk * plane));
    im2col(x.data().data(), cin, h, wd, k, stride, ho, wo, col.data());
    colp = col.data();
  }
  std::vector<T> out(static_cast<size_t>(cout * plane));
  MapMat<T> om(out.data(), cout, plane);
  om.noalias() = CMapMat<T>(w.data().data(), cout, kk) * CMapMat<T>(colp, kk, plane);
  auto bd = b.data();
  for (int64_t co = 0; co < cout; ++co) om.row(co).array() += bd[static_cast<size_t>(co)];

  return make_result<T>({cout, ho, wo}, std::move(out), {x.node(), w.node(), b.node()},
                        [=](Node<T>& n) {
    auto& px = n.parents[0];
    auto& pw = n.parents[1];
    auto& pb = n.parents[2];
    CMapMat<T> g(n.grad.data(), cout, plane);
    if (pb->requires_grad) {
      T* gb = pb->grad_data();
      for (int64_t co = 0; co < cout; ++co) gb[co] += g.row(co).sum();
    }
    std::vector<T> colb;
    const T* cp = px->value.data();
    if (!direct) {
      colb.resize(static_cast<size_t>(kk * plane));
      im2col(px->value.data(), cin, h, wd, k, stride, ho, wo, colb.data());
      cp = colb.data();
    }
    if (pw->requires_grad) {
      MapMat<T>(pw->grad_data(), cout, kk).noalias() += g * CMapMat<T>(cp, kk, plane).transpose();
    }
    if (px->requires_grad) {
      if (direct) {
        MapMat<T>(px->grad_data(), kk, plane).noalias() += CMapMat<T>(pw->value.data(), cout, kk).transpose() * g;
      } else {
        colb.resize(static_cast<size_t>(kk * plane));
        MapMat<T> dcol(colb.data(), kk, plane);
        dcol.noalias() = CMapMat<T>(pw->value.data(), cout, kk).transpose() * g;
        col2im(colb.data(), cin, h, wd, k, stride, ho, wo, px->grad_data());
      }
    }
  });
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  require_rank(x, 3, "upsample2x");
  const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  std::vector<T> out(static_cast<size_t>(c * 4 * h * w));
  const auto xv = x.data();
  for (int64_t ch = 0; ch < c; ++ch)
    for (int64_t y = 0; y < 2 * h; ++y)
      for (int64_t xx = 0; xx < 2 * w; ++xx)
        out[static_cast<size_t>((ch * 2 * h + y) * 2 * w + xx)] = xv[static_cast<size_t>((ch * h + y / 2) * w + xx / 2)];
  return make_result<T>({c, 2 * h, 2 * w}, std::move(out), {x.node()}, [c, h, w](Node<T>& n) {
    T* g = n.parents[0]->grad_data();
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t y = 0; y < 2 * h; ++y)
        for (int64_t xx = 0; xx < 2 * w; ++xx)
          g[(ch * h + y / 2) * w + xx / 2] += n.grad[static_cast<size_t>((ch * 2 * h + y) * 2 * w + xx)];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts) {
  if (parts.empty()) throw InvalidArgument("concat: no inputs");
  Shape shape = parts[0].shape();
  const int64_t width = row_width(shape);
  int64_t rows = 0;
  std::vector<std::shared_ptr<Node<T>>> parents;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(shape.size()) || row_width(p.shape()) != width ||
        !std::equal(p.shape().begin() + 1, p.shape().end(), shape.begin() + 1)) {
      throw InvalidArgument("concat: incompatible shapes " + shape_str(p.shape()) + " and " + shape_str(shape));
    }
    rows += rows_of(p.shape());
    parents.push_back(p.node());
  }
  shape[0] = rows;
  std::vector<T> out;
  out.reserve(static_cast<size_t>(rows * width));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_result<T>(shape, std::move(out), std::move(parents), [](Node<T>& n) {
    size_t off = 0;
    for (auto& p : n.parents) {
      accumulate(p, n.grad.data() + off);
      off += p->value.size();
    }
  });
}

template <typename T>
Tensor<T> cross_entropy_probs(const Tensor<T>& target, const Tensor<T>& probs, T eps) {
  require_same_shape(target, probs, "cross_entropy_probs");
  const int64_t k = probs.dim(0);
  const int64_t positions = probs.numel() / std::max<int64_t>(1, k);
  const auto t = target.data();
  const auto p = probs.data();
  T loss = 0;
  for (size_t i = 0; i < p.size(); ++i) {
    if (t[i] == T(0)) continue;
    loss -= t[i] * std::log(std::clamp(p[i], eps, T(1) - eps));
  }
  loss /= static_cast<T>(positions);
  return make_result<T>({1}, {loss}, {probs.node(), target.node()}, [eps, positions](Node<T>& n) {
    auto& pp = n.parents[0];
    if (!pp->requires_grad) return;
    const auto& tv = n.parents[1]->value;
    T* g = pp->grad_data();
    const T go = n.grad[0] / static_cast<T>(positions);
    for (size_t i = 0; i < tv.size(); ++i) {
      const T pv = pp->value[i];
      if (tv[i] != T(0) && pv > eps && pv < T(1) - eps) g[i] -= go * tv[i] / pv;
    }
  });
}

template <typename T>
Tensor<T> cross_entropy_logits(const Tensor<T>& target, const Tensor<T>& logits, int axis) {
  require_same_shape(target, logits, "cross_entropy_logits");
  const AxisSplit s = split_axis(logits.shape(), axis);
  std::vector<T> sm = softmax_values(logits.node()->value, s);
  const auto t = target.data();
  const auto z = logits.data();
  const int64_t positions = s.outer * s.inner;
  T loss = 0;
  for (int64_t o = 0; o < s.outer; ++o) {
    for (int64_t i = 0; i < s.inner; ++i) {
      const int64_t base = o * s.len * s.inner + i;
      T mx = -std::numeric_limits<T>::infinity();
      for (int64_t l = 0; l < s.len; ++l) mx = std::max(mx, z[static_cast<size_t>(base + l * s.inner)]);
      T lse = 0;
      for (int64_t l = 0; l < s.len; ++l) lse += std::exp(z[static_cast<size_t>(base + l * s.inner)] - mx);
      lse = mx + std::log(lse);
      for (int64_t l = 0; l < s.len; ++l) {
        const size_t k = static_cast<size_t>(base + l * s.inner);
        if (t[k] != T(0)) loss -= t[k] * (z[k] - lse);
      }
    }
  }
  loss /= static_cast<T>(positions);
  return make_result<T>({1}, {loss}, {logits.node(), target.node()}, [s, positions, sm = std::move(sm)](Node<T>& n) {
    auto& pz = n.parents[0];
    if (!pz->requires_grad) return;
    const auto& tv = n.parents[1]->value;
    T* g = pz->grad_data();
    const T go = n.grad[0] / static_cast<T>(positions);
    for (int64_t o = 0; o < s.outer; ++o) {
      for (int64_t i = 0; i < s.inner; ++i) {
        const int64_t base = o * s.len * s.inner + i;
        T tsum = 0;
        for (int64_t l = 0; l < s.len; ++l) tsum += tv[static_cast<size_t>(base + l * s.inner)];
        for (int64_t l = 0; l < s.len; ++l) {
          const size_t k = static_cast<size_t>(base + l * s.inner);
          g[k] += go * (sm[k] * tsum - tv[k]);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> mean_l2_distance(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mean_l2_distance");
  const int64_t d = a.dim(0);
  const int64_t positions = a.numel() / d;
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> norms(static_cast<size_t>(positions));
  T total = 0;
  for (int64_t p = 0; p < positions; ++p) {
    T s2 = 0;
    for (int64_t c = 0; c < d; ++c) {
      const T diff = av[static_cast<size_t>(c * positions + p)] - bv[static_cast<size_t>(c * positions + p)];
      s2 += diff * diff;
    }
    norms[static_cast<size_t>(p)] = std::sqrt(s2);
    total += norms[static_cast<size_t>(p)];
  }
  total /= static_cast<T>(positions);
  return make_result<T>({1}, {total}, {a.node(), b.node()}, [d, positions, norms = std::move(norms)](Node<T>& n) {
    auto& pa = n.parents[0];
    auto& pb = n.parents[1];
    const T go = n.grad[0] / static_cast<T>(positions);
    T* ga = pa->requires_grad ? pa->grad_data() : nullptr;
    T* gb = pb->requires_grad ? pb->grad_data() : nullptr;
    for (int64_t p = 0; p < positions; ++p) {
      const T nv = norms[static_cast<size_t>(p)];
      if (nv <= T(0)) continue;
      for (int64_t c = 0; c < d; ++c) {
        const size_t k = static_cast<size_t>(c * positions + p);
        const T gv = go * (pa->value[k] - pb->value[k]) / nv;
        if (ga) ga[k] += gv;
        if (gb) gb[k] -= gv;
      }
    }
  });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& x, std::span<const int64_t> index) {
  const int64_t n = rows_of(x.shape());
  const int64_t w = row_width(x.shape());
  Shape shape = x.shape();
  shape[0] = static_cast<int64_t>(index.size());
  std::vector<T> out(static_cast<size_t>(shape[0] * w));
  std::vector<int64_t> idx(index.begin(), index.end());
  const auto xv = x.data();
  for (size_t e = 0; e < idx.size(); ++e) {
    if (idx[e] < 0 || idx[e] >= n) throw InvalidArgument("gather_rows: index out of range");
    std::copy_n(xv.begin() + idx[e] * w, w, out.begin() + static_cast<int64_t>(e) * w);
  }
  return make_result<T>(shape, std::move(out), {x.node()}, [w, idx = std::move(idx)](Node<T>& nd) {
    T* g = nd.parents[0]->grad_data();
    for (size_t e = 0; e < idx.size(); ++e)
      for (int64_t c = 0; c < w; ++c) g[idx[e] * w + c] += nd.grad[e * static_cast<size_t>(w) + static_cast<size_t>(c)];
  });
}

template <typename T>
Tensor<T> scatter_add_rows(const Tensor<T>& x, std::span<const int64_t> index, int64_t slots) {
  const int64_t e_count = rows_of(x.shape());
  if (static_cast<int64_t>(index.size()) != e_count) throw InvalidArgument("scatter_add_rows: index length mismatch");
  const int64_t w = row_width(x.shape());
  Shape shape = x.shape();
  shape[0] = slots;
  std::vector<T> out(static_cast<size_t>(slots * w), T(0));
  std::vector<int64_t> idx(index.begin(), index.end());
  const auto xv = x.data();
  for (int64_t e = 0; e < e_count; ++e) {
    const int64_t s = idx[static_cast<size_t>(e)];
    if (s < 0 || s >= slots) throw InvalidArgument("scatter_add_rows: index out of range");
    for (int64_t c = 0; c < w; ++c) out[static_cast<size_t>(s * w + c)] += xv[static_cast<size_t>(e * w + c)];
  }
  return make_result<T>(shape, std::move(out), {x.node()}, [w, idx = std::move(idx)](Node<T>& nd) {
    T* g = nd.parents[0]->grad_data();
    for (size_t e = 0; e < idx.size(); ++e)
      for (int64_t c = 0; c < w; ++c) g[e * static_cast<size_t>(w) + static_cast<size_t>(c)] += nd.grad[static_cast<size_t>(idx[e] * w + c)];
  });
}

template <typename T>
Tensor<T> segment_softmax(const Tensor<T>& x, std::span<const int64_t> segment, int64_t segments) {
  require_rank(x, 1, "segment_softmax");
  const size_t e_count = static_cast<size_t>(x.dim(0));
  if (segment.size() != e_count) throw InvalidArgument("segment_softmax: segment length mismatch");
  std::vector<int64_t> seg(segment.begin(), segment.end());
  std::vector<T> mx(static_cast<size_t>(segments), -std::numeric_limits<T>::infinity());
  const auto xv = x.data();
  for (size_t e = 0; e < e_count; ++e) {
    if (seg[e] < 0 || seg[e] >= segments) throw InvalidArgument("segment_softmax: segment out of range");
    mx[static_cast<size_t>(seg[e])] = std::max(mx[static_cast<size_t>(seg[e])], xv[e]);
  }
  std::vector<T> out(e_count);
  std::vector<T> z(static_cast<size_t>(segments), T(0));
  for (size_t e = 0; e < e_count; ++e) {
    out[e] = std::exp(xv[e] - mx[static_cast<size_t>(seg[e])]);
    z[static_cast<size_t>(seg[e])] += out[e];
  }
  for (size_t e = 0; e < e_count; ++e) out[e] /= z[static_cast<size_t>(seg[e])];
  return make_result<T>({static_cast<int64_t>(e_count)}, std::move(out), {x.node()},
                        [segments, seg = std::move(seg)](Node<T>& n) {
    std::vector<T> dot(static_cast<size_t>(segments), T(0));
    for (size_t e = 0; e < seg.size(); ++e) dot[static_cast<size_t>(seg[e])] += n.grad[e] * n.value[e];
    T* g = n.parents[0]->grad_data();
    for (size_t e = 0; e < seg.size(); ++e) g[e] += n.value[e] * (n.grad[e] - dot[static_cast<size_t>(seg[e])]);
  });
}

template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& w) {
  require_rank(w, 1, "mul_rows");
  const int64_t rows = rows_of(x.shape());
  const int64_t width = row_width(x.shape());
  if (w.dim(0) != rows) throw InvalidArgument("mul_rows: row count mismatch");
  std::vector<T> out(x.data().begin(), x.data().end());
  const auto wv = w.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t c = 0; c < width; ++c) out[static_cast<size_t>(r * width + c)] *= wv[static_cast<size_t>(r)];
  return make_result<T>(x.shape(), std::move(out), {x.node(), w.node()}, [rows, width](Node<T>& n) {
    auto& px = n.parents[0];
    auto& pw = n.parents[1];
    T* gx = px->requires_grad ? px->grad_data() : nullptr;
    T* gw = pw->requires_grad ? pw->grad_data() : nullptr;
    for (int64_t r = 0; r < rows; ++r) {
      for (int64_t c = 0; c < width; ++c) {
        const size_t k = static_cast<size_t>(r * width + c);
        if (gx) gx[k] += n.grad[k] * pw->value[static_cast<size_t>(r)];
        if (gw) gw[r] += n.grad[k] * px->value[k];
      }
    }
  });
}

#define SPGRAPH_INSTANTIATE_OPS(T)                                                                 \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                      \
  template Tensor<T> scale(const Tensor<T>&, T);                                                   \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                             \
  template Tensor<T> sum(const Tensor<T>&);                                                        \
  template Tensor<T> mean(const Tensor<T>&);                                                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                 \
  template Tensor<T> softmax(const Tensor<T>&, int);                                               \
  template Tensor<T> leaky_relu(const Tensor<T>&, T);                                              \
  template Tensor<T> relu(const Tensor<T>&);                                                       \
  template Tensor<T> instance_norm(const Tensor<T>&, T);                                           \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int);            \
  template Tensor<T> upsample2x(const Tensor<T>&);                                                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&);                                        \
  template Tensor<T> cross_entropy_probs(const Tensor<T>&, const Tensor<T>&, T);                   \
  template Tensor<T> cross_entropy_logits(const Tensor<T>&, const Tensor<T>&, int);                \
  template Tensor<T> mean_l2_distance(const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> gather_rows(const Tensor<T>&, std::span<const int64_t>);                      \
  template Tensor<T> scatter_add_rows(const Tensor<T>&, std::span<const int64_t>, int64_t);        \
  template Tensor<T> segment_softmax(const Tensor<T>&, std::span<const int64_t>, int64_t);         \
  template Tensor<T> mul_rows(const Tensor<T>&, const Tensor<T>&);

SPGRAPH_INSTANTIATE_OPS(float)
SPGRAPH_INSTANTIATE_OPS(double)

#undef SPGRAPH_INSTANTIATE_OPS

}  // namespace spgraph::nn
