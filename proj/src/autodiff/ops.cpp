#include "grhd/autodiff/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "grhd/common/error.hpp"

namespace grhd::ad {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapR = Eigen::Map<MatR<T>>;
template <typename T>
using CMapR = Eigen::Map<const MatR<T>>;

thread_local std::vector<std::uint8_t>* g_relu_trace = nullptr;
bool g_grl_fault = false;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::ShapeMismatch, what);
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require(a.shape() == b.shape(),
          std::string(op) + ": shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
}

template <typename T>
Node<T>* grad_target(Node<T>& self, std::size_t i) {
  Node<T>* p = self.parents[i].get();
  return p->requires_grad ? p : nullptr;
}

void check_labels(std::span<const std::size_t> labels, std::size_t n, std::size_t classes) {
  if (labels.size() != n) throw Error(ErrorCode::ShapeMismatch, "label count does not match batch size");
  for (const auto l : labels) {
    if (l >= classes) {
      throw Error(ErrorCode::LabelOutOfRange, "label " + std::to_string(l) + " with " + std::to_string(classes) + " classes");
    }
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow;
  Conv2dOptions opt;

  std::size_t k() const { return cin * kh * kw; }
  std::size_t p() const { return oh * ow; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, MatR<T>& cols) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols.data() + ((c * g.kh + i) * g.kw + j) * g.p();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.opt.stride_h + i) - static_cast<long>(g.opt.pad_h);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<long>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.opt.stride_w + j) - static_cast<long>(g.opt.pad_w);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.w)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const MatR<T>& cols, const ConvGeometry& g, T* dx) {
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols.data() + ((c * g.kh + i) * g.kw + j) * g.p();
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const long iy = static_cast<long>(oy * g.opt.stride_h + i) - static_cast<long>(g.opt.pad_h);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const T* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const long ix = static_cast<long>(ox * g.opt.stride_w + j) - static_cast<long>(g.opt.pad_w);
            if (ix >= 0 && ix < static_cast<long>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

ReluTrace::ReluTrace() : previous_(g_relu_trace) { g_relu_trace = &pattern_; }
ReluTrace::~ReluTrace() { g_relu_trace = previous_; }

void set_grl_fault_injection(bool on) { g_grl_fault = on; }
bool grl_fault_injection() { return g_grl_fault; }

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto* p = grad_target(self, k)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    }
  }, "add");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return make_result<T>(a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (auto* p = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * bv[i];
    }
    if (auto* p = grad_target(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * av[i];
    }
  }, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return make_result<T>(a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * factor;
    }
  }, "scale");
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (const T v : a.data()) total += v;
  return make_result<T>({}, {total}, {a}, [](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      for (auto& g : p->grad) g += self.grad[0];
    }
  }, "sum");
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  require(numel(shape) == a.numel(), "reshape " + shape_string(a.shape()) + " -> " + shape_string(shape));
  std::vector<T> out(a.data().begin(), a.data().end());
  return make_result<T>(std::move(shape), std::move(out), {a}, [](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    }
  }, "reshape");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  require(!parts.empty(), "concat of nothing");
  const Shape& first = parts.front().shape();
  require(axis < first.size(), "concat axis out of range");
  std::size_t outer = 1, inner = 1, total_axis = 0;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];
  std::vector<std::size_t> lens;
  for (const auto& p : parts) {
    Shape s = p.shape();
    require(s.size() == first.size(), "concat rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis) require(s[i] == first[i], "concat shape mismatch");
    }
    lens.push_back(s[axis]);
    total_axis += s[axis];
  }
  Shape shape = first;
  shape[axis] = total_axis;
  std::vector<T> out(numel(shape));
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t offset = o * total_axis * inner;
    for (std::size_t k = 0; k < parts.size(); ++k) {
      const std::size_t chunk = lens[k] * inner;
      const T* src = parts[k].data().data() + o * chunk;
      std::copy(src, src + chunk, out.begin() + static_cast<long>(offset));
      offset += chunk;
    }
  }
  return make_result<T>(std::move(shape), std::move(out), parts, [outer, inner, total_axis, lens](Node<T>& self) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::size_t offset = o * total_axis * inner;
      for (std::size_t k = 0; k < lens.size(); ++k) {
        const std::size_t chunk = lens[k] * inner;
        if (auto* p = grad_target(self, k)) {
          for (std::size_t i = 0; i < chunk; ++i) p->grad[o * chunk + i] += self.grad[offset + i];
        }
        offset += chunk;
      }
    }
  }, "concat");
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > T(0) ? a.data()[i] : T(0);
  if (g_relu_trace != nullptr) {
    for (const T v : a.data()) g_relu_trace->push_back(v > T(0) ? 1 : 0);
  }
  return make_result<T>(a.shape(), std::move(out), {a}, [](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      const auto& x = p->value;
      for (std::size_t i = 0; i < self.grad.size(); ++i) {
        if (x[i] > T(0)) p->grad[i] += self.grad[i];
      }
    }
  }, "relu");
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias) {
  require(x.rank() == 2 && weight.rank() == 2 && x.dim(1) == weight.dim(1),
          "linear: x " + shape_string(x.shape()) + " weight " + shape_string(weight.shape()));
  const std::size_t n = x.dim(0), in = x.dim(1), out_dim = weight.dim(0);
  if (bias) require(bias->rank() == 1 && bias->dim(0) == out_dim, "linear: bias shape");

  std::vector<T> out(n * out_dim);
  MapR<T> y(out.data(), static_cast<long>(n), static_cast<long>(out_dim));
  y.noalias() = CMapR<T>(x.data().data(), static_cast<long>(n), static_cast<long>(in)) *
                CMapR<T>(weight.data().data(), static_cast<long>(out_dim), static_cast<long>(in)).transpose();
  if (bias) {
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < out_dim; ++c) out[r * out_dim + c] += bias->data()[c];
    }
  }
  std::vector<Tensor<T>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_result<T>({n, out_dim}, std::move(out), std::move(parents), [n, in, out_dim](Node<T>& self) {
    const auto rows = static_cast<long>(n), ins = static_cast<long>(in), outs = static_cast<long>(out_dim);
    CMapR<T> dy(self.grad.data(), rows, outs);
    if (auto* p = grad_target(self, 0)) {
      MapR<T>(p->grad.data(), rows, ins).noalias() += dy * CMapR<T>(self.parents[1]->value.data(), outs, ins);
    }
    if (auto* p = grad_target(self, 1)) {
      MapR<T>(p->grad.data(), outs, ins).noalias() += dy.transpose() * CMapR<T>(self.parents[0]->value.data(), rows, ins);
    }
    if (self.parents.size() > 2) {
      if (auto* p = grad_target(self, 2)) {
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t c = 0; c < out_dim; ++c) p->grad[c] += self.grad[r * out_dim + c];
        }
      }
    }
  }, "linear");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 const Conv2dOptions& opt) {
  require(x.rank() == 4 && weight.rank() == 4 && x.dim(1) == weight.dim(1),
          "conv2d: x " + shape_string(x.shape()) + " weight " + shape_string(weight.shape()));
  require(opt.stride_h > 0 && opt.stride_w > 0, "conv2d: zero stride");
  ConvGeometry g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.h = x.dim(2);
  g.w = x.dim(3);
  g.cout = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  g.opt = opt;
  require(g.h + 2 * opt.pad_h >= g.kh && g.w + 2 * opt.pad_w >= g.kw,
          "conv2d: kernel larger than padded input " + shape_string(x.shape()));
  g.oh = (g.h + 2 * opt.pad_h - g.kh) / opt.stride_h + 1;
  g.ow = (g.w + 2 * opt.pad_w - g.kw) / opt.stride_w + 1;
  if (bias) require(bias->rank() == 1 && bias->dim(0) == g.cout, "conv2d: bias shape");

  const auto K = static_cast<long>(g.k()), P = static_cast<long>(g.p()), Co = static_cast<long>(g.cout);
  std::vector<T> out(g.n * g.cout * g.p());
  MatR<T> cols(K, P);
  CMapR<T> wmat(weight.data().data(), Co, K);
  for (std::size_t b = 0; b < g.n; ++b) {
    im2col(x.data().data() + b * g.cin * g.h * g.w, g, cols);
    MapR<T> y(out.data() + b * g.cout * g.p(), Co, P);
    y.noalias() = wmat * cols;
    if (bias) {
      for (long c = 0; c < Co; ++c) y.row(c).array() += bias->data()[static_cast<std::size_t>(c)];
    }
  }

  std::vector<Tensor<T>> parents{x, weight};
  if (bias) parents.push_back(*bias);
  return make_result<T>({g.n, g.cout, g.oh, g.ow}, std::move(out), std::move(parents), [g](Node<T>& self) {
    const auto K = static_cast<long>(g.k()), P = static_cast<long>(g.p()), Co = static_cast<long>(g.cout);
    Node<T>* px = grad_target(self, 0);
    Node<T>* pw = grad_target(self, 1);
    Node<T>* pb = self.parents.size() > 2 ? grad_target(self, 2) : nullptr;
    CMapR<T> wmat(self.parents[1]->value.data(), Co, K);
    MatR<T> cols(K, P);
    MatR<T> dcols;
    for (std::size_t b = 0; b < g.n; ++b) {
      CMapR<T> dy(self.grad.data() + b * g.cout * g.p(), Co, P);
      if (pw) {
        im2col(self.parents[0]->value.data() + b * g.cin * g.h * g.w, g, cols);
        MapR<T>(pw->grad.data(), Co, K).noalias() += dy * cols.transpose();
      }
      if (pb) {
        // Plain loop: Eigen's vectorized sum peels by address, which would make the
        // result depend on where the batch happens to be allocated.
        for (long c = 0; c < Co; ++c) {
          T acc = 0;
          for (long q = 0; q < P; ++q) acc += dy(c, q);
          pb->grad[static_cast<std::size_t>(c)] += acc;
        }
      }
      if (px) {
        dcols.noalias() = wmat.transpose() * dy;
        col2im_add(dcols, g, px->grad.data() + b * g.cin * g.h * g.w);
      }
    }
  }, "conv2d");
}

template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& weight, const std::optional<Tensor<T>>& bias,
                 std::size_t stride, std::size_t pad) {
  require(x.rank() == 3 && weight.rank() == 3,
          "conv1d: x " + shape_string(x.shape()) + " weight " + shape_string(weight.shape()));
  const auto x4 = reshape(x, {x.dim(0), x.dim(1), 1, x.dim(2)});
  const auto w4 = reshape(weight, {weight.dim(0), weight.dim(1), 1, weight.dim(2)});
  const auto y = conv2d(x4, w4, bias, Conv2dOptions{1, stride, 0, pad});
  return reshape(y, {y.dim(0), y.dim(1), y.dim(3)});
}

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, BatchNormBuffers<T>& buffers,
                     bool training, T momentum, T eps) {
  require(x.rank() >= 2, "batch_norm: rank < 2");
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.numel() / (n * c);
  require(gamma.numel() == c && beta.numel() == c && buffers.running_mean.numel() == c &&
              buffers.running_var.numel() == c,
          "batch_norm: parameter size");
  const std::size_t m = n * s;
  if (training) require(m > 1, "batch_norm: training needs more than one value per channel");

  auto xv = x.data();
  std::vector<T> xhat(x.numel());
  std::vector<T> invstd(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (training) {
      double acc = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < s; ++i) acc += xv[(b * c + ch) * s + i];
      }
      mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < s; ++i) {
          const double d = xv[(b * c + ch) * s + i] - mu;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(m);
      auto rm = buffers.running_mean.data();
      auto rv = buffers.running_var.data();
      const double unbiased = sq / static_cast<double>(m - 1);
      rm[ch] = static_cast<T>((1.0 - momentum) * rm[ch] + momentum * mu);
      rv[ch] = static_cast<T>((1.0 - momentum) * rv[ch] + momentum * unbiased);
    } else {
      mu = buffers.running_mean.data()[ch];
      var = buffers.running_var.data()[ch];
    }
    invstd[ch] = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps)));
    for (std::size_t b = 0; b < n; ++b) {
      for (std::size_t i = 0; i < s; ++i) {
        const std::size_t idx = (b * c + ch) * s + i;
        xhat[idx] = static_cast<T>((xv[idx] - mu) * invstd[ch]);
      }
    }
  }

  std::vector<T> out(x.numel());
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t i = 0; i < s; ++i) {
        const std::size_t idx = (b * c + ch) * s + i;
        out[idx] = gamma.data()[ch] * xhat[idx] + beta.data()[ch];
      }
    }
  }

  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [n, c, s, m, training, xhat = std::move(xhat), invstd = std::move(invstd)](Node<T>& self) {
    Node<T>* px = grad_target(self, 0);
    Node<T>* pg = grad_target(self, 1);
    Node<T>* pb = grad_target(self, 2);
    const auto& gam = self.parents[1]->value;
    const auto& dy = self.grad;
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_dy = 0.0, sum_dy_xhat = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < s; ++i) {
          const std::size_t idx = (b * c + ch) * s + i;
          sum_dy += dy[idx];
          sum_dy_xhat += static_cast<double>(dy[idx]) * xhat[idx];
        }
      }
      if (pg) pg->grad[ch] += static_cast<T>(sum_dy_xhat);
      if (pb) pb->grad[ch] += static_cast<T>(sum_dy);
      if (!px) continue;
      const double k = static_cast<double>(gam[ch]) * invstd[ch];
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t i = 0; i < s; ++i) {
          const std::size_t idx = (b * c + ch) * s + i;
          if (training) {
            const double md = static_cast<double>(m);
            px->grad[idx] += static_cast<T>(k / md * (md * dy[idx] - sum_dy - xhat[idx] * sum_dy_xhat));
          } else {
            px->grad[idx] += static_cast<T>(k * dy[idx]);
          }
        }
      }
    }
  }, "batch_norm");
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require(x.rank() >= 2, "global_avg_pool: rank < 2");
  const std::size_t n = x.dim(0), c = x.dim(1), s = x.numel() / (n * c);
  std::vector<T> out(n * c);
  for (std::size_t r = 0; r < n * c; ++r) {
    T acc = 0;
    for (std::size_t i = 0; i < s; ++i) acc += x.data()[r * s + i];
    out[r] = acc / static_cast<T>(s);
  }
  return make_result<T>({n, c}, std::move(out), {x}, [n, c, s](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      const T inv = T(1) / static_cast<T>(s);
      for (std::size_t r = 0; r < n * c; ++r) {
        const T g = self.grad[r] * inv;
        for (std::size_t i = 0; i < s; ++i) p->grad[r * s + i] += g;
      }
    }
  }, "global_avg_pool");
}

namespace {

// Row-wise log-sum-exp with max subtraction.
template <typename T>
std::vector<T> row_logsumexp(std::span<const T> x, std::size_t n, std::size_t c) {
  std::vector<T> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = x.data() + r * c;
    const T mx = *std::max_element(row, row + c);
    T acc = 0;
    for (std::size_t j = 0; j < c; ++j) acc += std::exp(row[j] - mx);
    out[r] = mx + std::log(acc);
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  require(x.rank() == 2, "softmax: expects [N x C]");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const auto lse = row_logsumexp(x.data(), n, c);
  std::vector<T> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = std::exp(x.data()[r * c + j] - lse[r]);
  }
  return make_result<T>({n, c}, std::move(out), {x}, [n, c](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      for (std::size_t r = 0; r < n; ++r) {
        T dot = 0;
        for (std::size_t j = 0; j < c; ++j) dot += self.grad[r * c + j] * self.value[r * c + j];
        for (std::size_t j = 0; j < c; ++j) p->grad[r * c + j] += self.value[r * c + j] * (self.grad[r * c + j] - dot);
      }
    }
  }, "softmax");
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  require(x.rank() == 2, "log_softmax: expects [N x C]");
  const std::size_t n = x.dim(0), c = x.dim(1);
  const auto lse = row_logsumexp(x.data(), n, c);
  std::vector<T> out(n * c);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < c; ++j) out[r * c + j] = x.data()[r * c + j] - lse[r];
  }
  return make_result<T>({n, c}, std::move(out), {x}, [n, c](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      for (std::size_t r = 0; r < n; ++r) {
        T total = 0;
        for (std::size_t j = 0; j < c; ++j) total += self.grad[r * c + j];
        for (std::size_t j = 0; j < c; ++j) {
          p->grad[r * c + j] += self.grad[r * c + j] - std::exp(self.value[r * c + j]) * total;
        }
      }
    }
  }, "log_softmax");
}

template <typename T>
Tensor<T> grad_reverse(const Tensor<T>& x, T lambda) {
  std::vector<T> out(x.data().begin(), x.data().end());
  const T factor = g_grl_fault ? lambda : -lambda;
  return make_result<T>(x.shape(), std::move(out), {x}, [factor](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += factor * self.grad[i];
    }
  }, "grad_reverse");
}

template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const std::size_t> labels) {
  require(logits.rank() == 2, "cross_entropy: expects [N x C]");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  check_labels(labels, n, c);
  const auto lse = row_logsumexp(logits.data(), n, c);
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T term = lse[r] - logits.data()[r * c + labels[r]];
    total += term;
  }
  const T loss = total / static_cast<T>(n);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return make_result<T>({}, {loss}, {logits}, [n, c, lse, y = std::move(y)](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      const T g = self.grad[0] / static_cast<T>(n);
      const auto& z = self.parents[0]->value;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          const T prob = std::exp(z[r * c + j] - lse[r]);
          p->grad[r * c + j] += g * (prob - (j == y[r] ? T(1) : T(0)));
        }
      }
    }
  }, "cross_entropy");
}

template <typename T>
Tensor<T> focal_loss(const Tensor<T>& logits, std::span<const std::size_t> labels, T gamma_f,
                     std::span<const T> class_weights) {
  require(logits.rank() == 2, "focal_loss: expects [N x C]");
  if (!(gamma_f >= T(0))) throw Error(ErrorCode::InvalidConfig, "focal gamma must be nonnegative");
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  check_labels(labels, n, c);
  if (!class_weights.empty()) require(class_weights.size() == c, "focal_loss: class weight count");
  const auto lse = row_logsumexp(logits.data(), n, c);

  std::vector<T> row_coef(n);  // d loss_r / d z_rj = coef_r * (delta_jy - p_j)
  T total = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const T ce = lse[r] - logits.data()[r * c + labels[r]];
    const T pt = std::exp(-ce);
    const T q = T(1) - pt;
    const T modulation = std::pow(q, gamma_f);
    T term = modulation * ce;
    const T w = class_weights.empty() ? T(1) : class_weights[labels[r]];
    if (!class_weights.empty()) term = w * term;
    total += term;
    // d/dp [-(1-p)^g log p] = g (1-p)^(g-1) log p - (1-p)^g / p; times dp/dz.
    T reversal = 0;
    if (gamma_f != T(0) && q > T(0)) reversal = gamma_f * std::pow(q, gamma_f - T(1)) * pt * (-ce);
    row_coef[r] = w * (reversal - modulation);
  }
  const T loss = total / static_cast<T>(n);
  std::vector<std::size_t> y(labels.begin(), labels.end());
  return make_result<T>({}, {loss}, {logits},
                        [n, c, lse, y = std::move(y), row_coef = std::move(row_coef)](Node<T>& self) {
    if (auto* p = grad_target(self, 0)) {
      const T g = self.grad[0] / static_cast<T>(n);
      const auto& z = self.parents[0]->value;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          const T prob = std::exp(z[r * c + j] - lse[r]);
          p->grad[r * c + j] += g * row_coef[r] * ((j == y[r] ? T(1) : T(0)) - prob);
        }
      }
    }
  }, "focal_loss");
}

std::vector<double> inverse_frequency_weights(std::span<const std::size_t> counts) {
  std::vector<double> w(counts.size(), 0.0);
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) continue;
    w[i] = 1.0 / static_cast<double>(counts[i]);
    total += w[i];
    ++present;
  }
  if (present == 0) return w;
  const double mean = total / static_cast<double>(present);
  for (auto& v : w) v /= mean;
  return w;
}

#define GRHD_INSTANTIATE_OPS(T)                                                                                   \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                    \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                                    \
  template Tensor<T> scale(const Tensor<T>&, T);                                                                 \
  template Tensor<T> sum(const Tensor<T>&);                                                                      \
  template Tensor<T> mean(const Tensor<T>&);                                                                     \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                                           \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                                         \
  template Tensor<T> relu(const Tensor<T>&);                                                                     \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&);                \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&,                 \
                            const Conv2dOptions&);                                                               \
  template Tensor<T> conv1d(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&, std::size_t,    \
                            std::size_t);                                                                        \
  template Tensor<T> batch_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormBuffers<T>&, bool, \
                                T, T);                                                                           \
  template Tensor<T> global_avg_pool(const Tensor<T>&);                                                          \
  template Tensor<T> softmax(const Tensor<T>&);                                                                  \
  template Tensor<T> log_softmax(const Tensor<T>&);                                                              \
  template Tensor<T> grad_reverse(const Tensor<T>&, T);                                                          \
  template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const std::size_t>);                              \
  template Tensor<T> focal_loss(const Tensor<T>&, std::span<const std::size_t>, T, std::span<const T>);

GRHD_INSTANTIATE_OPS(float)
GRHD_INSTANTIATE_OPS(double)

#undef GRHD_INSTANTIATE_OPS

}  // namespace grhd::ad
