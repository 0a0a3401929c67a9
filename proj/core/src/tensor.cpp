#include "ccyd/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace ccyd {

namespace {

thread_local bool g_grad_enabled = true;

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapF = Eigen::Map<MatF>;
using CMapF = Eigen::Map<const MatF>;

std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension in " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::shared_ptr<TensorData> make_node(std::vector<int> shape) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->data.assign(numel(d->shape), 0.0f);
  return d;
}

bool any_requires(const std::vector<Tensor>& xs) {
  if (!g_grad_enabled) return false;
  for (const auto& x : xs)
    if (x.requires_grad()) return true;
  return false;
}

// Attaches tape metadata to `out` if gradients are being recorded.
void attach(const std::shared_ptr<TensorData>& out, const std::vector<Tensor>& parents,
            std::function<void()> fn) {
  if (!any_requires(parents)) return;
  out->requires_grad = true;
  for (const auto& p : parents) out->parents.push_back(p.node());
  out->backward_fn = std::move(fn);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                " vs " + shape_str(b.shape()));
}

// Elementwise binary op scaffold. dfa/dfb give local partials from (a, b, out).
template <typename Fwd, typename Dfa, typename Dfb>
Tensor ewise_binary(const Tensor& a, const Tensor& b, const char* name, Fwd fwd, Dfa dfa,
                    Dfb dfb) {
  check_same_shape(a, b, name);
  auto out = make_node(a.shape());
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = fwd(a.data()[i], b.data()[i]);
  TensorData* self = out.get();
  TensorData* pa = a.node().get();
  TensorData* pb = b.node().get();
  attach(out, {a, b}, [self, pa, pb, dfa, dfb] {
    const std::size_t m = self->size();
    if (pa->requires_grad) {
      pa->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        pa->grad[i] += self->grad[i] * dfa(pa->data[i], pb->data[i], self->data[i]);
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        pb->grad[i] += self->grad[i] * dfb(pa->data[i], pb->data[i], self->data[i]);
    }
  });
  return Tensor(out);
}

template <typename Fwd, typename Df>
Tensor ewise_unary(const Tensor& a, Fwd fwd, Df df) {
  auto out = make_node(a.shape());
  const std::size_t n = out->size();
  for (std::size_t i = 0; i < n; ++i) out->data[i] = fwd(a.data()[i]);
  TensorData* self = out.get();
  TensorData* pa = a.node().get();
  attach(out, {a}, [self, pa, df] {
    pa->ensure_grad();
    const std::size_t m = self->size();
    for (std::size_t i = 0; i < m; ++i)
      pa->grad[i] += self->grad[i] * df(pa->data[i], self->data[i]);
  });
  return Tensor(out);
}

void im2col(const float* img, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            float* col) {
  // col is (C*k*k) x (Ho*Wo), row-major
  const int cols = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) {
            std::fill(row + oy * Wo, row + (oy + 1) * Wo, 0.0f);
            continue;
          }
          const float* src = img + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * Wo + ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

void col2im_add(const float* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
                float* img_grad) {
  const int cols = Ho * Wo;
  for (int c = 0; c < C; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const float* row = col + (static_cast<std::size_t>(c) * k * k + ky * k + kx) * cols;
        for (int oy = 0; oy < Ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= H) continue;
          float* dst = img_grad + (static_cast<std::size_t>(c) * H + iy) * W;
          for (int ox = 0; ox < Wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < W) dst[ix] += row[oy * Wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "]";
  return os.str();
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  auto d = make_node(std::move(shape));
  d->requires_grad = requires_grad;
  return Tensor(d);
}

Tensor Tensor::full(std::vector<int> shape, float value, bool requires_grad) {
  auto d = make_node(std::move(shape));
  std::fill(d->data.begin(), d->data.end(), value);
  d->requires_grad = requires_grad;
  return Tensor(d);
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  if (numel(d->shape) != data.size())
    throw std::invalid_argument("from_data: " + shape_str(d->shape) + " incompatible with " +
                                std::to_string(data.size()) + " values");
  d->data = std::move(data);
  d->requires_grad = requires_grad;
  return Tensor(d);
}

Tensor Tensor::scalar(float value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

float Tensor::item() const {
  if (size() != 1) throw std::invalid_argument("item: tensor has " + std::to_string(size()) + " elements");
  return d_->data[0];
}

Tensor Tensor::detach() const {
  auto d = std::make_shared<TensorData>();
  d->shape = d_->shape;
  d->data = d_->data;
  return Tensor(d);
}

bool grad_enabled() { return g_grad_enabled; }
NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  if (input.ndim() != 4) throw std::invalid_argument("conv2d: input must be NCHW, got " + shape_str(input.shape()));
  if (weight.ndim() != 4) throw std::invalid_argument("conv2d: weight must be OIkk, got " + shape_str(weight.shape()));
  if (weight.dim(2) != weight.dim(3)) throw std::invalid_argument("conv2d: kernel must be square");
  const int N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const int O = weight.dim(0), I = weight.dim(1), k = weight.dim(2);
  if (C != I)
    throw std::invalid_argument("conv2d: input channels " + std::to_string(C) +
                                " != weight in-channels " + std::to_string(I));
  if (bias.ndim() != 1 || bias.dim(0) != O)
    throw std::invalid_argument("conv2d: bias must have shape [" + std::to_string(O) + "]");
  if (stride < 1 || pad < 0) throw std::invalid_argument("conv2d: bad stride/pad");
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("conv2d: kernel does not fit padded input");

  auto out = make_node({N, O, Ho, Wo});
  const int colRows = C * k * k;
  const int colCols = Ho * Wo;
  std::vector<float> col(static_cast<std::size_t>(colRows) * colCols);
  CMapF Wm(weight.data(), O, colRows);
  for (int n = 0; n < N; ++n) {
    im2col(input.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, k, stride, pad, Ho, Wo,
           col.data());
    MapF Om(out->data.data() + static_cast<std::size_t>(n) * O * colCols, O, colCols);
    Om.noalias() = Wm * CMapF(col.data(), colRows, colCols);
    for (int o = 0; o < O; ++o) Om.row(o).array() += bias.data()[o];
  }

  TensorData* self = out.get();
  TensorData* pin = input.node().get();
  TensorData* pw = weight.node().get();
  TensorData* pb = bias.node().get();
  attach(out, {input, weight, bias},
         [self, pin, pw, pb, N, C, H, W, O, k, stride, pad, Ho, Wo] {
           const int colRows = C * k * k;
           const int colCols = Ho * Wo;
           std::vector<float> col(static_cast<std::size_t>(colRows) * colCols);
           std::vector<float> colGrad;
           if (pin->requires_grad) {
             pin->ensure_grad();
             colGrad.resize(col.size());
           }
           if (pw->requires_grad) pw->ensure_grad();
           if (pb->requires_grad) pb->ensure_grad();
           CMapF Wm(pw->data.data(), O, colRows);
           for (int n = 0; n < N; ++n) {
             CMapF Gm(self->grad.data() + static_cast<std::size_t>(n) * O * colCols, O, colCols);
             if (pw->requires_grad) {
               im2col(pin->data.data() + static_cast<std::size_t>(n) * C * H * W, C, H, W, k,
                      stride, pad, Ho, Wo, col.data());
               MapF Gw(pw->grad.data(), O, colRows);
               Gw.noalias() += Gm * CMapF(col.data(), colRows, colCols).transpose();
             }
             if (pb->requires_grad) {
               for (int o = 0; o < O; ++o) pb->grad[o] += Gm.row(o).sum();
             }
             if (pin->requires_grad) {
               MapF Gc(colGrad.data(), colRows, colCols);
               Gc.noalias() = Wm.transpose() * Gm;
               col2im_add(colGrad.data(), C, H, W, k, stride, pad, Ho, Wo,
                          pin->grad.data() + static_cast<std::size_t>(n) * C * H * W);
             }
           }
         });
  return Tensor(out);
}

Tensor leaky_relu(const Tensor& x, float slope) {
  if (!(slope > 0.0f && slope < 1.0f)) throw std::invalid_argument("leaky_relu: slope must be in (0,1)");
  return ewise_unary(
      x, [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor sigmoid(const Tensor& x) {
  return ewise_unary(
      x,
      [](float v) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor maxpool2d(const Tensor& x, int k, int stride, int pad) {
  if (x.ndim() != 4) throw std::invalid_argument("maxpool2d: input must be NCHW");
  if (k < 1 || stride < 1 || pad < 0 || pad >= k) throw std::invalid_argument("maxpool2d: bad k/stride/pad");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int Ho = (H + 2 * pad - k) / stride + 1;
  const int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho < 1 || Wo < 1) throw std::invalid_argument("maxpool2d: kernel does not fit padded input");
  auto out = make_node({N, C, Ho, Wo});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out->size(), -1);
  std::size_t oi = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const float* plane = x.data() + (static_cast<std::size_t>(n) * C + c) * H * W;
      const std::size_t base = (static_cast<std::size_t>(n) * C + c) * H * W;
      for (int oy = 0; oy < Ho; ++oy) {
        for (int ox = 0; ox < Wo; ++ox, ++oi) {
          float best = -std::numeric_limits<float>::infinity();
          std::int64_t bestIdx = -1;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H) continue;
            for (int kx = 0; kx < k; ++kx) {
              const int ix = ox * stride - pad + kx;
              if (ix < 0 || ix >= W) continue;
              const float v = plane[iy * W + ix];
              if (v > best) {
                best = v;
                bestIdx = static_cast<std::int64_t>(base) + iy * W + ix;
              }
            }
          }
          // Padded cells are excluded from max; a window fully in padding
          // cannot occur given pad < k.
          out->data[oi] = best;
          (*argmax)[oi] = bestIdx;
        }
      }
    }
  }
  TensorData* self = out.get();
  TensorData* px = x.node().get();
  attach(out, {x}, [self, px, argmax] {
    px->ensure_grad();
    const std::size_t m = self->size();
    for (std::size_t i = 0; i < m; ++i)
      if ((*argmax)[i] >= 0) px->grad[static_cast<std::size_t>((*argmax)[i])] += self->grad[i];
  });
  return Tensor(out);
}

Tensor upsample_nearest_2x(const Tensor& x) {
  if (x.ndim() != 4) throw std::invalid_argument("upsample_nearest_2x: input must be NCHW");
  const int N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto out = make_node({N, C, 2 * H, 2 * W});
  for (int nc = 0; nc < N * C; ++nc) {
    const float* src = x.data() + static_cast<std::size_t>(nc) * H * W;
    float* dst = out->data.data() + static_cast<std::size_t>(nc) * 4 * H * W;
    for (int y = 0; y < 2 * H; ++y)
      for (int xx = 0; xx < 2 * W; ++xx) dst[y * 2 * W + xx] = src[(y / 2) * W + xx / 2];
  }
  TensorData* self = out.get();
  TensorData* px = x.node().get();
  attach(out, {x}, [self, px, N, C, H, W] {
    px->ensure_grad();
    for (int nc = 0; nc < N * C; ++nc) {
      const float* g = self->grad.data() + static_cast<std::size_t>(nc) * 4 * H * W;
      float* dst = px->grad.data() + static_cast<std::size_t>(nc) * H * W;
      for (int y = 0; y < 2 * H; ++y)
        for (int xx = 0; xx < 2 * W; ++xx) dst[(y / 2) * W + xx / 2] += g[y * 2 * W + xx];
    }
  });
  return Tensor(out);
}

Tensor concat_channels(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: empty input list");
  const int N = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int Ctot = 0;
  for (const auto& x : xs) {
    if (x.ndim() != 4 || x.dim(0) != N || x.dim(2) != H || x.dim(3) != W)
      throw std::invalid_argument("concat_channels: incompatible shape " + shape_str(x.shape()));
    Ctot += x.dim(1);
  }
  auto out = make_node({N, Ctot, H, W});
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int n = 0; n < N; ++n) {
    std::size_t off = static_cast<std::size_t>(n) * Ctot * plane;
    for (const auto& x : xs) {
      const std::size_t sz = static_cast<std::size_t>(x.dim(1)) * plane;
      std::copy_n(x.data() + static_cast<std::size_t>(n) * sz, sz, out->data.data() + off);
      off += sz;
    }
  }
  TensorData* self = out.get();
  std::vector<TensorData*> ps;
  for (const auto& x : xs) ps.push_back(x.node().get());
  attach(out, xs, [self, ps, N, Ctot, plane] {
    for (int n = 0; n < N; ++n) {
      std::size_t off = static_cast<std::size_t>(n) * Ctot * plane;
      for (TensorData* p : ps) {
        const std::size_t sz = p->size() / static_cast<std::size_t>(N);
        if (p->requires_grad) {
          p->ensure_grad();
          float* dst = p->grad.data() + static_cast<std::size_t>(n) * sz;
          const float* src = self->grad.data() + off;
          for (std::size_t i = 0; i < sz; ++i) dst[i] += src[i];
        }
        off += sz;
      }
    }
  });
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  return ewise_binary(
      a, b, "add", [](float x, float y) { return x + y; },
      [](float, float, float) { return 1.0f; }, [](float, float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ewise_binary(
      a, b, "sub", [](float x, float y) { return x - y; },
      [](float, float, float) { return 1.0f; }, [](float, float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ewise_binary(
      a, b, "mul", [](float x, float y) { return x * y; },
      [](float, float y, float) { return y; }, [](float x, float, float) { return x; });
}

Tensor divide(const Tensor& a, const Tensor& b) {
  return ewise_binary(
      a, b, "divide", [](float x, float y) { return x / y; },
      [](float, float y, float) { return 1.0f / y; },
      [](float x, float y, float) { return -x / (y * y); });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  return ewise_binary(
      a, b, "minimum", [](float x, float y) { return x <= y ? x : y; },
      [](float x, float y, float) { return x <= y ? 1.0f : 0.0f; },
      [](float x, float y, float) { return x <= y ? 0.0f : 1.0f; });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
  return ewise_binary(
      a, b, "maximum", [](float x, float y) { return x >= y ? x : y; },
      [](float x, float y, float) { return x >= y ? 1.0f : 0.0f; },
      [](float x, float y, float) { return x >= y ? 0.0f : 1.0f; });
}

Tensor add_scalar(const Tensor& a, float s) {
  return ewise_unary(a, [s](float v) { return v + s; }, [](float, float) { return 1.0f; });
}

Tensor mul_scalar(const Tensor& a, float s) {
  return ewise_unary(a, [s](float v) { return v * s; }, [s](float, float) { return s; });
}

Tensor sqrt_op(const Tensor& a) {
  return ewise_unary(a, [](float v) { return std::sqrt(v); },
                     [](float, float y) { return 0.5f / std::max(y, 1e-12f); });
}

Tensor atan_op(const Tensor& a) {
  return ewise_unary(a, [](float v) { return std::atan(v); },
                     [](float v, float) { return 1.0f / (1.0f + v * v); });
}

Tensor clamp_min(const Tensor& a, float lo) {
  return ewise_unary(a, [lo](float v) { return v < lo ? lo : v; },
                     [lo](float v, float) { return v < lo ? 0.0f : 1.0f; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  const int M = a.dim(0), K = a.dim(1), N = b.dim(1);
  auto out = make_node({M, N});
  MapF(out->data.data(), M, N).noalias() = CMapF(a.data(), M, K) * CMapF(b.data(), K, N);
  TensorData* self = out.get();
  TensorData* pa = a.node().get();
  TensorData* pb = b.node().get();
  attach(out, {a, b}, [self, pa, pb, M, K, N] {
    CMapF G(self->grad.data(), M, N);
    if (pa->requires_grad) {
      pa->ensure_grad();
      MapF(pa->grad.data(), M, K).noalias() += G * CMapF(pb->data.data(), K, N).transpose();
    }
    if (pb->requires_grad) {
      pb->ensure_grad();
      MapF(pb->grad.data(), K, N).noalias() += CMapF(pa->data.data(), M, K).transpose() * G;
    }
  });
  return Tensor(out);
}

Tensor reshape(const Tensor& a, std::vector<int> shape) {
  if (numel(shape) != a.size())
    throw std::invalid_argument("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  auto out = make_node(std::move(shape));
  out->data = a.vec();
  TensorData* self = out.get();
  TensorData* pa = a.node().get();
  attach(out, {a}, [self, pa] {
    pa->ensure_grad();
    for (std::size_t i = 0; i < self->size(); ++i) pa->grad[i] += self->grad[i];
  });
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make_node({1});
  double acc = 0.0;
  for (float v : a.vec()) acc += v;
  out->data[0] = static_cast<float>(acc);
  TensorData* self = out.get();
  TensorData* pa = a.node().get();
  attach(out, {a}, [self, pa] {
    pa->ensure_grad();
    const float g = self->grad[0];
    for (auto& gv : pa->grad) gv += g;
  });
  return Tensor(out);
}

Tensor mean(const Tensor& a) { return mul_scalar(sum(a), 1.0f / static_cast<float>(a.size())); }

Tensor gather(const Tensor& a, const std::vector<std::int64_t>& flat_indices) {
  auto out = make_node({static_cast<int>(flat_indices.size())});
  for (std::size_t i = 0; i < flat_indices.size(); ++i) {
    const auto idx = flat_indices[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= a.size())
      throw std::invalid_argument("gather: index " + std::to_string(idx) + " out of range");
    out->data[i] = a.data()[idx];
  }
  auto indices = std::make_shared<std::vector<std::int64_t>>(flat_indices);
  TensorData* self = out.get();
  TensorData* pa = a.node().get();
  attach(out, {a}, [self, pa, indices] {
    pa->ensure_grad();
    for (std::size_t i = 0; i < indices->size(); ++i)
      pa->grad[static_cast<std::size_t>((*indices)[i])] += self->grad[i];
  });
  return Tensor(out);
}

namespace {

// loss = max(x,0) - x*t + log(1+exp(-|x|)); d/dx = sigmoid(x) - t
float bce_logit_term(float x, float t) {
  return std::max(x, 0.0f) - x * t + std::log1p(std::exp(-std::fabs(x)));
}

float sigmoid_scalar(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

}  // namespace

Tensor bce_with_logits_masked(const Tensor& logits, const std::vector<float>& targets,
                              const std::vector<std::uint8_t>& mask) {
  if (targets.size() != logits.size() || mask.size() != logits.size())
    throw std::invalid_argument("bce_with_logits_masked: size mismatch");
  std::size_t count = 0;
  double acc = 0.0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const float t = targets[i];
    if (t < 0.0f || t > 1.0f)
      throw std::invalid_argument("bce: target " + std::to_string(t) + " outside [0,1]");
    acc += bce_logit_term(logits.data()[i], t);
    ++count;
  }
  auto out = make_node({1});
  out->data[0] = count ? static_cast<float>(acc / static_cast<double>(count)) : 0.0f;
  auto tgt = std::make_shared<std::vector<float>>(targets);
  auto msk = std::make_shared<std::vector<std::uint8_t>>(mask);
  TensorData* self = out.get();
  TensorData* pl = logits.node().get();
  attach(out, {logits}, [self, pl, tgt, msk, count] {
    if (!count) return;
    pl->ensure_grad();
    const float g = self->grad[0] / static_cast<float>(count);
    for (std::size_t i = 0; i < msk->size(); ++i)
      if ((*msk)[i]) pl->grad[i] += g * (sigmoid_scalar(pl->data[i]) - (*tgt)[i]);
  });
  return Tensor(out);
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& targets) {
  check_same_shape(logits, targets, "bce_with_logits");
  std::vector<std::uint8_t> mask(logits.size(), 1);
  return bce_with_logits_masked(logits, targets.vec(), mask);
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
  auto root = loss.node();
  if (!root->requires_grad) return;

  // iterative post-order DFS; topo holds parents-before-children
  std::vector<TensorData*> topo;
  std::unordered_set<TensorData*> visited;
  struct Frame {
    TensorData* node;
    std::size_t next = 0;
  };
  std::vector<Frame> stack{{root.get()}};
  visited.insert(root.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.node->parents.size()) {
      TensorData* p = f.node->parents[f.next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.push_back({p});
    } else {
      topo.push_back(f.node);
      stack.pop_back();
    }
  }

  // fresh intermediate grads each call; leaf grads accumulate
  for (TensorData* n : topo)
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0f);
  root->ensure_grad();
  root->grad[0] += 1.0f;

  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn();
}

}  // namespace ccyd
