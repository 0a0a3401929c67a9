#include "ccyd/eigencam.hpp"

#include "ccyd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ccyd {

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric n×n matrix (row-major).
// Eigenpairs returned descending.
void jacobi_eigh(std::vector<double>& A, int n, std::vector<double>& evals,
                 std::vector<double>& evecs) {
  evecs.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) evecs[static_cast<std::size_t>(i) * n + i] = 1.0;
  auto a = [&A, n](int i, int j) -> double& { return A[static_cast<std::size_t>(i) * n + j]; };
  auto v = [&evecs, n](int i, int j) -> double& {
    return evecs[static_cast<std::size_t>(i) * n + j];
  };
  double norm = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) norm += a(i, j) * a(i, j);
  const double tol = 1e-30 * std::max(norm, 1e-300);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off <= tol) break;
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }
  evals.resize(static_cast<std::size_t>(n));
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n; ++i) evals[static_cast<std::size_t>(i)] = a(i, i);
  std::stable_sort(order.begin(), order.end(),
                   [&evals](int x, int y) { return evals[static_cast<std::size_t>(x)] > evals[static_cast<std::size_t>(y)]; });
  std::vector<double> se(static_cast<std::size_t>(n));
  std::vector<double> sv(evecs.size());
  for (int j = 0; j < n; ++j) {
    se[static_cast<std::size_t>(j)] = evals[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])];
    for (int i = 0; i < n; ++i)
      sv[static_cast<std::size_t>(i) * n + j] =
          evecs[static_cast<std::size_t>(i) * n + order[static_cast<std::size_t>(j)]];
  }
  evals = std::move(se);
  evecs = std::move(sv);
}

}  // namespace

void gram_svd(const std::vector<double>& M, int rows, int cols, std::vector<double>& U,
              std::vector<double>& S, std::vector<double>& V) {
  if (M.size() != static_cast<std::size_t>(rows) * cols)
    throw std::invalid_argument("gram_svd: matrix size mismatch");
  // Gram system G = MᵀM, cols×cols
  std::vector<double> G(static_cast<std::size_t>(cols) * cols, 0.0);
  for (int i = 0; i < cols; ++i)
    for (int j = i; j < cols; ++j) {
      double acc = 0.0;
      for (int r = 0; r < rows; ++r)
        acc += M[static_cast<std::size_t>(r) * cols + i] * M[static_cast<std::size_t>(r) * cols + j];
      G[static_cast<std::size_t>(i) * cols + j] = acc;
      G[static_cast<std::size_t>(j) * cols + i] = acc;
    }
  std::vector<double> evals;
  jacobi_eigh(G, cols, evals, V);
  S.resize(static_cast<std::size_t>(cols));
  for (int i = 0; i < cols; ++i) S[static_cast<std::size_t>(i)] = std::sqrt(std::max(0.0, evals[static_cast<std::size_t>(i)]));
  // U = M V Σ⁻¹; near-null directions get zero columns
  U.assign(static_cast<std::size_t>(rows) * cols, 0.0);
  for (int j = 0; j < cols; ++j) {
    const double sj = S[static_cast<std::size_t>(j)];
    if (sj < 1e-12) continue;
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int k = 0; k < cols; ++k)
        acc += M[static_cast<std::size_t>(r) * cols + k] * V[static_cast<std::size_t>(k) * cols + j];
      U[static_cast<std::size_t>(r) * cols + j] = acc / sj;
    }
  }
}

Heatmap eigen_cam(const Tensor& activation) {
  std::vector<int> shape = activation.shape();
  if (shape.size() == 4) {
    if (shape[0] != 1) throw std::invalid_argument("eigen_cam: batch activations not supported");
    shape.erase(shape.begin());
  }
  if (shape.size() != 3) throw std::invalid_argument("eigen_cam: activation must be C×H×W");
  const int C = shape[0], H = shape[1], W = shape[2];
  const int HW = H * W;

  Heatmap hm;
  hm.width = W;
  hm.height = H;
  hm.values.assign(static_cast<std::size_t>(HW), 0.0f);

  // M is (H·W)×C: spatial positions as rows, channels as columns
  std::vector<double> M(static_cast<std::size_t>(HW) * C);
  bool all_zero = true;
  for (int c = 0; c < C; ++c)
    for (int i = 0; i < HW; ++i) {
      const double v = activation.data()[static_cast<std::size_t>(c) * HW + i];
      M[static_cast<std::size_t>(i) * C + c] = v;
      if (v != 0.0) all_zero = false;
    }
  if (all_zero) return hm;

  std::vector<double> U, S, V;
  gram_svd(M, HW, C, U, S, V);

  // raw map = M·v₁, sign fixed so the map sums nonnegative
  std::vector<double> raw(static_cast<std::size_t>(HW), 0.0);
  double total = 0.0;
  for (int i = 0; i < HW; ++i) {
    double acc = 0.0;
    for (int c = 0; c < C; ++c)
      acc += M[static_cast<std::size_t>(i) * C + c] * V[static_cast<std::size_t>(c) * C + 0];
    raw[static_cast<std::size_t>(i)] = acc;
    total += acc;
  }
  if (total < 0.0)
    for (auto& v : raw) v = -v;
  double lo = 1e300, hi = -1e300;
  for (auto& v : raw) {
    v = std::max(v, 0.0);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo > 0.0)
    for (int i = 0; i < HW; ++i)
      hm.values[static_cast<std::size_t>(i)] = static_cast<float>((raw[static_cast<std::size_t>(i)] - lo) / (hi - lo));
  return hm;
}

namespace {

void renormalize(Heatmap& hm) {
  float lo = 1e30f, hi = -1e30f;
  for (float v : hm.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi - lo > 0.0f)
    for (auto& v : hm.values) v = (v - lo) / (hi - lo);
  else
    for (auto& v : hm.values) v = 0.0f;
}

}  // namespace

Heatmap multilayer_cam(const DetectorWeights& w, const DetectorConfig& cfg, const Tensor& image,
                       const std::vector<std::string>& layers) {
  if (layers.empty()) throw std::invalid_argument("multilayer_cam: no layers given");
  NoGradGuard ng;
  CapturedActivations captured;
  forward(w, cfg, image, layers, &captured);
  const int S = cfg.input_size;
  Heatmap out;
  out.width = out.height = S;
  out.values.assign(static_cast<std::size_t>(S) * S, 0.0f);
  for (const auto& name : layers) {
    auto it = captured.find(name);
    if (it == captured.end()) throw std::invalid_argument("multilayer_cam: layer not captured: " + name);
    Heatmap layer = eigen_cam(it->second);
    std::vector<float> up = resize_bilinear(layer.values, layer.width, layer.height, S, S);
    for (std::size_t i = 0; i < out.values.size(); ++i) up[i] /= static_cast<float>(layers.size());
    for (std::size_t i = 0; i < out.values.size(); ++i) out.values[i] += up[i];
    out.source_layers.push_back(name);
  }
  renormalize(out);
  return out;
}

CamStats cam_stats(const Heatmap& map, const std::vector<std::uint8_t>& region_mask) {
  if (region_mask.size() != map.values.size())
    throw std::invalid_argument("cam_stats: mask size does not match heatmap");
  CamStats s;
  std::size_t best = 0;
  for (std::size_t i = 1; i < map.values.size(); ++i)
    if (map.values[i] > map.values[best]) best = i;
  s.argmax_x = static_cast<int>(best % static_cast<std::size_t>(map.width));
  s.argmax_y = static_cast<int>(best / static_cast<std::size_t>(map.width));
  s.argmax_in_region = region_mask[best] != 0;

  // top-5% brightest pixels, mass fraction inside region
  std::vector<std::size_t> order(map.values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&map](std::size_t a, std::size_t b) {
    return map.values[a] > map.values[b];
  });
  const std::size_t k = std::max<std::size_t>(1, map.values.size() / 20);
  double mass = 0.0, in_region = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    mass += map.values[order[i]];
    if (region_mask[order[i]]) in_region += map.values[order[i]];
  }
  s.top5_mass_in_region = mass > 0.0 ? in_region / mass : 0.0;
  return s;
}

CorpusCamStats average_cam(const std::vector<const AnnotatedImage*>& subset,
                           const DetectorWeights& w, const DetectorConfig& cfg,
                           const CamRunConfig& cam) {
  if (subset.empty()) throw std::invalid_argument("average_cam: empty image subset");
  std::vector<std::string> layers = cam.layers;
  if (layers.empty()) {
    auto defaults = default_cam_layers();
    layers.assign(defaults.begin(), defaults.end());
  }
  constexpr int kCanonW = 64, kCanonH = 32;
  CorpusCamStats out;
  out.average.width = kCanonW;
  out.average.height = kCanonH;
  out.average.values.assign(static_cast<std::size_t>(kCanonW) * kCanonH, 0.0f);
  out.average.source_layers = layers;

  NoGradGuard ng;
  double rate = 0.0, mass = 0.0;
  int used = 0;
  for (const AnnotatedImage* img : subset) {
    Tensor t = Tensor::from_data({1, 1, img->height, img->width}, img->pixels);
    RawPrediction raw = forward(w, cfg, t);
    ImageVerdict v = classify_image(nms(decode(raw, cfg, cam.conf_threshold), cam.iou_threshold));
    if (v.abstained()) {
      ++out.n_abstained;
      continue;
    }
    Heatmap hm = multilayer_cam(w, cfg, t, layers);
    const Box& b = v.winner->box;
    const int bx = std::clamp(static_cast<int>(b.x1), 0, img->width - 1);
    const int by = std::clamp(static_cast<int>(b.y1), 0, img->height - 1);
    const int bw = std::clamp(static_cast<int>(std::ceil(b.x2)) - bx, 1, img->width - bx);
    const int bh = std::clamp(static_cast<int>(std::ceil(b.y2)) - by, 1, img->height - by);
    std::vector<float> crop(static_cast<std::size_t>(bw) * bh);
    for (int y = 0; y < bh; ++y)
      for (int x = 0; x < bw; ++x)
        crop[static_cast<std::size_t>(y) * bw + x] = hm.at(by + y, bx + x);
    std::vector<float> canon = resize_bilinear(crop, bw, bh, kCanonW, kCanonH);
    for (std::size_t i = 0; i < canon.size(); ++i) out.average.values[i] += canon[i];

    if (img->has_mask()) {
      CamStats s = cam_stats(hm, img->region_mask);
      rate += s.argmax_in_region ? 1.0 : 0.0;
      mass += s.top5_mass_in_region;
      ++used;
    }
  }
  out.n_images = static_cast<int>(subset.size());
  const int contributing = out.n_images - out.n_abstained;
  if (contributing > 0)
    for (auto& v : out.average.values) v /= static_cast<float>(contributing);
  renormalize(out.average);
  if (used > 0) {
    out.brightest_in_region_rate = rate / used;
    out.mean_top5_mass_in_region = mass / used;
  }
  return out;
}

}  // namespace ccyd
