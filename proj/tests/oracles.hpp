// Independent reference implementations the test suites check the library
// against. Everything here is deliberately naive (loops, enumeration,
// rasterization) and kept free of the code paths under test.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "ccyd/box.hpp"
#include "ccyd/detector.hpp"
#include "ccyd/tensor.hpp"

namespace oracles {

inline double uni(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + u * (hi - lo);
}

// six-nested-loop convolution reference, 64-bit accumulation
inline std::vector<double> conv2d_naive(const std::vector<double>& input, int N, int C, int H,
                                        int W, const std::vector<double>& weight, int O, int k,
                                        const std::vector<double>& bias, int stride, int pad,
                                        int& Ho, int& Wo) {
  Ho = (H + 2 * pad - k) / stride + 1;
  Wo = (W + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(N) * O * Ho * Wo, 0.0);
  for (int n = 0; n < N; ++n)
    for (int o = 0; o < O; ++o)
      for (int oy = 0; oy < Ho; ++oy)
        for (int ox = 0; ox < Wo; ++ox) {
          double acc = bias[static_cast<std::size_t>(o)];
          for (int c = 0; c < C; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int iy = oy * stride - pad + ky;
                const int ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += input[((static_cast<std::size_t>(n) * C + c) * H + iy) * W + ix] *
                       weight[((static_cast<std::size_t>(o) * C + c) * k + ky) * k + kx];
              }
          out[((static_cast<std::size_t>(n) * O + o) * Ho + oy) * Wo + ox] = acc;
        }
  return out;
}

inline std::vector<double> maxpool_naive(const std::vector<double>& input, int N, int C, int H,
                                         int W, int k, int stride, int pad, int& Ho, int& Wo) {
  Ho = (H + 2 * pad - k) / stride + 1;
  Wo = (W + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<std::size_t>(N) * C * Ho * Wo);
  for (int nc = 0; nc < N * C; ++nc)
    for (int oy = 0; oy < Ho; ++oy)
      for (int ox = 0; ox < Wo; ++ox) {
        double best = -1e300;
        for (int ky = 0; ky < k; ++ky)
          for (int kx = 0; kx < k; ++kx) {
            const int iy = oy * stride - pad + ky;
            const int ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
            best = std::max(best, input[(static_cast<std::size_t>(nc) * H + iy) * W + ix]);
          }
        out[(static_cast<std::size_t>(nc) * Ho + oy) * Wo + ox] = best;
      }
  return out;
}

// central finite differences of a scalar-valued function of one tensor's
// elements; eval must recompute the loss from scratch
inline std::vector<double> finite_diff(ccyd::Tensor& param, const std::function<double()>& eval,
                                       double eps = 1e-2) {
  std::vector<double> grad(param.size());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float orig = param.data()[i];
    param.data()[i] = static_cast<float>(orig + eps);
    const double fp = eval();
    param.data()[i] = static_cast<float>(orig - eps);
    const double fm = eval();
    param.data()[i] = orig;
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

// max relative error with an absolute floor for near-zero entries
inline double max_rel_err(const std::vector<double>& a, const std::vector<double>& b,
                          double floor = 1e-4) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::fabs(a[i]), std::fabs(b[i]), floor});
    worst = std::max(worst, std::fabs(a[i] - b[i]) / denom);
  }
  return worst;
}

// worst absolute difference, normalized by the largest reference magnitude
inline double max_err_vs_norm(const std::vector<double>& a, const std::vector<double>& b) {
  double mx = 0.0, worst = 0.0;
  for (double v : b) mx = std::max(mx, std::fabs(v));
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return mx > 0.0 ? worst / mx : worst;
}

// supersampled rasterization IoU
inline double iou_raster(const ccyd::Box& a, const ccyd::Box& b, int samples_per_unit = 32) {
  const double x0 = std::min(a.x1, b.x1), x1 = std::max(a.x2, b.x2);
  const double y0 = std::min(a.y1, b.y1), y1 = std::max(a.y2, b.y2);
  const int nx = std::max(1, static_cast<int>((x1 - x0) * samples_per_unit));
  const int ny = std::max(1, static_cast<int>((y1 - y0) * samples_per_unit));
  long long inter = 0, uni_n = 0;
  for (int iy = 0; iy < ny; ++iy) {
    const double y = y0 + (iy + 0.5) * (y1 - y0) / ny;
    for (int ix = 0; ix < nx; ++ix) {
      const double x = x0 + (ix + 0.5) * (x1 - x0) / nx;
      const bool in_a = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
      const bool in_b = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
      if (in_a && in_b) ++inter;
      if (in_a || in_b) ++uni_n;
    }
  }
  return uni_n ? static_cast<double>(inter) / static_cast<double>(uni_n) : 0.0;
}

// independent CIoU written straight from the formula
inline double ciou_reference(const ccyd::Box& a, const ccyd::Box& b) {
  const double ix1 = std::max(a.x1, b.x1), iy1 = std::max(a.y1, b.y1);
  const double ix2 = std::min(a.x2, b.x2), iy2 = std::min(a.y2, b.y2);
  const double inter = std::max(0.0, ix2 - ix1) * std::max(0.0, iy2 - iy1);
  const double areaA = static_cast<double>(a.w()) * a.h();
  const double areaB = static_cast<double>(b.w()) * b.h();
  const double iou_v = inter / (areaA + areaB - inter);
  const double cw = std::max(a.x2, b.x2) - std::min(a.x1, b.x1);
  const double ch = std::max(a.y2, b.y2) - std::min(a.y1, b.y1);
  const double c2 = cw * cw + ch * ch;
  const double rho2 = std::pow((a.x1 + a.x2) / 2.0 - (b.x1 + b.x2) / 2.0, 2) +
                      std::pow((a.y1 + a.y2) / 2.0 - (b.y1 + b.y2) / 2.0, 2);
  const double pi = 3.14159265358979323846;
  const double v =
      4.0 / (pi * pi) *
      std::pow(std::atan(static_cast<double>(b.w()) / b.h()) - std::atan(static_cast<double>(a.w()) / a.h()), 2);
  const double alpha = v / (1.0 - iou_v + v + 1e-12);
  return iou_v - rho2 / c2 - alpha * v;
}

// O(n²) brute-force greedy suppression
inline std::vector<ccyd::Detection> nms_brute(std::vector<ccyd::Detection> dets,
                                              float iou_threshold) {
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&dets](std::size_t x, std::size_t y) { return dets[x].score > dets[y].score; });
  std::vector<ccyd::Detection> kept;
  std::vector<bool> alive(dets.size(), true);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    if (!alive[order[oi]]) continue;
    kept.push_back(dets[order[oi]]);
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj)
      if (alive[order[oj]] && ccyd::iou(dets[order[oi]].box, dets[order[oj]].box) > iou_threshold)
        alive[order[oj]] = false;
  }
  return kept;
}

// pair-counting (Mann-Whitney) AUC: P(score_pos > score_neg) + 0.5 P(tie)
inline double auc_pairs(const std::vector<std::pair<double, int>>& scores) {
  double wins = 0.0;
  long long pairs = 0;
  for (const auto& [sp, cp] : scores) {
    if (cp != 1) continue;
    for (const auto& [sn, cn] : scores) {
      if (cn != 0) continue;
      ++pairs;
      if (sp > sn)
        wins += 1.0;
      else if (sp == sn)
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

// per-cell loop re-implementation of the sigmoid-offset decode
inline std::vector<ccyd::Detection> decode_reference(const ccyd::RawPrediction& raw,
                                                     const ccyd::DetectorConfig& cfg,
                                                     float conf_threshold, int batch = 0) {
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  std::vector<ccyd::Detection> dets;
  const int nc = cfg.num_classes, A = cfg.anchors_per_scale, attrs = 5 + nc;
  for (int si = 0; si < 3; ++si) {
    const ccyd::Tensor& t = raw.scales[static_cast<std::size_t>(si)];
    const int G = t.dim(2);
    const double stride = cfg.strides[static_cast<std::size_t>(si)];
    for (int a = 0; a < A; ++a)
      for (int cy = 0; cy < G; ++cy)
        for (int cx = 0; cx < G; ++cx) {
          auto val = [&](int attr) {
            const std::size_t idx =
                ((static_cast<std::size_t>(batch) * A * attrs + static_cast<std::size_t>(a) * attrs + attr) * G + cy) * G + cx;
            return static_cast<double>(t.data()[idx]);
          };
          double best = 0.0;
          int best_id = 0;
          for (int c = 0; c < nc; ++c) {
            const double s = sig(val(5 + c));
            if (s > best) {
              best = s;
              best_id = c;
            }
          }
          const double score = sig(val(4)) * best;
          if (score < conf_threshold) continue;
          const double bx = (2.0 * sig(val(0)) - 0.5 + cx) * stride;
          const double by = (2.0 * sig(val(1)) - 0.5 + cy) * stride;
          const double sw = 2.0 * sig(val(2)), sh = 2.0 * sig(val(3));
          const double aw = cfg.anchors[static_cast<std::size_t>(si)][static_cast<std::size_t>(a)][0];
          const double ah = cfg.anchors[static_cast<std::size_t>(si)][static_cast<std::size_t>(a)][1];
          const double bw = aw * sw * sw, bh = ah * sh * sh;
          const double S = cfg.input_size;
          ccyd::Box b{static_cast<float>(std::clamp(bx - bw / 2, 0.0, S)),
                      static_cast<float>(std::clamp(by - bh / 2, 0.0, S)),
                      static_cast<float>(std::clamp(bx + bw / 2, 0.0, S)),
                      static_cast<float>(std::clamp(by + bh / 2, 0.0, S))};
          if (!b.valid()) continue;
          dets.push_back({b, best_id, static_cast<float>(score)});
        }
  }
  return dets;
}

}  // namespace oracles
