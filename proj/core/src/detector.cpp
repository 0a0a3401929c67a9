#include "ccyd/detector.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccyd {

namespace {

float sigmoid_s(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  const float e = std::exp(x);
  return e / (1.0f + e);
}

// uniform in [-limit, limit), 53-bit mantissa path for cross-platform
// reproducibility
float uniform_sym(std::uint64_t& state, float limit) {
  // splitmix64 step
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  z ^= z >> 31;
  const double u = static_cast<double>(z >> 11) * (1.0 / 9007199254740992.0);  // [0,1)
  return static_cast<float>((2.0 * u - 1.0) * limit);
}

}  // namespace

// Frozen k-means centroids (k=9 over 10k sampled generator boxes at size
// 128, sorted by area, three per scale).
const std::array<std::array<std::array<float, 2>, 3>, 3> DetectorConfig::kDefaultAnchors = {{
    {{{{62.8f, 35.3f}}, {{64.4f, 41.1f}}, {{70.0f, 39.6f}}}},
    {{{{65.5f, 46.7f}}, {{70.2f, 45.0f}}, {{68.0f, 52.3f}}}},
    {{{{73.6f, 48.7f}}, {{73.6f, 55.0f}}, {{76.4f, 60.3f}}}},
}};

void DetectorConfig::validate() const {
  if (input_size <= 0 || input_size % 32 != 0)
    throw std::invalid_argument("DetectorConfig.input_size: must be a positive multiple of 32, got " +
                                std::to_string(input_size));
  if (width_base < 2 || width_base % 2 != 0)
    throw std::invalid_argument("DetectorConfig.width_base: must be even and >= 2, got " +
                                std::to_string(width_base));
  if (num_classes < 2)
    throw std::invalid_argument("DetectorConfig.num_classes: must be >= 2, got " +
                                std::to_string(num_classes));
  if (in_channels != 1 && in_channels != 3)
    throw std::invalid_argument("DetectorConfig.in_channels: must be 1 or 3");
  if (anchors_per_scale != 3)
    throw std::invalid_argument("DetectorConfig.anchors_per_scale: must be 3");
  for (const auto& scale : anchors)
    for (const auto& a : scale)
      if (a[0] <= 0.0f || a[1] <= 0.0f)
        throw std::invalid_argument("DetectorConfig.anchors: all sizes must be positive");
  if (!(leaky_slope > 0.0f && leaky_slope < 1.0f))
    throw std::invalid_argument("DetectorConfig.leaky_slope: must be in (0,1)");
}

std::vector<ConvSpec> layer_specs(const DetectorConfig& cfg) {
  const int w = cfg.width_base;
  const int c[5] = {w, 2 * w, 4 * w, 8 * w, 8 * w};
  std::vector<ConvSpec> specs;
  auto conv = [&specs](std::string name, int ic, int oc, int k, int s, bool linear = false) {
    specs.push_back({std::move(name), ic, oc, k, s, k / 2, linear});
  };
  int prev = cfg.in_channels;
  for (int i = 0; i < 5; ++i) {
    const std::string p = "s" + std::to_string(i + 1);
    conv(p + ".down", prev, c[i], 3, 2);
    conv(p + ".csp.a", c[i], c[i] / 2, 1, 1);
    conv(p + ".csp.b", c[i], c[i] / 2, 1, 1);
    conv(p + ".csp.conv", c[i] / 2, c[i] / 2, 3, 1);
    conv(p + ".csp.fuse", c[i], c[i], 1, 1);
    prev = c[i];
  }
  conv("spp.fuse", 4 * c[4], c[4], 1, 1);
  conv("neck.p5_red", c[4], 4 * w, 1, 1);
  conv("neck.td4", 4 * w + c[3], 4 * w, 3, 1);
  conv("neck.p4_red", 4 * w, 2 * w, 1, 1);
  conv("neck.td3", 2 * w + c[2], 2 * w, 3, 1);
  conv("neck.bu4_down", 2 * w, 2 * w, 3, 2);
  conv("neck.bu4_fuse", 2 * w + 4 * w, 4 * w, 3, 1);
  conv("neck.bu5_down", 4 * w, 4 * w, 3, 2);
  conv("neck.bu5_fuse", 4 * w + 4 * w, 8 * w, 3, 1);
  conv("head.p3", 2 * w, cfg.head_channels(), 1, 1, true);
  conv("head.p4", 4 * w, cfg.head_channels(), 1, 1, true);
  conv("head.p5", 8 * w, cfg.head_channels(), 1, 1, true);
  return specs;
}

std::array<std::string, 3> neck_output_layers() {
  return {"neck.td3", "neck.bu4_fuse", "neck.bu5_fuse"};
}

std::array<std::string, 5> default_cam_layers() {
  // first backbone stage: its activation energy tracks stimulus saliency at
  // fine resolution, so the projection localizes the most feature-dense image
  // region. Deeper stages and the neck concentrate energy on box-extremity
  // evidence for the regression heads, which makes their maps peak at object
  // corners rather than the discriminative region.
  return {"s1.down", "s1.csp.a", "s1.csp.b", "s1.csp.conv", "s1.csp.fuse"};
}

DetectorWeights build(const DetectorConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DetectorWeights w;
  std::uint64_t state = seed * 0x2545f4914f6cdd1dULL + 0x9e3779b97f4a7c15ULL;
  for (const auto& s : layer_specs(cfg)) {
    const int fan_in = s.in_ch * s.k * s.k;
    const float limit = std::sqrt(6.0f / static_cast<float>(fan_in));
    std::vector<float> data(static_cast<std::size_t>(s.out_ch) * s.in_ch * s.k * s.k);
    for (auto& v : data) v = uniform_sym(state, limit);
    w.emplace(s.name + ".weight",
              Tensor::from_data({s.out_ch, s.in_ch, s.k, s.k}, std::move(data), true));
    w.emplace(s.name + ".bias", Tensor::zeros({s.out_ch}, true));
  }
  return w;
}

namespace {

struct ForwardCtx {
  const DetectorWeights& w;
  const DetectorConfig& cfg;
  const std::vector<std::string>* capture;
  CapturedActivations* captured;

  const Tensor& weight(const std::string& name) const {
    auto it = w.find(name);
    if (it == w.end()) throw std::invalid_argument("forward: missing weight tensor " + name);
    return it->second;
  }

  void maybe_capture(const std::string& name, const Tensor& t) const {
    if (captured && capture &&
        std::find(capture->begin(), capture->end(), name) != capture->end())
      captured->emplace(name, t.detach());
  }

  Tensor conv(const std::string& name, const Tensor& x, int k, int stride,
              bool linear = false) const {
    Tensor y = conv2d(x, weight(name + ".weight"), weight(name + ".bias"), stride, k / 2);
    if (!linear) y = leaky_relu(y, cfg.leaky_slope);
    maybe_capture(name, y);
    return y;
  }

  Tensor csp(const std::string& p, const Tensor& x) const {
    Tensor a = conv(p + ".csp.a", x, 1, 1);
    Tensor b = conv(p + ".csp.b", x, 1, 1);
    Tensor path = conv(p + ".csp.conv", a, 3, 1);
    return conv(p + ".csp.fuse", concat_channels({path, b}), 1, 1);
  }
};

}  // namespace

RawPrediction forward(const DetectorWeights& w, const DetectorConfig& cfg, const Tensor& images,
                      const std::vector<std::string>& capture, CapturedActivations* captured) {
  cfg.validate();
  if (images.ndim() != 4 || images.dim(1) != cfg.in_channels || images.dim(2) != cfg.input_size ||
      images.dim(3) != cfg.input_size)
    throw std::invalid_argument("forward: images must be Nx" + std::to_string(cfg.in_channels) +
                                "x" + std::to_string(cfg.input_size) + "x" +
                                std::to_string(cfg.input_size) + ", got " +
                                shape_str(images.shape()));
  if (!capture.empty()) {
    auto specs = layer_specs(cfg);
    for (const auto& name : capture) {
      const bool known = std::any_of(specs.begin(), specs.end(),
                                     [&name](const ConvSpec& s) { return s.name == name; });
      if (!known) throw std::invalid_argument("forward: unknown capture layer " + name);
    }
  }
  ForwardCtx ctx{w, cfg, &capture, captured};

  Tensor x = images;
  Tensor p3, p4;
  for (int i = 0; i < 5; ++i) {
    const std::string p = "s" + std::to_string(i + 1);
    x = ctx.conv(p + ".down", x, 3, 2);
    x = ctx.csp(p, x);
    if (i == 2) p3 = x;
    if (i == 3) p4 = x;
  }
  // SPP: parallel stride-1 max pools, kernels 5/9/13
  Tensor spp = concat_channels(
      {x, maxpool2d(x, 5, 1, 2), maxpool2d(x, 9, 1, 4), maxpool2d(x, 13, 1, 6)});
  Tensor p5 = ctx.conv("spp.fuse", spp, 1, 1);

  // top-down
  Tensor p5r = ctx.conv("neck.p5_red", p5, 1, 1);
  Tensor td4 = ctx.conv("neck.td4", concat_channels({upsample_nearest_2x(p5r), p4}), 3, 1);
  Tensor p4r = ctx.conv("neck.p4_red", td4, 1, 1);
  Tensor n3 = ctx.conv("neck.td3", concat_channels({upsample_nearest_2x(p4r), p3}), 3, 1);
  // bottom-up
  Tensor bu4 = ctx.conv("neck.bu4_down", n3, 3, 2);
  Tensor n4 = ctx.conv("neck.bu4_fuse", concat_channels({bu4, td4}), 3, 1);
  Tensor bu5 = ctx.conv("neck.bu5_down", n4, 3, 2);
  Tensor n5 = ctx.conv("neck.bu5_fuse", concat_channels({bu5, p5r}), 3, 1);

  RawPrediction raw;
  raw.scales[0] = ctx.conv("head.p3", n3, 1, 1, true);
  raw.scales[1] = ctx.conv("head.p4", n4, 1, 1, true);
  raw.scales[2] = ctx.conv("head.p5", n5, 1, 1, true);
  return raw;
}

std::vector<Detection> decode(const RawPrediction& raw, const DetectorConfig& cfg,
                              float conf_threshold, int batch_index) {
  if (conf_threshold < 0.0f || conf_threshold > 1.0f)
    throw std::invalid_argument("decode: conf_threshold must be in [0,1]");
  const int nc = cfg.num_classes;
  const int A = cfg.anchors_per_scale;
  const int attrs = 5 + nc;
  const float S = static_cast<float>(cfg.input_size);
  std::vector<Detection> dets;
  for (int si = 0; si < 3; ++si) {
    const Tensor& t = raw.scales[static_cast<std::size_t>(si)];
    const int G = t.dim(2);
    const float stride = static_cast<float>(cfg.strides[static_cast<std::size_t>(si)]);
    const float* base = t.data() + static_cast<std::size_t>(batch_index) * t.dim(1) * G * G;
    const std::size_t plane = static_cast<std::size_t>(G) * G;
    for (int a = 0; a < A; ++a) {
      const float aw = cfg.anchors[static_cast<std::size_t>(si)][static_cast<std::size_t>(a)][0];
      const float ah = cfg.anchors[static_cast<std::size_t>(si)][static_cast<std::size_t>(a)][1];
      const float* p = base + static_cast<std::size_t>(a) * attrs * plane;
      for (int cy = 0; cy < G; ++cy) {
        for (int cx = 0; cx < G; ++cx) {
          const std::size_t off = static_cast<std::size_t>(cy) * G + cx;
          const float obj = sigmoid_s(p[4 * plane + off]);
          float best_cls = 0.0f;
          int best_id = 0;
          for (int c = 0; c < nc; ++c) {
            const float s = sigmoid_s(p[(5 + c) * plane + off]);
            if (s > best_cls) {
              best_cls = s;
              best_id = c;
            }
          }
          const float score = obj * best_cls;
          if (score < conf_threshold) continue;
          const float bx = (2.0f * sigmoid_s(p[0 * plane + off]) - 0.5f + cx) * stride;
          const float by = (2.0f * sigmoid_s(p[1 * plane + off]) - 0.5f + cy) * stride;
          const float sw = 2.0f * sigmoid_s(p[2 * plane + off]);
          const float sh = 2.0f * sigmoid_s(p[3 * plane + off]);
          const float bw = aw * sw * sw;
          const float bh = ah * sh * sh;
          Box b{bx - bw / 2, by - bh / 2, bx + bw / 2, by + bh / 2};
          b.x1 = std::clamp(b.x1, 0.0f, S);
          b.y1 = std::clamp(b.y1, 0.0f, S);
          b.x2 = std::clamp(b.x2, 0.0f, S);
          b.y2 = std::clamp(b.y2, 0.0f, S);
          if (!b.valid()) continue;
          dets.push_back({b, best_id, score});
        }
      }
    }
  }
  return dets;
}

}  // namespace ccyd
