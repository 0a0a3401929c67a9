#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ccyd/box.hpp"
#include "ccyd/tensor.hpp"

namespace ccyd {

struct DetectorConfig {
  int input_size = 128;   // square, divisible by 32
  int width_base = 16;    // channels of the first stage, even
  int num_classes = 2;
  int in_channels = 1;
  int anchors_per_scale = 3;
  std::array<int, 3> strides{8, 16, 32};
  // [scale][anchor] = (w,h) in pixels; defaults frozen from k-means over
  // the synthetic generator's box distribution at input_size 128.
  std::array<std::array<std::array<float, 2>, 3>, 3> anchors = kDefaultAnchors;
  float leaky_slope = 0.1f;

  static const std::array<std::array<std::array<float, 2>, 3>, 3> kDefaultAnchors;

  int head_channels() const { return anchors_per_scale * (5 + num_classes); }
  void validate() const;  // throws std::invalid_argument with a named diagnostic
};

struct ConvSpec {
  std::string name;
  int in_ch, out_ch, k, stride, pad;
  bool linear;  // head convs carry no activation
};

// Declaration-order list of every conv layer for a config; build() and the
// shape-walk tests both derive from it.
std::vector<ConvSpec> layer_specs(const DetectorConfig& cfg);

using DetectorWeights = std::map<std::string, Tensor>;
using CapturedActivations = std::map<std::string, Tensor>;

// Raw head outputs, one tensor per scale, N×(A*(5+nc))×H_s×W_s. Within the
// channel dim, anchor a occupies [a*(5+nc), (a+1)*(5+nc)) ordered
// tx,ty,tw,th,obj,cls0..cls{nc-1}; all values are logits.
struct RawPrediction {
  std::array<Tensor, 3> scales;
};

// He-uniform conv weights, zero biases, deterministic in (cfg, seed).
DetectorWeights build(const DetectorConfig& cfg, std::uint64_t seed);

// `capture` names layers whose post-activation outputs are wanted (detached
// copies); unknown names are rejected.
RawPrediction forward(const DetectorWeights& w, const DetectorConfig& cfg, const Tensor& images,
                      const std::vector<std::string>& capture = {},
                      CapturedActivations* captured = nullptr);

// Layers whose outputs feed the three heads.
std::array<std::string, 3> neck_output_layers();

// Default Eigen-CAM capture set (the first backbone stage).
std::array<std::string, 5> default_cam_layers();

std::vector<Detection> decode(const RawPrediction& raw, const DetectorConfig& cfg,
                              float conf_threshold, int batch_index = 0);

}  // namespace ccyd
