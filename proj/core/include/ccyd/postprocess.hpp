#pragma once

#include <optional>
#include <vector>

#include "ccyd/box.hpp"

namespace ccyd {

inline constexpr int kAbstain = -1;

struct ImageVerdict {
  int predicted_class = kAbstain;
  float confidence = 0.0f;
  std::optional<Detection> winner;

  bool abstained() const { return predicted_class == kAbstain; }
};

// Greedy class-agnostic suppression, descending score, score ties broken by
// smaller input index.
std::vector<Detection> nms(const std::vector<Detection>& dets, float iou_threshold);

// Class of the highest-score surviving detection; abstains on empty input.
ImageVerdict classify_image(const std::vector<Detection>& dets);

}  // namespace ccyd
