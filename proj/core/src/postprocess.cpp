#include "ccyd/postprocess.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace ccyd {

std::vector<Detection> nms(const std::vector<Detection>& dets, float iou_threshold) {
  if (!(iou_threshold > 0.0f && iou_threshold < 1.0f))
    throw std::invalid_argument("nms: iou_threshold must be in (0,1)");
  for (const auto& d : dets)
    if (!d.box.valid())
      throw std::invalid_argument("nms: degenerate box (w=" + std::to_string(d.box.w()) +
                                  ", h=" + std::to_string(d.box.h()) + ")");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&dets](std::size_t a, std::size_t b) {
    return dets[a].score > dets[b].score;
  });
  std::vector<Detection> kept;
  std::vector<char> removed(dets.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (removed[order[i]]) continue;
    const Detection& d = dets[order[i]];
    kept.push_back(d);
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (removed[order[j]]) continue;
      if (iou(d.box, dets[order[j]].box) > iou_threshold) removed[order[j]] = 1;
    }
  }
  return kept;
}

ImageVerdict classify_image(const std::vector<Detection>& dets) {
  ImageVerdict v;
  const Detection* best = nullptr;
  for (const auto& d : dets)
    if (!best || d.score > best->score) best = &d;
  if (best) {
    v.predicted_class = best->class_id;
    v.confidence = best->score;
    v.winner = *best;
  }
  return v;
}

}  // namespace ccyd
