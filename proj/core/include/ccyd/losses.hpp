#pragma once

#include <utility>
#include <vector>

#include "ccyd/box.hpp"
#include "ccyd/detector.hpp"
#include "ccyd/tensor.hpp"

namespace ccyd {

struct GroundTruth {
  Box box;          // pixels, image coordinates
  int class_id = 0;
};

struct AssignmentEntry {
  int batch = 0;
  int scale = 0;
  int anchor = 0;
  int cell_y = 0;
  int cell_x = 0;
  GroundTruth gt;
};

struct TargetAssignment {
  std::vector<AssignmentEntry> entries;
  // boxes that matched no anchor at any scale (ratio filter), with batch index
  std::vector<std::pair<int, GroundTruth>> unassigned;
};

struct LossWeights {
  float box = 0.05f;
  float obj = 1.0f;
  float cls = 0.5f;
};

struct LossBreakdown {
  float box_loss = 0, obj_loss = 0, cls_loss = 0, total = 0;
  LossWeights weights;
};

// Analytic CIoU: IoU − ρ²/c² − αv. Result in (−1, 1].
double ciou(const Box& a, const Box& b);

// Differentiable CIoU of a predicted box (center/size scalar tensors)
// against a fixed target box.
Tensor ciou_graph(const Tensor& cx, const Tensor& cy, const Tensor& w, const Tensor& h,
                  const Box& target);

// Mean stable-logit BCE; rejects targets outside [0,1].
Tensor bce(const Tensor& logits, const Tensor& targets);

// YOLO-lineage ratio matching (max side ratio < threshold) with the
// containing cell plus its two nearest neighbors.
TargetAssignment assign_targets(const std::vector<std::vector<GroundTruth>>& gt_per_image,
                                const DetectorConfig& cfg, float ratio_threshold = 4.0f);

std::pair<Tensor, LossBreakdown> total_loss(const RawPrediction& raw,
                                            const TargetAssignment& assignment,
                                            const DetectorConfig& cfg,
                                            const LossWeights& weights = {});

}  // namespace ccyd
