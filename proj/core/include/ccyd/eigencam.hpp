#pragma once

#include <string>
#include <vector>

#include "ccyd/dataset.hpp"
#include "ccyd/detector.hpp"
#include "ccyd/postprocess.hpp"

namespace ccyd {

struct Heatmap {
  int width = 0, height = 0;
  std::vector<float> values;  // in [0,1]; max == 1 unless identically zero
  std::vector<std::string> source_layers;

  float at(int y, int x) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

struct CamStats {
  int argmax_x = 0, argmax_y = 0;
  bool argmax_in_region = false;
  double top5_mass_in_region = 0;  // fraction of the top-5% heat mass inside the region
};

struct CorpusCamStats {
  Heatmap average;  // canonical 64×32 detection-crop frame
  int n_images = 0;
  int n_abstained = 0;
  double brightest_in_region_rate = 0;
  double mean_top5_mass_in_region = 0;
};

// Symmetric-Gram SVD of a rows×cols row-major matrix (cyclic Jacobi on
// MᵀM). U is rows×cols, S length cols descending, V cols×cols.
void gram_svd(const std::vector<double>& M, int rows, int cols, std::vector<double>& U,
              std::vector<double>& S, std::vector<double>& V);

// Projects a C×H×W (or 1×C×H×W) activation onto its first right singular
// vector; sign fixed by nonnegative sum, negatives clamped, min-max
// normalized.
Heatmap eigen_cam(const Tensor& activation);

// Per-layer maps, bilinearly upsampled to the input resolution and averaged.
Heatmap multilayer_cam(const DetectorWeights& w, const DetectorConfig& cfg, const Tensor& image,
                       const std::vector<std::string>& layers);

CamStats cam_stats(const Heatmap& map, const std::vector<std::uint8_t>& region_mask);

struct CamRunConfig {
  std::vector<std::string> layers;  // empty = the three neck outputs
  float conf_threshold = 0.25f;
  float iou_threshold = 0.45f;
};

// Heatmaps cropped to each image's winning detection, resampled to 64×32
// and averaged; per-image stats measured against the synthetic region mask.
CorpusCamStats average_cam(const std::vector<const AnnotatedImage*>& subset,
                           const DetectorWeights& w, const DetectorConfig& cfg,
                           const CamRunConfig& cam = {});

}  // namespace ccyd
