#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ccyd/losses.hpp"

namespace ccyd {

inline constexpr int kClassHC = 0;
inline constexpr int kClassAPD = 1;

struct AnnotatedImage {
  int width = 0, height = 0;
  std::vector<float> pixels;  // row-major H×W, values in [0,1]
  std::string subject_id;
  int slice_index = 0;
  std::vector<GroundTruth> boxes;
  // synthetic only: binary mask of the class-discriminative mid-body region
  std::vector<std::uint8_t> region_mask;

  bool has_mask() const { return !region_mask.empty(); }
  float at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct SplitPlan {
  int round_id = 0;
  std::vector<std::string> train_subjects;
  std::vector<std::string> test_subjects;
  double fraction = 0.8;
};

// Procedural analog corpus: C-shaped annular arcs on a noisy background,
// one box per image; the APD class thins and darkens the arc's mid third.
std::vector<AnnotatedImage> generate_synthetic(int n_subjects_per_class, int slices_per_subject,
                                               int size, std::uint64_t seed);

// Subject-level, class-stratified hold-out splits.
std::vector<SplitPlan> split(const std::vector<AnnotatedImage>& dataset, double fraction,
                             int rounds, std::uint64_t seed);

// Directory layout: images/*.png, masks/*.png (optional), annotations.jsonl.
void save_corpus(const std::vector<AnnotatedImage>& dataset, const std::string& dir);
std::vector<AnnotatedImage> load_corpus(const std::string& dir);

std::vector<std::string> subject_ids(const std::vector<AnnotatedImage>& dataset);

}  // namespace ccyd
