#pragma once

#include <array>
#include <cstdint>
#include <random>

#include "ccyd/dataset.hpp"

namespace ccyd {

struct AugmentConfig {
  // applied half the time: eval runs on clean single-object frames, so the
  // model has to see both composed and unmodified layouts during training
  double mosaic_prob = 0.5;
  double flip_prob = 0.5;
  double gamma_lo = 0.7, gamma_hi = 1.5;
  double min_box_area_px = 16.0;
  // boxes losing more than this area fraction to mosaic clipping are dropped
  double max_clip_fraction = 0.6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MosaicStats {
  int dropped_overclipped = 0;  // boxes clipped past max_clip_fraction
  int dropped_small = 0;        // boxes below min_box_area_px after clipping
};

// Four inputs composed on one out_size canvas around a random pivot drawn
// from the central half; each input anisotropically fills its quadrant.
AnnotatedImage mosaic(const std::array<const AnnotatedImage*, 4>& samples, int out_size,
                      const AugmentConfig& cfg, std::mt19937_64& rng, MosaicStats* stats = nullptr);

AnnotatedImage hflip(const AnnotatedImage& sample, const AugmentConfig& cfg, std::mt19937_64& rng);
AnnotatedImage gamma_correct(const AnnotatedImage& sample, const AugmentConfig& cfg,
                             std::mt19937_64& rng);

// portable uniform draw shared by the augmentation ops
double uniform_double(std::mt19937_64& rng, double lo, double hi);

}  // namespace ccyd
