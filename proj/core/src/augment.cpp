#include "ccyd/augment.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccyd {

double uniform_double(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
  return lo + u * (hi - lo);
}

void AugmentConfig::validate() const {
  if (mosaic_prob < 0.0 || mosaic_prob > 1.0)
    throw std::invalid_argument("AugmentConfig.mosaic_prob: must be in [0,1]");
  if (flip_prob < 0.0 || flip_prob > 1.0)
    throw std::invalid_argument("AugmentConfig.flip_prob: must be in [0,1]");
  if (!(gamma_lo > 0.0) || gamma_lo > gamma_hi)
    throw std::invalid_argument("AugmentConfig.gamma_range: need 0 < lo <= hi");
  if (min_box_area_px < 0.0)
    throw std::invalid_argument("AugmentConfig.min_box_area_px: must be >= 0");
}

AnnotatedImage mosaic(const std::array<const AnnotatedImage*, 4>& samples, int out_size,
                      const AugmentConfig& cfg, std::mt19937_64& rng, MosaicStats* stats) {
  cfg.validate();
  for (const auto* s : samples)
    if (!s || s->width <= 0 || s->height <= 0)
      throw std::invalid_argument("mosaic: requires 4 valid samples");

  AnnotatedImage out;
  out.width = out.height = out_size;
  out.pixels.assign(static_cast<std::size_t>(out_size) * out_size, 0.0f);
  out.subject_id = samples[0]->subject_id;
  out.slice_index = samples[0]->slice_index;

  const int px = static_cast<int>(uniform_double(rng, out_size * 0.25, out_size * 0.75));
  const int py = static_cast<int>(uniform_double(rng, out_size * 0.25, out_size * 0.75));

  // quadrant rects: x0,y0,x1,y1 on the canvas; order TL,TR,BL,BR
  const int qr[4][4] = {{0, 0, px, py},
                        {px, 0, out_size, py},
                        {0, py, px, out_size},
                        {px, py, out_size, out_size}};
  for (int q = 0; q < 4; ++q) {
    const AnnotatedImage& src = *samples[static_cast<std::size_t>(q)];
    const int x0 = qr[q][0], y0 = qr[q][1], x1 = qr[q][2], y1 = qr[q][3];
    const int qw = x1 - x0, qh = y1 - y0;
    if (qw <= 0 || qh <= 0) continue;
    const double sx = static_cast<double>(qw) / src.width;
    const double sy = static_cast<double>(qh) / src.height;
    for (int y = y0; y < y1; ++y) {
      const int syi = std::min(src.height - 1, static_cast<int>((y - y0) / sy));
      for (int x = x0; x < x1; ++x) {
        const int sxi = std::min(src.width - 1, static_cast<int>((x - x0) / sx));
        out.pixels[static_cast<std::size_t>(y) * out_size + x] = src.at(syi, sxi);
      }
    }
    for (const GroundTruth& gt : src.boxes) {
      Box b{static_cast<float>(x0 + gt.box.x1 * sx), static_cast<float>(y0 + gt.box.y1 * sy),
            static_cast<float>(x0 + gt.box.x2 * sx), static_cast<float>(y0 + gt.box.y2 * sy)};
      const float full_area = b.area();
      Box clipped{std::max(b.x1, static_cast<float>(x0)), std::max(b.y1, static_cast<float>(y0)),
                  std::min(b.x2, static_cast<float>(x1)), std::min(b.y2, static_cast<float>(y1))};
      const float kept_area = clipped.area();
      if (full_area <= 0.0f || kept_area <= 0.0f) continue;
      if (kept_area < full_area * (1.0 - cfg.max_clip_fraction)) {
        if (stats) ++stats->dropped_overclipped;
        continue;
      }
      if (kept_area < cfg.min_box_area_px) {
        if (stats) ++stats->dropped_small;
        continue;
      }
      out.boxes.push_back({clipped, gt.class_id});
    }
  }
  return out;
}

AnnotatedImage hflip(const AnnotatedImage& sample, const AugmentConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  if (uniform_double(rng, 0.0, 1.0) >= cfg.flip_prob) return sample;
  AnnotatedImage out = sample;
  const int W = sample.width;
  for (int y = 0; y < sample.height; ++y)
    for (int x = 0; x < W; ++x) {
      out.pixels[static_cast<std::size_t>(y) * W + x] =
          sample.pixels[static_cast<std::size_t>(y) * W + (W - 1 - x)];
      if (sample.has_mask())
        out.region_mask[static_cast<std::size_t>(y) * W + x] =
            sample.region_mask[static_cast<std::size_t>(y) * W + (W - 1 - x)];
    }
  for (auto& gt : out.boxes) {
    const float x1 = gt.box.x1, x2 = gt.box.x2;
    gt.box.x1 = static_cast<float>(W) - x2;
    gt.box.x2 = static_cast<float>(W) - x1;
  }
  return out;
}

AnnotatedImage gamma_correct(const AnnotatedImage& sample, const AugmentConfig& cfg,
                             std::mt19937_64& rng) {
  cfg.validate();
  const double g = uniform_double(rng, cfg.gamma_lo, cfg.gamma_hi);
  AnnotatedImage out = sample;
  for (auto& v : out.pixels) v = static_cast<float>(std::pow(static_cast<double>(v), g));
  return out;
}

}  // namespace ccyd
