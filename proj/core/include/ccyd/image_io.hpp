#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ccyd {

// 8-bit grayscale PNG round trip; values quantized to the v*255 grid.
void write_gray_png(const std::string& path, const std::vector<float>& pixels, int width,
                    int height);
std::vector<float> read_gray_png(const std::string& path, int& width, int& height);

void write_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width,
                    int height);
std::vector<std::uint8_t> read_mask_png(const std::string& path, int& width, int& height);

// Heatmap in [0,1] rendered through the perceptual colormap table in
// docs/colormap.md, optionally blended over a grayscale base image.
void write_heatmap_png(const std::string& path, const std::vector<float>& heat, int width,
                       int height);
void write_overlay_png(const std::string& path, const std::vector<float>& base,
                       const std::vector<float>& heat, int width, int height, float alpha = 0.5f);

// Bilinear resample of a single-channel map.
std::vector<float> resize_bilinear(const std::vector<float>& src, int sw, int sh, int dw, int dh);

}  // namespace ccyd
