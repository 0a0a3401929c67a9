#include "ccyd/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ccyd {

namespace {

cv::Mat to_u8(const std::vector<float>& pixels, int width, int height) {
  if (pixels.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("image: pixel buffer does not match " + std::to_string(width) +
                                "x" + std::to_string(height));
  cv::Mat m(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const float v = std::clamp(pixels[static_cast<std::size_t>(y) * width + x], 0.0f, 1.0f);
      m.at<std::uint8_t>(y, x) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  return m;
}

// 16-stop viridis-like ramp; see docs/colormap.md
constexpr std::uint8_t kColormap[16][3] = {
    {68, 1, 84},    {71, 24, 106},  {71, 45, 123},  {66, 64, 134},  {59, 82, 139},
    {51, 99, 141},  {44, 114, 142}, {38, 130, 142}, {33, 145, 140}, {31, 160, 136},
    {40, 174, 128}, {63, 188, 115}, {94, 201, 98},  {132, 212, 75}, {173, 220, 48},
    {253, 231, 37}};

void colormap_rgb(float v, std::uint8_t& r, std::uint8_t& g, std::uint8_t& b) {
  v = std::clamp(v, 0.0f, 1.0f);
  const float f = v * 15.0f;
  const int i = std::min(14, static_cast<int>(f));
  const float t = f - i;
  r = static_cast<std::uint8_t>(std::lround(kColormap[i][0] + t * (kColormap[i + 1][0] - kColormap[i][0])));
  g = static_cast<std::uint8_t>(std::lround(kColormap[i][1] + t * (kColormap[i + 1][1] - kColormap[i][1])));
  b = static_cast<std::uint8_t>(std::lround(kColormap[i][2] + t * (kColormap[i + 1][2] - kColormap[i][2])));
}

}  // namespace

void write_gray_png(const std::string& path, const std::vector<float>& pixels, int width,
                    int height) {
  if (!cv::imwrite(path, to_u8(pixels, width, height)))
    throw std::runtime_error("write_gray_png: cannot write " + path);
}

std::vector<float> read_gray_png(const std::string& path, int& width, int& height) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("read_gray_png: cannot read " + path);
  width = m.cols;
  height = m.rows;
  std::vector<float> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] = m.at<std::uint8_t>(y, x) / 255.0f;
  return out;
}

void write_mask_png(const std::string& path, const std::vector<std::uint8_t>& mask, int width,
                    int height) {
  cv::Mat m(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      m.at<std::uint8_t>(y, x) = mask[static_cast<std::size_t>(y) * width + x] ? 255 : 0;
  if (!cv::imwrite(path, m)) throw std::runtime_error("write_mask_png: cannot write " + path);
}

std::vector<std::uint8_t> read_mask_png(const std::string& path, int& width, int& height) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw std::runtime_error("read_mask_png: cannot read " + path);
  width = m.cols;
  height = m.rows;
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out[static_cast<std::size_t>(y) * width + x] = m.at<std::uint8_t>(y, x) >= 128 ? 1 : 0;
  return out;
}

void write_heatmap_png(const std::string& path, const std::vector<float>& heat, int width,
                       int height) {
  cv::Mat m(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      std::uint8_t r, g, b;
      colormap_rgb(heat[static_cast<std::size_t>(y) * width + x], r, g, b);
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(b, g, r);
    }
  if (!cv::imwrite(path, m)) throw std::runtime_error("write_heatmap_png: cannot write " + path);
}

void write_overlay_png(const std::string& path, const std::vector<float>& base,
                       const std::vector<float>& heat, int width, int height, float alpha) {
  cv::Mat m(height, width, CV_8UC3);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      std::uint8_t r, g, b;
      colormap_rgb(heat[i], r, g, b);
      const float bg = std::clamp(base[i], 0.0f, 1.0f) * 255.0f;
      auto mix = [&](std::uint8_t c) {
        return static_cast<std::uint8_t>(std::lround((1.0f - alpha) * bg + alpha * c));
      };
      m.at<cv::Vec3b>(y, x) = cv::Vec3b(mix(b), mix(g), mix(r));
    }
  if (!cv::imwrite(path, m)) throw std::runtime_error("write_overlay_png: cannot write " + path);
}

std::vector<float> resize_bilinear(const std::vector<float>& src, int sw, int sh, int dw, int dh) {
  std::vector<float> out(static_cast<std::size_t>(dw) * dh);
  const float sx = static_cast<float>(sw) / dw;
  const float sy = static_cast<float>(sh) / dh;
  for (int y = 0; y < dh; ++y) {
    const float fy = (y + 0.5f) * sy - 0.5f;
    const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, sh - 1);
    const int y1 = std::min(y0 + 1, sh - 1);
    const float ty = std::clamp(fy - y0, 0.0f, 1.0f);
    for (int x = 0; x < dw; ++x) {
      const float fx = (x + 0.5f) * sx - 0.5f;
      const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, sw - 1);
      const int x1 = std::min(x0 + 1, sw - 1);
      const float tx = std::clamp(fx - x0, 0.0f, 1.0f);
      const float a = src[static_cast<std::size_t>(y0) * sw + x0];
      const float b = src[static_cast<std::size_t>(y0) * sw + x1];
      const float c = src[static_cast<std::size_t>(y1) * sw + x0];
      const float d = src[static_cast<std::size_t>(y1) * sw + x1];
      out[static_cast<std::size_t>(y) * dw + x] =
          (1 - ty) * ((1 - tx) * a + tx * b) + ty * ((1 - tx) * c + tx * d);
    }
  }
  return out;
}

}  // namespace ccyd
