#pragma once

#include <algorithm>
#include <cmath>

namespace ccyd {

// Axis-aligned box, pixel coordinates, x2/y2 exclusive-edge convention.
struct Box {
  float x1 = 0, y1 = 0, x2 = 0, y2 = 0;

  float w() const { return x2 - x1; }
  float h() const { return y2 - y1; }
  float cx() const { return 0.5f * (x1 + x2); }
  float cy() const { return 0.5f * (y1 + y2); }
  float area() const { return std::max(0.0f, w()) * std::max(0.0f, h()); }
  bool valid() const { return x2 > x1 && y2 > y1; }
};

inline double iou(const Box& a, const Box& b) {
  const float ix1 = std::max(a.x1, b.x1);
  const float iy1 = std::max(a.y1, b.y1);
  const float ix2 = std::min(a.x2, b.x2);
  const float iy2 = std::min(a.y2, b.y2);
  const double inter =
      static_cast<double>(std::max(0.0f, ix2 - ix1)) * std::max(0.0f, iy2 - iy1);
  const double uni = static_cast<double>(a.area()) + b.area() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

struct Detection {
  Box box;
  int class_id = -1;
  float score = 0.0f;
};

}  // namespace ccyd
