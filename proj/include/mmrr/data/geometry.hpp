#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>

namespace mmrr {

// Axis-aligned box in pixels. Construction rejects zero or negative area.
class BoundingBox {
 public:
  BoundingBox() = default;
  BoundingBox(double x1, double y1, double x2, double y2) : x1_(x1), y1_(y1), x2_(x2), y2_(y2) {
    if (!(x1 < x2) || !(y1 < y2)) {
      throw std::invalid_argument("degenerate bounding box (" + std::to_string(x1) + "," +
                                  std::to_string(y1) + "," + std::to_string(x2) + "," +
                                  std::to_string(y2) + ")");
    }
  }

  double x1() const { return x1_; }
  double y1() const { return y1_; }
  double x2() const { return x2_; }
  double y2() const { return y2_; }
  double width() const { return x2_ - x1_; }
  double height() const { return y2_ - y1_; }
  double area() const { return width() * height(); }

  friend bool operator==(const BoundingBox&, const BoundingBox&) = default;

 private:
  double x1_ = 0, y1_ = 0, x2_ = 1, y2_ = 1;
};

inline double intersection_area(const BoundingBox& a, const BoundingBox& b) {
  const double w = std::min(a.x2(), b.x2()) - std::max(a.x1(), b.x1());
  const double h = std::min(a.y2(), b.y2()) - std::max(a.y1(), b.y1());
  return (w > 0 && h > 0) ? w * h : 0.0;
}

inline double iou(const BoundingBox& a, const BoundingBox& b) {
  const double inter = intersection_area(a, b);
  return inter / (a.area() + b.area() - inter);
}

// Match threshold for predicted vs gold boxes.
inline constexpr double kIouThreshold = 0.5;

}  // namespace mmrr
