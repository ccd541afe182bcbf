#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace gazemoe {

/// Point in continuous normalized image coordinates, [0,1]² with origin top-left.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

/// Head box in normalized coordinates.
struct BBox {
  double x_min = 0.0;
  double y_min = 0.0;
  double x_max = 1.0;
  double y_max = 1.0;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  Point2 center() const { return {0.5 * (x_min + x_max), 0.5 * (y_min + y_max)}; }
  bool inside_unit_square() const {
    return x_min >= 0.0 && y_min >= 0.0 && x_max <= 1.0 && y_max <= 1.0 && x_min <= x_max && y_min <= y_max;
  }
  bool operator==(const BBox&) const = default;
};

/// Encoder output: channel-major feature_dim × grid × grid.
struct FeatureMap {
  std::size_t feature_dim = 0;
  std::size_t grid = 0;
  std::vector<double> values;

  double at(std::size_t c, std::size_t row, std::size_t col) const {
    return values[(c * grid + row) * grid + col];
  }
  bool operator==(const FeatureMap&) const = default;
};

/// Model output for one person: sigmoid heatmap (row-major, size²) and the
/// probability that the gaze target lies inside the frame.
struct GazePrediction {
  std::size_t heatmap_size = 0;
  std::vector<double> heatmap;
  double in_frame_prob = 0.5;
};

}  // namespace gazemoe
