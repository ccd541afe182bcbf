#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazemoe/config.hpp"
#include "gazemoe/types.hpp"

namespace gazemoe {

struct MetricsReport {
  /// Absent when the metric is undefined for the evaluated set.
  std::optional<double> auc;
  std::optional<double> mean_l2;
  std::optional<double> ap_inout;
  std::optional<double> spherical_dist;
  std::size_t n_samples = 0;
};

/// Flat object with the five fields; undefined metrics are null.
Json to_json(const MetricsReport& r);

/// Maximum cell (first in row-major order on ties) mapped to its centre.
Point2 argmax_point(std::span<const double> heatmap, std::size_t size);

double mean_l2(std::span<const Point2> preds, std::span<const Point2> gts);

/// ROC AUC of heatmap scores against a binary mask, ties by midrank.
double heatmap_auc(std::span<const double> heatmap, std::span<const int> mask);

/// Step-interpolated AP: Σ (R_n − R_{n−1})·P_n over descending score
/// thresholds. Label 1 is the positive class.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Great-circle angle between two equirectangular points:
/// lon = 2πx − π, lat = π/2 − πy.
double spherical_distance(Point2 pred, Point2 gt);

/// Ground-truth AUC mask: target Gaussian thresholded at half its peak.
std::vector<int> gaze_mask(Point2 gaze, std::size_t size, double sigma);

/// Item handed to evaluate(): ground truth plus the model's prediction.
struct EvalItem {
  GazePrediction prediction;
  std::optional<Point2> gaze_point;
  bool in_frame = false;
};

/// L2 / AUC / spherical over in-frame items, AP over all items.
MetricsReport evaluate(std::span<const EvalItem> items, double target_sigma, const MetricsToggles& toggles = {});

}  // namespace gazemoe
