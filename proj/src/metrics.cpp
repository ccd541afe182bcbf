#include "gazemoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gazemoe/data.hpp"
#include "gazemoe/error.hpp"

namespace gazemoe {

Json to_json(const MetricsReport& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); };
  return Json{{"auc", opt(r.auc)},
              {"mean_l2", opt(r.mean_l2)},
              {"ap_inout", opt(r.ap_inout)},
              {"spherical_dist", opt(r.spherical_dist)},
              {"n_samples", r.n_samples}};
}

Point2 argmax_point(std::span<const double> heatmap, std::size_t size) {
  if (heatmap.empty() || heatmap.size() != size * size) {
    throw DimensionError("argmax_point: heatmap must hold size² values");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < heatmap.size(); ++i)
    if (heatmap[i] > heatmap[best]) best = i;
  const double s = static_cast<double>(size);
  return {(static_cast<double>(best % size) + 0.5) / s, (static_cast<double>(best / size) + 0.5) / s};
}

double mean_l2(std::span<const Point2> preds, std::span<const Point2> gts) {
  if (preds.size() != gts.size()) throw DimensionError("mean_l2: prediction and ground-truth counts differ");
  if (preds.empty()) throw UndefinedMetricError("mean_l2: no in-frame samples");
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += std::hypot(preds[i].x - gts[i].x, preds[i].y - gts[i].y);
  return total / static_cast<double>(preds.size());
}

double heatmap_auc(std::span<const double> heatmap, std::span<const int> mask) {
  if (heatmap.size() != mask.size()) throw DimensionError("heatmap_auc: heatmap and mask sizes differ");
  const std::size_t n = heatmap.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return heatmap[a] < heatmap[b]; });

  // Mann-Whitney U with average ranks for tied scores.
  double pos_rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && heatmap[order[j]] == heatmap[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (mask[order[k]]) {
        pos_rank_sum += midrank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw UndefinedMetricError("heatmap_auc: mask needs positive and negative cells");
  const double np = static_cast<double>(n_pos);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * static_cast<double>(n_neg));
}

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw DimensionError("average_precision: score and label counts differ");
  const std::size_t n = scores.size();
  const auto total_pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  if (total_pos == 0) throw UndefinedMetricError("average_precision: no positive samples");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]] == 1 ? 1 : 0;
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

double spherical_distance(Point2 pred, Point2 gt) {
  const double lon1 = 2.0 * M_PI * pred.x - M_PI, lat1 = M_PI / 2.0 - M_PI * pred.y;
  const double lon2 = 2.0 * M_PI * gt.x - M_PI, lat2 = M_PI / 2.0 - M_PI * gt.y;
  const double s_lat = std::sin(0.5 * (lat2 - lat1));
  const double s_lon = std::sin(0.5 * (lon2 - lon1));
  const double a = std::clamp(s_lat * s_lat + std::cos(lat1) * std::cos(lat2) * s_lon * s_lon, 0.0, 1.0);
  return 2.0 * std::atan2(std::sqrt(a), std::sqrt(1.0 - a));
}

std::vector<int> gaze_mask(Point2 gaze, std::size_t size, double sigma) {
  const auto target = gaussian_target(gaze, size, sigma);
  std::vector<int> mask(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) mask[i] = target[i] >= 0.5 ? 1 : 0;
  return mask;
}

MetricsReport evaluate(std::span<const EvalItem> items, double target_sigma, const MetricsToggles& toggles) {
  if (items.empty()) throw UndefinedMetricError("evaluate: empty dataset");
  MetricsReport report;
  report.n_samples = items.size();

  std::vector<Point2> preds, gts;
  std::vector<double> scores;
  std::vector<int> labels;
  double auc_sum = 0.0, sph_sum = 0.0;
  std::size_t auc_count = 0;
  for (const auto& item : items) {
    scores.push_back(item.prediction.in_frame_prob);
    labels.push_back(item.in_frame ? 1 : 0);
    if (!item.in_frame || !item.gaze_point) continue;
    const std::size_t size = item.prediction.heatmap_size;
    const Point2 p = argmax_point(item.prediction.heatmap, size);
    preds.push_back(p);
    gts.push_back(*item.gaze_point);
    sph_sum += spherical_distance(p, *item.gaze_point);
    if (toggles.auc) {
      try {
        auc_sum += heatmap_auc(item.prediction.heatmap, gaze_mask(*item.gaze_point, size, target_sigma));
        ++auc_count;
      } catch (const UndefinedMetricError&) {
      }
    }
  }
  if (!preds.empty()) {
    if (toggles.mean_l2) report.mean_l2 = mean_l2(preds, gts);
    if (toggles.spherical) report.spherical_dist = sph_sum / static_cast<double>(preds.size());
  }
  if (toggles.auc && auc_count > 0) report.auc = auc_sum / static_cast<double>(auc_count);
  if (toggles.ap) {
    try {
      report.ap_inout = average_precision(scores, labels);
    } catch (const UndefinedMetricError&) {
    }
  }
  return report;
}

}  // namespace gazemoe
