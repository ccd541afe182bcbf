#include "gazemoe/losses.hpp"

#include <algorithm>
#include <cmath>

namespace gazemoe {

namespace {

void check_label(double y) {
  if (y != 0.0 && y != 1.0) throw ConfigError("binary label must be 0 or 1");
}

Tensor clamp_prob(const Tensor& p) { return clamp(p, kProbClamp, 1.0 - kProbClamp); }

}  // namespace

Tensor heatmap_bce(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("heatmap_bce: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const Tensor p = clamp_prob(pred);
  const Tensor pos = mul(target, log(p));
  const Tensor neg = mul(one_minus(target), log(one_minus(p)));
  return scale(mean(add(pos, neg)), -1.0);
}

Tensor bce(const Tensor& p, double y) {
  check_label(y);
  const Tensor pc = clamp_prob(p);
  return y == 1.0 ? scale(log(pc), -1.0) : scale(log(one_minus(pc)), -1.0);
}

double bce(double p, double y) { return bce(Tensor::scalar(p), y).item(); }

Tensor focal(const Tensor& p, double y, double alpha, double gamma) {
  check_label(y);
  const Tensor pc = clamp_prob(p);
  const Tensor p_t = y == 1.0 ? pc : one_minus(pc);
  const Tensor modulator = pow_scalar(one_minus(p_t), gamma);
  return scale(mul(modulator, bce(p, y)), alpha);
}

double focal(double p, double y, double alpha, double gamma) { return focal(Tensor::scalar(p), y, alpha, gamma).item(); }

Tensor heatmap_mse_kl(const Tensor& pred, const Tensor& target, double kl_weight) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("heatmap_mse_kl: prediction " + shape_str(pred.shape()) + " vs target " +
                         shape_str(target.shape()));
  }
  const Tensor diff = sub(pred, target);
  const Tensor mse = mean(mul(diff, diff));

  double target_mass = 0.0;
  for (double v : target.data()) target_mass += v;
  if (!(target_mass > 0.0)) throw NumericError("heatmap_mse_kl: target map has no mass");
  // Σ t_n·(log t_n − log p_n); zero-target pixels contribute nothing.
  std::vector<double> t_norm(target.size()), t_log_t(target.size(), 0.0);
  double entropy_term = 0.0;
  for (std::size_t i = 0; i < t_norm.size(); ++i) {
    t_norm[i] = target.at(i) / target_mass;
    if (t_norm[i] > 0.0) entropy_term += t_norm[i] * std::log(t_norm[i]);
  }
  const Tensor p = clamp_prob(pred);
  // Σ t_n·log p_n with p_n = p / Σp and Σ t_n = 1.
  const Tensor cross = sub(sum(mul(Tensor::from(target.shape(), t_norm), log(p))), log(sum(p)));
  const Tensor kl = add_scalar(scale(cross, -1.0), entropy_term);
  return add(mse, scale(kl, kl_weight));
}

LossBreakdown total_loss(const Tensor& pred_heatmap, const Tensor& pred_in_frame, const std::optional<Tensor>& target_hm,
                         double in_frame_label, const LossConfig& cfg) {
  cfg.validate();
  LossBreakdown out;
  if (target_hm) {
    out.heatmap = cfg.heatmap_loss == HeatmapLossKind::Bce ? heatmap_bce(pred_heatmap, *target_hm)
                                                           : heatmap_mse_kl(pred_heatmap, *target_hm, cfg.kl_weight);
  } else {
    out.heatmap = Tensor::scalar(0.0);
  }
  out.focal = focal(pred_in_frame, in_frame_label, cfg.alpha, cfg.gamma);
  out.total = add(out.heatmap, scale(out.focal, cfg.lambda));
  return out;
}

double compute_alpha(std::span<const int> labels) {
  std::size_t in = 0, out = 0;
  for (int l : labels) {
    if (l == 1) ++in;
    else if (l == 0) ++out;
    else throw ConfigError("compute_alpha: labels must be 0 or 1");
  }
  if (in == 0 || out == 0) {
    throw ConfigError("compute_alpha: dataset contains a single class; set loss.alpha explicitly");
  }
  return static_cast<double>(std::min(in, out)) / static_cast<double>(std::max(in, out));
}

}  // namespace gazemoe
