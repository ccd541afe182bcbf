#pragma once

#include <optional>
#include <span>

#include "gazemoe/config.hpp"
#include "gazemoe/tensor.hpp"

namespace gazemoe {

/// Probabilities are clamped into [kProbClamp, 1 − kProbClamp] before any log.
inline constexpr double kProbClamp = 1e-7;

/// Mean over pixels of −t·log p − (1−t)·log(1−p).
Tensor heatmap_bce(const Tensor& pred, const Tensor& target);

/// −y·log p − (1−y)·log(1−p) for a single-element p.
Tensor bce(const Tensor& p, double y);
double bce(double p, double y);

/// α·(1 − p_t)^γ·BCE(p, y), p_t = p if y = 1 else 1 − p.
Tensor focal(const Tensor& p, double y, double alpha, double gamma);
double focal(double p, double y, double alpha, double gamma);

/// Pixel MSE plus kl_weight·KL(target ‖ pred), both maps renormalized to
/// distributions over pixels for the KL term.
Tensor heatmap_mse_kl(const Tensor& pred, const Tensor& target, double kl_weight);

struct LossBreakdown {
  Tensor total;
  Tensor heatmap;
  Tensor focal;
};

/// L = L_heatmap + λ·L_focal for one sample. `target_hm` is absent for
/// out-of-frame samples, whose heatmap term is zero.
LossBreakdown total_loss(const Tensor& pred_heatmap, const Tensor& pred_in_frame, const std::optional<Tensor>& target_hm,
                         double in_frame_label, const LossConfig& cfg);

/// count(minor class) / count(major class) over binary in/out labels.
double compute_alpha(std::span<const int> labels);

}  // namespace gazemoe
