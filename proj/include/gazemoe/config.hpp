#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"

namespace gazemoe {

using Json = nlohmann::json;

/// Mixture-of-Experts feed-forward layout (shared + routed experts).
struct MoEConfig {
  std::size_t n_routed = 4;
  std::size_t m_shared = 1;
  std::size_t top_k = 2;
  std::size_t d_model = 256;
  /// Expert hidden width over d_model.
  std::size_t mlp_ratio = 1;

  std::size_t d_h() const { return mlp_ratio * d_model; }
  void validate() const;
  bool operator==(const MoEConfig&) const = default;
};

struct DecoderConfig {
  std::size_t num_blocks = 3;
  std::size_t num_heads = 8;
  std::size_t d_model = 256;
  double dropout = 0.1;
  /// Encoder channel count (ViT-L width).
  std::size_t feature_dim = 1024;
  /// Token grid side: 448 px input / 14 px patches.
  std::size_t grid = 32;
  std::size_t heatmap_size = 64;
  MoEConfig moe;
  /// Replaces every MoE layer with a single plain FFN of width d_h.
  bool ffn_only = false;

  std::size_t seq_len() const { return grid * grid; }
  void validate() const;
  bool operator==(const DecoderConfig&) const = default;

  /// Gradient-check scale: d_model 16, 4×4 grid, N=4, K=2.
  static DecoderConfig toy();
  /// Overfit/ablation scale: d_model 16 on an 8×8 grid with a 16×16 heatmap.
  static DecoderConfig small();
};

enum class HeatmapLossKind { Bce, MseKl };

struct LossConfig {
  double lambda = 1.0;
  double alpha = 1.0;
  /// Replace alpha with the minor/major class ratio of the training labels.
  bool alpha_from_labels = false;
  double gamma = 2.0;
  HeatmapLossKind heatmap_loss = HeatmapLossKind::Bce;
  double kl_weight = 0.05;
  /// Gaussian target width in heatmap cells (3 cells at 64×64).
  double target_sigma = 3.0;

  void validate() const;
  bool operator==(const LossConfig&) const = default;
};

struct AugConfig {
  bool enable_crop = true;
  bool enable_hflip = true;
  bool enable_bbox_jitter = true;
  bool enable_photometric = true;

  double crop_scale_min = 0.5;
  double crop_scale_max = 1.0;
  double hflip_prob = 0.5;
  double jitter_frac = 0.1;
  /// Smallest normalized bbox side kept after jitter.
  double min_bbox_size = 0.01;

  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  double hue = 0.05;
  double grayscale_prob = 0.1;
  double autocontrast_prob = 0.2;
  double sharpness_min = 0.5;
  double sharpness_max = 2.0;

  std::uint64_t rng_seed = 0;

  void validate() const;
  bool operator==(const AugConfig&) const = default;

  /// Every transform disabled.
  static AugConfig none();
};

struct TrainConfig {
  std::size_t epochs = 15;
  std::size_t batch_size = 60;
  double lr_main = 1e-3;
  double lr_inout_head = 1e-3;
  double lr_min = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  /// Stop after this many optimizer steps (0 = run all epochs).
  std::size_t max_steps = 0;
  LossConfig loss;
  AugConfig aug;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;

  /// Scene pre-training: one learning rate, no in/out supervision.
  static TrainConfig pretrain();
  /// Fine-tuning: 1e-3 for the in/out head, 1e-5 elsewhere, λ = 1.
  static TrainConfig finetune();
};

/// Parameters of the deterministic stand-in for the frozen encoder.
struct EncoderConfig {
  std::uint64_t seed = 1234;
  double noise_scale = 0.5;
  double target_amp = 2.0;
  /// Width (token cells) of the planted bump at the gaze point.
  double target_width = 1.0;
  double head_amp = 1.0;
  double direction_amp = 1.0;
  /// Weight of the pixel-derived component when an image is supplied.
  double image_amp = 0.5;

  bool operator==(const EncoderConfig&) const = default;
};

struct SyntheticConfig {
  std::size_t n = 64;
  /// Fraction of in-frame samples.
  double class_balance = 0.6;
  std::uint64_t seed = 0;
  /// Pixels per token cell of the rendered scene image.
  std::size_t patch_px = 4;

  bool operator==(const SyntheticConfig&) const = default;
};

struct DataConfig {
  /// Line-delimited annotation file; features are resolved relative to it.
  std::optional<std::string> annotations;
  std::optional<std::string> eval_annotations;
  /// Used when no annotation file is given.
  SyntheticConfig synthetic;
  EncoderConfig encoder;

  bool operator==(const DataConfig&) const = default;
};

struct MetricsToggles {
  bool auc = true;
  bool mean_l2 = true;
  bool ap = true;
  bool spherical = true;
  bool operator==(const MetricsToggles&) const = default;
};

struct RunConfig {
  DecoderConfig model;
  TrainConfig train;
  DataConfig data;
  MetricsToggles metrics;
  std::string output_dir = "out";
  std::uint64_t init_seed = 0;
  std::size_t workers = 1;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

void to_json(Json& j, const MoEConfig& c);
void from_json(const Json& j, MoEConfig& c);
void to_json(Json& j, const DecoderConfig& c);
void from_json(const Json& j, DecoderConfig& c);
void to_json(Json& j, const LossConfig& c);
void from_json(const Json& j, LossConfig& c);
void to_json(Json& j, const AugConfig& c);
void from_json(const Json& j, AugConfig& c);
void to_json(Json& j, const TrainConfig& c);
void from_json(const Json& j, TrainConfig& c);
void to_json(Json& j, const EncoderConfig& c);
void from_json(const Json& j, EncoderConfig& c);
void to_json(Json& j, const SyntheticConfig& c);
void from_json(const Json& j, SyntheticConfig& c);
void to_json(Json& j, const DataConfig& c);
void from_json(const Json& j, DataConfig& c);
void to_json(Json& j, const MetricsToggles& c);
void from_json(const Json& j, MetricsToggles& c);
void to_json(Json& j, const RunConfig& c);
void from_json(const Json& j, RunConfig& c);

RunConfig load_run_config(const std::string& path);
/// Fields present in the file override those of `base`.
RunConfig load_run_config(const std::string& path, RunConfig base);

}  // namespace gazemoe
