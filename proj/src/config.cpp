#include "gazemoe/config.hpp"

#include <fstream>
#include <sstream>

#include "gazemoe/error.hpp"

namespace gazemoe {

namespace {

template <typename T>
void read(const Json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(out);
  } catch (const Json::exception& e) {
    throw ParseError(std::string("config field \"") + key + "\": " + e.what());
  }
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

bool is_prob(double p) { return p >= 0.0 && p <= 1.0; }

}  // namespace

// ---- validation -----------------------------------------------------------

void MoEConfig::validate() const {
  require(n_routed >= 1, "moe.n_routed must be >= 1");
  require(top_k >= 1 && top_k <= n_routed,
          "moe.top_k must satisfy 1 <= top_k <= n_routed (got " + std::to_string(top_k) + " of " +
              std::to_string(n_routed) + ")");
  require(m_shared >= 1, "moe.m_shared must be >= 1");
  require(d_model >= 1 && mlp_ratio >= 1, "moe.d_model and moe.mlp_ratio must be positive");
}

void DecoderConfig::validate() const {
  moe.validate();
  require(num_blocks >= 1, "num_blocks must be >= 1");
  require(num_heads >= 1 && d_model % num_heads == 0,
          "d_model (" + std::to_string(d_model) + ") must be divisible by num_heads (" + std::to_string(num_heads) + ")");
  require(moe.d_model == d_model, "moe.d_model (" + std::to_string(moe.d_model) + ") must equal d_model (" +
                                      std::to_string(d_model) + ")");
  require(dropout >= 0.0 && dropout < 1.0, "dropout must be in [0,1)");
  require(feature_dim >= 1 && grid >= 1, "feature_dim and grid must be positive");
  require(heatmap_size >= grid && heatmap_size % grid == 0,
          "heatmap_size (" + std::to_string(heatmap_size) + ") must be a positive multiple of grid (" +
              std::to_string(grid) + ")");
}

DecoderConfig DecoderConfig::toy() {
  DecoderConfig c;
  c.d_model = 16;
  c.feature_dim = 16;
  c.grid = 4;
  c.heatmap_size = 8;
  c.moe.d_model = 16;
  return c;
}

DecoderConfig DecoderConfig::small() {
  DecoderConfig c;
  c.d_model = 16;
  c.feature_dim = 16;
  c.grid = 8;
  c.heatmap_size = 16;
  c.moe.d_model = 16;
  return c;
}

void LossConfig::validate() const {
  require(lambda >= 0.0, "loss.lambda must be >= 0");
  require(gamma >= 0.0, "loss.gamma must be >= 0");
  require(alpha > 0.0 && alpha <= 1.0, "loss.alpha must be in (0,1]");
  require(kl_weight >= 0.0, "loss.kl_weight must be >= 0");
  require(target_sigma > 0.0, "loss.target_sigma must be > 0");
}

void AugConfig::validate() const {
  require(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0,
          "aug crop scale range must lie within (0,1]");
  require(is_prob(hflip_prob) && is_prob(grayscale_prob) && is_prob(autocontrast_prob),
          "aug probabilities must be in [0,1]");
  require(jitter_frac >= 0.0, "aug.jitter_frac must be >= 0");
  require(min_bbox_size > 0.0 && min_bbox_size <= 1.0, "aug.min_bbox_size must be in (0,1]");
  require(brightness >= 0.0 && contrast >= 0.0 && saturation >= 0.0, "aug colour ranges must be >= 0");
  require(hue >= 0.0 && hue <= 0.5, "aug.hue must be in [0,0.5]");
  require(sharpness_min >= 0.0 && sharpness_min <= sharpness_max, "aug sharpness range is invalid");
}

AugConfig AugConfig::none() {
  AugConfig c;
  c.enable_crop = c.enable_hflip = c.enable_bbox_jitter = c.enable_photometric = false;
  return c;
}

void TrainConfig::validate() const {
  require(epochs >= 1, "train.epochs must be >= 1");
  require(batch_size >= 1, "train.batch_size must be >= 1");
  require(lr_main >= 0.0 && lr_inout_head >= 0.0 && lr_min >= 0.0, "learning rates must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "adam betas must be in [0,1)");
  require(eps > 0.0, "train.eps must be > 0");
  loss.validate();
  aug.validate();
}

TrainConfig TrainConfig::pretrain() {
  TrainConfig c;
  c.epochs = 15;
  c.batch_size = 60;
  c.lr_main = 1e-3;
  c.lr_inout_head = 1e-3;
  c.loss.lambda = 0.0;
  return c;
}

TrainConfig TrainConfig::finetune() {
  TrainConfig c;
  c.epochs = 10;
  c.batch_size = 36;
  c.lr_main = 1e-5;
  c.lr_inout_head = 1e-3;
  c.loss.lambda = 1.0;
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  require(workers >= 1, "workers must be >= 1");
  require(data.synthetic.class_balance > 0.0 && data.synthetic.class_balance < 1.0,
          "data.synthetic.class_balance must be in (0,1)");
}

// ---- JSON -----------------------------------------------------------------

void to_json(Json& j, const MoEConfig& c) {
  j = Json{{"n_routed", c.n_routed}, {"m_shared", c.m_shared}, {"top_k", c.top_k},
           {"d_model", c.d_model},   {"mlp_ratio", c.mlp_ratio}};
}

void from_json(const Json& j, MoEConfig& c) {
  read(j, "n_routed", c.n_routed);
  read(j, "m_shared", c.m_shared);
  read(j, "top_k", c.top_k);
  read(j, "d_model", c.d_model);
  read(j, "mlp_ratio", c.mlp_ratio);
}

void to_json(Json& j, const DecoderConfig& c) {
  j = Json{{"num_blocks", c.num_blocks}, {"num_heads", c.num_heads},       {"d_model", c.d_model},
           {"dropout", c.dropout},       {"feature_dim", c.feature_dim},   {"grid", c.grid},
           {"heatmap_size", c.heatmap_size}, {"moe", c.moe},               {"ffn_only", c.ffn_only}};
}

void from_json(const Json& j, DecoderConfig& c) {
  read(j, "num_blocks", c.num_blocks);
  read(j, "num_heads", c.num_heads);
  read(j, "d_model", c.d_model);
  read(j, "dropout", c.dropout);
  read(j, "feature_dim", c.feature_dim);
  read(j, "grid", c.grid);
  read(j, "heatmap_size", c.heatmap_size);
  // A bare top-level d_model also sizes the experts unless moe.d_model is given.
  c.moe.d_model = c.d_model;
  read(j, "moe", c.moe);
  read(j, "ffn_only", c.ffn_only);
}

void to_json(Json& j, const LossConfig& c) {
  j = Json{{"lambda", c.lambda},
           {"alpha", c.alpha},
           {"alpha_from_labels", c.alpha_from_labels},
           {"gamma", c.gamma},
           {"heatmap_loss", c.heatmap_loss == HeatmapLossKind::Bce ? "bce" : "mse_kl"},
           {"kl_weight", c.kl_weight},
           {"target_sigma", c.target_sigma}};
}

void from_json(const Json& j, LossConfig& c) {
  read(j, "lambda", c.lambda);
  read(j, "alpha", c.alpha);
  read(j, "alpha_from_labels", c.alpha_from_labels);
  read(j, "gamma", c.gamma);
  if (j.contains("heatmap_loss")) {
    const auto kind = j.at("heatmap_loss").get<std::string>();
    if (kind == "bce") {
      c.heatmap_loss = HeatmapLossKind::Bce;
    } else if (kind == "mse_kl") {
      c.heatmap_loss = HeatmapLossKind::MseKl;
    } else {
      throw ParseError("config field \"heatmap_loss\": expected bce or mse_kl, got " + kind);
    }
  }
  read(j, "kl_weight", c.kl_weight);
  read(j, "target_sigma", c.target_sigma);
}

void to_json(Json& j, const AugConfig& c) {
  j = Json{{"enable_crop", c.enable_crop},
           {"enable_hflip", c.enable_hflip},
           {"enable_bbox_jitter", c.enable_bbox_jitter},
           {"enable_photometric", c.enable_photometric},
           {"crop_scale_min", c.crop_scale_min},
           {"crop_scale_max", c.crop_scale_max},
           {"hflip_prob", c.hflip_prob},
           {"jitter_frac", c.jitter_frac},
           {"min_bbox_size", c.min_bbox_size},
           {"brightness", c.brightness},
           {"contrast", c.contrast},
           {"saturation", c.saturation},
           {"hue", c.hue},
           {"grayscale_prob", c.grayscale_prob},
           {"autocontrast_prob", c.autocontrast_prob},
           {"sharpness_min", c.sharpness_min},
           {"sharpness_max", c.sharpness_max},
           {"rng_seed", c.rng_seed}};
}

void from_json(const Json& j, AugConfig& c) {
  read(j, "enable_crop", c.enable_crop);
  read(j, "enable_hflip", c.enable_hflip);
  read(j, "enable_bbox_jitter", c.enable_bbox_jitter);
  read(j, "enable_photometric", c.enable_photometric);
  read(j, "crop_scale_min", c.crop_scale_min);
  read(j, "crop_scale_max", c.crop_scale_max);
  read(j, "hflip_prob", c.hflip_prob);
  read(j, "jitter_frac", c.jitter_frac);
  read(j, "min_bbox_size", c.min_bbox_size);
  read(j, "brightness", c.brightness);
  read(j, "contrast", c.contrast);
  read(j, "saturation", c.saturation);
  read(j, "hue", c.hue);
  read(j, "grayscale_prob", c.grayscale_prob);
  read(j, "autocontrast_prob", c.autocontrast_prob);
  read(j, "sharpness_min", c.sharpness_min);
  read(j, "sharpness_max", c.sharpness_max);
  read(j, "rng_seed", c.rng_seed);
}

void to_json(Json& j, const TrainConfig& c) {
  j = Json{{"epochs", c.epochs},     {"batch_size", c.batch_size}, {"lr_main", c.lr_main},
           {"lr_inout_head", c.lr_inout_head}, {"lr_min", c.lr_min}, {"betas", {c.beta1, c.beta2}},
           {"eps", c.eps},           {"seed", c.seed},             {"max_steps", c.max_steps},
           {"loss", c.loss},         {"aug", c.aug}};
}

void from_json(const Json& j, TrainConfig& c) {
  read(j, "epochs", c.epochs);
  read(j, "batch_size", c.batch_size);
  read(j, "lr_main", c.lr_main);
  read(j, "lr_inout_head", c.lr_inout_head);
  read(j, "lr_min", c.lr_min);
  if (j.contains("betas")) {
    const auto& b = j.at("betas");
    if (!b.is_array() || b.size() != 2) throw ParseError("config field \"betas\": expected [beta1, beta2]");
    c.beta1 = b[0].get<double>();
    c.beta2 = b[1].get<double>();
  }
  read(j, "eps", c.eps);
  read(j, "seed", c.seed);
  read(j, "max_steps", c.max_steps);
  read(j, "loss", c.loss);
  read(j, "aug", c.aug);
}

void to_json(Json& j, const EncoderConfig& c) {
  j = Json{{"seed", c.seed},           {"noise_scale", c.noise_scale}, {"target_amp", c.target_amp},
           {"target_width", c.target_width}, {"head_amp", c.head_amp}, {"direction_amp", c.direction_amp},
           {"image_amp", c.image_amp}};
}

void from_json(const Json& j, EncoderConfig& c) {
  read(j, "seed", c.seed);
  read(j, "noise_scale", c.noise_scale);
  read(j, "target_amp", c.target_amp);
  read(j, "target_width", c.target_width);
  read(j, "head_amp", c.head_amp);
  read(j, "direction_amp", c.direction_amp);
  read(j, "image_amp", c.image_amp);
}

void to_json(Json& j, const SyntheticConfig& c) {
  j = Json{{"n", c.n}, {"class_balance", c.class_balance}, {"seed", c.seed}, {"patch_px", c.patch_px}};
}

void from_json(const Json& j, SyntheticConfig& c) {
  read(j, "n", c.n);
  read(j, "class_balance", c.class_balance);
  read(j, "seed", c.seed);
  read(j, "patch_px", c.patch_px);
}

void to_json(Json& j, const DataConfig& c) {
  j = Json{{"annotations", c.annotations ? Json(*c.annotations) : Json(nullptr)},
           {"eval_annotations", c.eval_annotations ? Json(*c.eval_annotations) : Json(nullptr)},
           {"synthetic", c.synthetic},
           {"encoder", c.encoder}};
}

void from_json(const Json& j, DataConfig& c) {
  if (j.contains("annotations") && !j.at("annotations").is_null()) c.annotations = j.at("annotations").get<std::string>();
  if (j.contains("eval_annotations") && !j.at("eval_annotations").is_null())
    c.eval_annotations = j.at("eval_annotations").get<std::string>();
  read(j, "synthetic", c.synthetic);
  read(j, "encoder", c.encoder);
}

void to_json(Json& j, const MetricsToggles& c) {
  j = Json{{"auc", c.auc}, {"mean_l2", c.mean_l2}, {"ap", c.ap}, {"spherical", c.spherical}};
}

void from_json(const Json& j, MetricsToggles& c) {
  read(j, "auc", c.auc);
  read(j, "mean_l2", c.mean_l2);
  read(j, "ap", c.ap);
  read(j, "spherical", c.spherical);
}

void to_json(Json& j, const RunConfig& c) {
  j = Json{{"model", c.model},           {"train", c.train},         {"data", c.data},
           {"metrics", c.metrics},       {"output_dir", c.output_dir}, {"init_seed", c.init_seed},
           {"workers", c.workers}};
}

void from_json(const Json& j, RunConfig& c) {
  read(j, "model", c.model);
  read(j, "train", c.train);
  read(j, "data", c.data);
  read(j, "metrics", c.metrics);
  read(j, "output_dir", c.output_dir);
  read(j, "init_seed", c.init_seed);
  read(j, "workers", c.workers);
}

RunConfig load_run_config(const std::string& path) { return load_run_config(path, RunConfig{}); }

RunConfig load_run_config(const std::string& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path);
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("config " + path + ": expected a JSON object");
  from_json(j, base);
  base.validate();
  return base;
}

}  // namespace gazemoe
