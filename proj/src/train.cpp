#include "gazemoe/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "gazemoe/augment.hpp"
#include "gazemoe/error.hpp"
#include "gazemoe/log.hpp"
#include "gazemoe/losses.hpp"

namespace gazemoe {

void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments, std::size_t t,
                 double lr, double beta1, double beta2, double eps) {
  if (t == 0) throw ConfigError("adam_update: step must be >= 1");
  if (param.size() != grad.size()) throw DimensionError("adam_update: parameter and gradient sizes differ");
  if (moments.m.empty()) moments.m.assign(param.size(), 0.0);
  if (moments.v.empty()) moments.v.assign(param.size(), 0.0);
  if (moments.m.size() != param.size() || moments.v.size() != param.size())
    throw DimensionError("adam_update: moment buffers do not match the parameter size");
  const double td = static_cast<double>(t);
  const double step_size = lr * std::sqrt(1.0 - std::pow(beta2, td)) / (1.0 - std::pow(beta1, td));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    moments.m[i] = beta1 * moments.m[i] + (1.0 - beta1) * g;
    moments.v[i] = beta2 * moments.v[i] + (1.0 - beta2) * g * g;
    param[i] -= step_size * moments.m[i] / (std::sqrt(moments.v[i]) + eps);
  }
}

void adam_step(ParamStore& params, AdamState& state, const std::function<double(const std::string&)>& lr_for,
               double beta1, double beta2, double eps) {
  for (const auto& [name, t] : params.entries()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad())
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + name);
  }
  ++state.step;
  for (auto& [name, t] : params.entries()) {
    std::vector<double> zeros;
    std::span<const double> g = t.grad();
    if (!t.has_grad()) {
      zeros.assign(t.size(), 0.0);
      g = zeros;
    }
    adam_update(t.mutable_data(), g, state.moments[name], state.step, lr_for(name), beta1, beta2, eps);
  }
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min) {
  if (total_steps == 0) throw ConfigError("cosine_lr: total_steps must be positive");
  const double frac = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(M_PI * frac));
}

ParamGroups partition_params(const ParamStore& params) {
  ParamGroups g;
  for (const auto& [name, t] : params.entries()) {
    (param_group(name) == ParamGroup::InOutHead ? g.inout_head : g.main).push_back(name);
  }
  std::set<std::string> seen;
  for (const auto* list : {&g.main, &g.inout_head})
    for (const auto& n : *list)
      if (!seen.insert(n).second) throw Error("parameter " + n + " belongs to more than one group");
  if (seen.size() != params.size()) throw Error("parameter groups do not cover every learnable tensor");
  return g;
}

Json to_json(const LossLogEntry& e) {
  return Json{{"epoch", e.epoch},         {"step", e.step},
              {"lr_main", e.lr_main},     {"lr_head", e.lr_head},
              {"loss_total", e.loss_total}, {"loss_heatmap", e.loss_heatmap},
              {"loss_focal", e.loss_focal}};
}

BatchLoss batch_loss(const GazeMoE& model, std::span<const Sample* const> batch, const LossConfig& cfg,
                     bool training, std::uint64_t dropout_seed, bool backward) {
  if (batch.empty()) throw ConfigError("batch_loss: empty batch");
  std::optional<NoGradGuard> guard;
  if (!backward) guard.emplace();

  std::size_t n_in = 0;
  for (const Sample* s : batch) n_in += s->record.gaze_point ? 1 : 0;
  const std::size_t hm = model.config().heatmap_size;
  const double w_hm = n_in ? 1.0 / static_cast<double>(n_in) : 0.0;
  const double w_focal = cfg.lambda / static_cast<double>(batch.size());

  BatchLoss out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = *batch[i];
    Rng rng(derive_seed(dropout_seed, i));
    const ForwardOutput pred = model.forward(s.features, s.record.bbox, training, rng);
    std::optional<Tensor> target;
    if (s.record.gaze_point)
      target = Tensor::from({hm, hm}, gaussian_target(*s.record.gaze_point, hm, cfg.target_sigma));
    const LossBreakdown parts = total_loss(pred.heatmap, pred.in_frame, target, s.record.in_frame, cfg);
    const double h = target ? parts.heatmap.item() : 0.0;
    const double f = parts.focal.item();
    if (!std::isfinite(h) || !std::isfinite(f)) throw NumericError("non-finite loss for sample " + s.record.sample_id);
    out.heatmap += w_hm * h;
    out.focal += f / static_cast<double>(batch.size());
    if (backward) {
      const Tensor weighted = target ? add(scale(parts.heatmap, w_hm), scale(parts.focal, w_focal))
                                     : scale(parts.focal, w_focal);
      weighted.backward();
    }
  }
  out.total = out.heatmap + cfg.lambda * out.focal;
  return out;
}

BatchLoss dataset_loss(const GazeMoE& model, const std::vector<Sample>& samples, const LossConfig& cfg) {
  std::vector<const Sample*> ptrs;
  for (const auto& s : samples) ptrs.push_back(&s);
  return batch_loss(model, ptrs, cfg, false, 0, false);
}

namespace {

bool any_augmentation(const AugConfig& a) {
  return a.enable_crop || a.enable_hflip || a.enable_bbox_jitter || a.enable_photometric;
}

bool augmentation_possible(const std::vector<Sample>& data, const AugConfig& aug, const SyntheticEncoder* encoder) {
  if (!any_augmentation(aug)) return false;
  const bool images = std::any_of(data.begin(), data.end(), [](const Sample& s) { return s.image.has_value(); });
  if (!encoder || !images) {
    log().warn("augmentation enabled but samples carry no images or no encoder is configured; training unaugmented");
    return false;
  }
  return true;
}

LossConfig resolve_loss(const LossConfig& cfg, const std::vector<Sample>& data) {
  LossConfig out = cfg;
  if (cfg.alpha_from_labels) {
    const auto labels = labels_of(data);
    out.alpha = compute_alpha(labels);
    log().info("alpha from labels: {}", out.alpha);
  }
  return out;
}

std::function<double(const std::string&)> group_lr(double lr_main, double lr_head) {
  return [lr_main, lr_head](const std::string& name) {
    return param_group(name) == ParamGroup::InOutHead ? lr_head : lr_main;
  };
}

double cell_error(const GazePrediction& p, Point2 gaze) {
  const std::size_t size = p.heatmap_size;
  const auto best = static_cast<std::size_t>(std::distance(
      p.heatmap.begin(), std::max_element(p.heatmap.begin(), p.heatmap.end())));
  const double s = static_cast<double>(size);
  const double tx = std::clamp(std::floor(gaze.x * s), 0.0, s - 1.0);
  const double ty = std::clamp(std::floor(gaze.y * s), 0.0, s - 1.0);
  const double dx = static_cast<double>(best % size) - tx;
  const double dy = static_cast<double>(best / size) - ty;
  return std::hypot(dx, dy);
}

}  // namespace

Sample augmented_sample(const Sample& s, const AugConfig& aug, const SyntheticEncoder* encoder, Rng& rng) {
  Sample out;
  out.record = s.record;
  if (!encoder || !s.image || !any_augmentation(aug)) {
    out.features = s.features;
    return out;
  }
  const AnnotatedImage img = pipeline(to_annotated(s), aug, rng);
  out.record.bbox = img.bbox;
  out.record.gaze_point = img.gaze_point;
  out.features = encoder->encode(s.record.sample_id, img.bbox, img.gaze_point, &img);
  return out;
}

TrainResult train_loop(GazeMoE& model, const std::vector<Sample>& data, const TrainConfig& cfg, AdamState& adam,
                       const SyntheticEncoder* encoder, std::ostream* loss_log) {
  cfg.validate();
  if (data.empty()) throw ConfigError("train_loop: dataset is empty");
  const LossConfig loss = resolve_loss(cfg.loss, data);
  partition_params(model.params());
  const bool augment = augmentation_possible(data, cfg.aug, encoder);

  const std::size_t n = data.size();
  const std::size_t bs = std::min(cfg.batch_size, n);
  const std::size_t per_epoch = (n + bs - 1) / bs;
  std::size_t total = cfg.epochs * per_epoch;
  if (cfg.max_steps) total = std::min(total, cfg.max_steps);

  TrainResult result;
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < cfg.epochs && result.steps < total; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle(derive_seed(cfg.seed, 0x5348, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.uniform_int(i)]);

    for (std::size_t b = 0; b < per_epoch && result.steps < total; ++b) {
      const std::size_t lo = b * bs, hi = std::min(n, lo + bs);
      std::vector<Sample> views;
      std::vector<const Sample*> ptrs;
      if (augment) {
        views.reserve(hi - lo);
        for (std::size_t i = lo; i < hi; ++i) {
          Rng rng(derive_seed(cfg.aug.rng_seed ^ cfg.seed, adam.step, order[i]));
          views.push_back(augmented_sample(data[order[i]], cfg.aug, encoder, rng));
        }
        for (const auto& v : views) ptrs.push_back(&v);
      } else {
        for (std::size_t i = lo; i < hi; ++i) ptrs.push_back(&data[order[i]]);
      }

      const double lr_main = cosine_lr(result.steps, total, cfg.lr_main, cfg.lr_min);
      const double lr_head = cosine_lr(result.steps, total, cfg.lr_inout_head, cfg.lr_min);
      model.params().zero_grad();
      BatchLoss bl;
      try {
        bl = batch_loss(model, ptrs, loss, true, derive_seed(cfg.seed, 0xD0, adam.step), true);
      } catch (const NumericError& e) {
        throw NumericError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) + ": " + e.what());
      }
      adam_step(model.params(), adam, group_lr(lr_main, lr_head), cfg.beta1, cfg.beta2, cfg.eps);
      ++result.steps;

      LossLogEntry e{epoch, adam.step, lr_main, lr_head, bl.total, bl.heatmap, bl.focal};
      if (loss_log) *loss_log << to_json(e).dump() << '\n';
      log().debug("epoch {} step {} loss {:.6f}", epoch, adam.step, bl.total);
      result.log.push_back(e);
    }
  }
  model.params().zero_grad();
  return result;
}

ProbeResult overfit_probe(GazeMoE& model, const std::vector<Sample>& samples, const TrainConfig& cfg,
                          const ProbeOptions& opts, const SyntheticEncoder* encoder) {
  cfg.validate();
  if (samples.empty() || samples.size() > 16)
    throw ConfigError("overfit_probe: needs between 1 and 16 samples, got " + std::to_string(samples.size()));
  if (opts.max_steps == 0 || opts.eval_every == 0) throw ConfigError("overfit_probe: steps must be positive");
  const LossConfig loss = resolve_loss(cfg.loss, samples);
  const bool augment = augmentation_possible(samples, cfg.aug, encoder);

  ProbeResult r;
  r.n_samples = samples.size();
  r.initial_loss = dataset_loss(model, samples, loss).total;
  r.final_loss = r.initial_loss;
  r.trajectory.emplace_back(0, r.initial_loss);
  if (r.initial_loss < opts.threshold) r.converged = true;

  AdamState adam;
  for (std::size_t step = 0; step < opts.max_steps && !(r.converged && opts.stop_at_threshold); ++step) {
    std::vector<Sample> views;
    std::vector<const Sample*> ptrs;
    if (augment) {
      for (std::size_t i = 0; i < samples.size(); ++i) {
        Rng rng(derive_seed(cfg.aug.rng_seed ^ cfg.seed, step, i));
        views.push_back(augmented_sample(samples[i], cfg.aug, encoder, rng));
      }
      for (const auto& v : views) ptrs.push_back(&v);
    } else {
      for (const auto& s : samples) ptrs.push_back(&s);
    }
    model.params().zero_grad();
    const BatchLoss bl = batch_loss(model, ptrs, loss, true, derive_seed(cfg.seed, 0xD1, step), true);
    r.step_losses.push_back(bl.total);
    const double lr_main = cosine_lr(step, opts.max_steps, cfg.lr_main, cfg.lr_min);
    const double lr_head = cosine_lr(step, opts.max_steps, cfg.lr_inout_head, cfg.lr_min);
    adam_step(model.params(), adam, group_lr(lr_main, lr_head), cfg.beta1, cfg.beta2, cfg.eps);
    r.steps = step + 1;

    if (r.steps % opts.eval_every == 0 || r.steps == opts.max_steps) {
      const double l = dataset_loss(model, samples, loss).total;
      r.final_loss = l;
      r.trajectory.emplace_back(r.steps, l);
      if (!std::isfinite(l) || l > 10.0 * r.initial_loss) {
        r.diverged = true;
        log().error("overfit probe diverged at step {}: loss {} vs initial {}", r.steps, l, r.initial_loss);
        break;
      }
      r.converged = l < opts.threshold;
    }
  }
  model.params().zero_grad();

  for (const auto& s : samples) {
    const GazePrediction p = model.predict(s.features, s.record.bbox);
    if (s.record.gaze_point) r.cell_errors.push_back(cell_error(p, *s.record.gaze_point));
    if ((p.in_frame_prob >= 0.5) == (s.record.in_frame == 1)) ++r.inout_correct;
  }
  return r;
}

GradCheckReport model_gradcheck(const DecoderConfig& cfg, std::uint64_t seed, const LossConfig& loss,
                                const GradCheckOptions& opts) {
  cfg.validate();
  GazeMoE model(cfg, seed);
  const SyntheticEncoder encoder(EncoderConfig{}, cfg.feature_dim, cfg.grid);
  const auto samples = synthetic_dataset(2, 0.5, seed, encoder);
  const std::size_t hm = cfg.heatmap_size;
  RoutingStats stats;
  const auto loss_fn = [&]() {
    stats = RoutingStats{};
    Tensor total = Tensor::scalar(0.0);
    for (const auto& s : samples) {
      Rng rng(0);
      const ForwardOutput pred = model.forward(s.features, s.record.bbox, false, rng, &stats);
      std::optional<Tensor> target;
      if (s.record.gaze_point)
        target = Tensor::from({hm, hm}, gaussian_target(*s.record.gaze_point, hm, loss.target_sigma));
      total = add(total, total_loss(pred.heatmap, pred.in_frame, target, s.record.in_frame, loss).total);
    }
    return total;
  };
  NamedTensors params(model.params().entries().begin(), model.params().entries().end());
  GradCheckOptions with_regime = opts;
  if (!with_regime.regime) with_regime.regime = [&stats] { return stats.selection_hash; };
  return finite_difference_check(loss_fn, params, with_regime);
}

}  // namespace gazemoe
