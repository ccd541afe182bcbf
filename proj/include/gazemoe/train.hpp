#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gazemoe/config.hpp"
#include "gazemoe/data.hpp"
#include "gazemoe/gradcheck.hpp"
#include "gazemoe/model.hpp"

namespace gazemoe {

// ---- optimizer ------------------------------------------------------------

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  bool operator==(const AdamMoments&) const = default;
};

struct AdamState {
  std::size_t step = 0;
  std::map<std::string, AdamMoments> moments;
  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update of a single tensor at step t ≥ 1:
///   m ← β1·m + (1−β1)·g,  v ← β2·v + (1−β2)·g²
///   θ ← θ − lr·√(1−β2ᵗ)/(1−β1ᵗ) · m / (√v + eps)
void adam_update(std::span<double> param, std::span<const double> grad, AdamMoments& moments, std::size_t t,
                 double lr, double beta1, double beta2, double eps);

/// Advances state.step and updates every parameter with the learning rate
/// returned by lr_for(name). Missing gradients count as zero. All gradients
/// are checked before anything is written; a non-finite one raises
/// NumericError naming its parameter.
void adam_step(ParamStore& params, AdamState& state, const std::function<double(const std::string&)>& lr_for,
               double beta1, double beta2, double eps);

/// lr_min + ½(lr_max − lr_min)(1 + cos(π·step/total_steps)), step clamped to total.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_max, double lr_min);

struct ParamGroups {
  std::vector<std::string> main;
  std::vector<std::string> inout_head;
};

/// Splits parameter names by group; throws if any tensor lands in zero or two groups.
ParamGroups partition_params(const ParamStore& params);

// ---- training -------------------------------------------------------------

struct LossLogEntry {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr_main = 0.0;
  double lr_head = 0.0;
  double loss_total = 0.0;
  double loss_heatmap = 0.0;
  double loss_focal = 0.0;
};

Json to_json(const LossLogEntry& e);

struct BatchLoss {
  double total = 0.0;
  double heatmap = 0.0;
  double focal = 0.0;
};

/// Batch objective: mean heatmap loss over in-frame samples plus λ times the
/// mean focal loss over all samples. With `backward` set, gradients of that
/// objective are accumulated into the parameters.
BatchLoss batch_loss(const GazeMoE& model, std::span<const Sample* const> batch, const LossConfig& cfg,
                     bool training, std::uint64_t dropout_seed, bool backward);

/// Eval-mode objective over the whole set, no tape.
BatchLoss dataset_loss(const GazeMoE& model, const std::vector<Sample>& samples, const LossConfig& cfg);

/// One training-time view of a sample: augmented and re-encoded when the
/// sample has an image and an encoder is available, otherwise unchanged.
Sample augmented_sample(const Sample& s, const AugConfig& aug, const SyntheticEncoder* encoder, Rng& rng);

struct TrainResult {
  std::vector<LossLogEntry> log;
  std::size_t steps = 0;
};

/// Seeded mini-batch training with per-epoch shuffles, a cosine schedule over
/// this run's steps and separate learning rates for the in/out head. Resumes
/// from `adam` (its step count keeps increasing). Each step's log entry is
/// also written as a JSON line to `loss_log` when given.
TrainResult train_loop(GazeMoE& model, const std::vector<Sample>& data, const TrainConfig& cfg, AdamState& adam,
                       const SyntheticEncoder* encoder = nullptr, std::ostream* loss_log = nullptr);

// ---- overfit probe ----------------------------------------------------------

struct ProbeOptions {
  std::size_t max_steps = 2000;
  double threshold = 0.05;
  /// Eval-mode loss is measured every this many steps.
  std::size_t eval_every = 10;
  /// Stop once the threshold is reached.
  bool stop_at_threshold = true;
};

struct ProbeResult {
  bool converged = false;
  bool diverged = false;
  std::size_t steps = 0;
  double initial_loss = 0.0;
  double final_loss = 0.0;
  /// (step, eval loss) at every measurement.
  std::vector<std::pair<std::size_t, double>> trajectory;
  /// Train-mode loss of every step, before its update.
  std::vector<double> step_losses;
  /// Argmax-to-target distance in heatmap cells for each in-frame sample.
  std::vector<double> cell_errors;
  std::size_t inout_correct = 0;
  std::size_t n_samples = 0;
};

/// Full-batch training on at most 16 samples at the config's learning rates.
/// Divergence (eval loss above 10× its initial value, or non-finite) stops
/// the probe.
ProbeResult overfit_probe(GazeMoE& model, const std::vector<Sample>& samples, const TrainConfig& cfg,
                          const ProbeOptions& opts = {}, const SyntheticEncoder* encoder = nullptr);

// ---- gradient check ---------------------------------------------------------

/// Finite-difference check of the summed total loss of one in-frame and one
/// out-of-frame synthetic sample, every parameter, dropout off.
GradCheckReport model_gradcheck(const DecoderConfig& cfg, std::uint64_t seed, const LossConfig& loss = {},
                                const GradCheckOptions& opts = {});

}  // namespace gazemoe
