#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "gazemoe/checkpoint.hpp"
#include "gazemoe/config.hpp"
#include "gazemoe/data.hpp"
#include "gazemoe/error.hpp"
#include "gazemoe/log.hpp"
#include "gazemoe/metrics.hpp"
#include "gazemoe/model.hpp"
#include "gazemoe/train.hpp"

namespace gazemoe::cli {

namespace fs = std::filesystem;

namespace {

constexpr double kGradCheckTolerance = 1e-4;

/// Options shared by the subcommands; unset optionals leave the config alone.
struct Flags {
  std::string config;
  std::string checkpoint;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string mode;

  // infer
  std::string features;
  std::string bbox;

  // gradcheck
  double epsilon = 1e-5;
  std::size_t max_elements = 0;

  // bench-routing
  std::size_t tokens = 256;
  std::size_t max_n = 6;
};

RunConfig resolve_config(const Flags& f) {
  RunConfig base;
  if (f.mode == "pretrain") base.train = TrainConfig::pretrain();
  else if (f.mode == "finetune") base.train = TrainConfig::finetune();
  RunConfig cfg = base;
  if (!f.config.empty()) {
    if (!fs::exists(f.config)) throw ConfigError("config file not found: " + f.config);
    cfg = load_run_config(f.config, base);
  }
  if (f.seed) {
    cfg.train.seed = *f.seed;
    cfg.init_seed = *f.seed;
  }
  if (f.workers) cfg.workers = *f.workers;
  if (!f.out.empty()) cfg.output_dir = f.out;
  cfg.validate();
  return cfg;
}

SyntheticEncoder make_encoder(const RunConfig& cfg, const DecoderConfig& model) {
  return SyntheticEncoder(cfg.data.encoder, model.feature_dim, model.grid);
}

std::vector<Sample> training_data(const RunConfig& cfg, const DecoderConfig& model, const SyntheticEncoder& enc) {
  if (cfg.data.annotations) return load_dataset(*cfg.data.annotations, model.feature_dim, model.grid);
  const auto& s = cfg.data.synthetic;
  return synthetic_dataset(s.n, s.class_balance, s.seed, enc, s.patch_px);
}

std::vector<Sample> eval_data(const RunConfig& cfg, const DecoderConfig& model, const SyntheticEncoder& enc) {
  if (cfg.data.eval_annotations) return load_dataset(*cfg.data.eval_annotations, model.feature_dim, model.grid);
  return training_data(cfg, model, enc);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

/// Predictions in dataset order; workers split indices round-robin and each
/// writes only its own slots, so the result does not depend on scheduling.
std::vector<GazePrediction> predict_all(const GazeMoE& model, const std::vector<Sample>& data, std::size_t workers) {
  std::vector<GazePrediction> preds(data.size());
  workers = std::max<std::size_t>(1, std::min(workers, data.size()));
  if (workers == 1) {
    for (std::size_t i = 0; i < data.size(); ++i) preds[i] = model.predict(data[i].features, data[i].record.bbox);
    return preds;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < data.size(); i += workers)
          preds[i] = model.predict(data[i].features, data[i].record.bbox);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return preds;
}

BBox parse_bbox(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("--bbox: '" + item + "' is not a number");
    }
  }
  if (v.size() != 4) throw ConfigError("--bbox expects x_min,y_min,x_max,y_max");
  const BBox b{v[0], v[1], v[2], v[3]};
  if (!(b.x_min >= 0.0 && b.x_min < b.x_max && b.x_max <= 1.0 && b.y_min >= 0.0 && b.y_min < b.y_max &&
        b.y_max <= 1.0))
    throw ConfigError("--bbox must satisfy 0 <= x_min < x_max <= 1 and 0 <= y_min < y_max <= 1");
  return b;
}

// ---- subcommands ------------------------------------------------------------

int cmd_train(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  std::optional<Checkpoint> resume;
  if (!f.checkpoint.empty()) resume = load_checkpoint(f.checkpoint);
  if (resume && !(resume->config == cfg.model))
    throw ConfigError("checkpoint model config differs from the run config model section");

  GazeMoE model = resume ? restore_model(*resume) : GazeMoE(cfg.model, cfg.init_seed);
  AdamState adam = resume ? restore_adam(*resume) : AdamState{};
  const SyntheticEncoder enc = make_encoder(cfg, cfg.model);
  const auto data = training_data(cfg, cfg.model, enc);

  const fs::path dir = cfg.output_dir;
  fs::create_directories(dir);
  std::ofstream loss_log(dir / "loss_log.jsonl", resume ? std::ios::app : std::ios::trunc);
  if (!loss_log) throw IoError("cannot write " + (dir / "loss_log.jsonl").string());

  const std::size_t start_step = adam.step;
  const TrainResult result = train_loop(model, data, cfg.train, adam, &enc, &loss_log);

  Json meta{{"target_sigma", cfg.train.loss.target_sigma}};
  const fs::path ckpt = dir / "checkpoint.gmoe";
  save_checkpoint(ckpt.string(), make_checkpoint(model, &adam, meta));
  write_text(dir / "config.json", Json(cfg).dump(2) + "\n");

  Json summary{{"checkpoint", ckpt.string()},
               {"start_step", start_step},
               {"step", adam.step},
               {"steps_run", result.steps},
               {"final_loss", result.log.empty() ? Json(nullptr) : Json(result.log.back().loss_total)}};
  out << summary.dump() << "\n";
  return kOk;
}

int cmd_eval(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const GazeMoE model = restore_model(ckpt);
  const SyntheticEncoder enc = make_encoder(cfg, model.config());
  const auto data = eval_data(cfg, model.config(), enc);
  if (data.empty()) throw ConfigError("evaluation set is empty");

  double sigma = ckpt.meta.value("target_sigma", cfg.train.loss.target_sigma);
  if (!f.config.empty()) sigma = cfg.train.loss.target_sigma;

  const auto preds = predict_all(model, data, cfg.workers);
  std::vector<EvalItem> items;
  items.reserve(data.size());
  for (std::size_t i = 0; i < data.size(); ++i)
    items.push_back({preds[i], data[i].record.gaze_point, data[i].record.in_frame == 1});
  const std::string report = to_json(evaluate(items, sigma, cfg.metrics)).dump();
  out << report << "\n";
  if (!f.out.empty()) {
    fs::create_directories(f.out);
    write_text(fs::path(f.out) / "metrics.json", report + "\n");
  }
  return kOk;
}

int cmd_infer(const Flags& f, std::ostream& out) {
  const BBox bbox = parse_bbox(f.bbox);
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const GazeMoE model = restore_model(ckpt);
  const auto& mc = model.config();
  const FeatureMap features = load_features(f.features, mc.feature_dim, mc.grid).map;
  const GazePrediction p = model.predict(features, bbox);

  const std::size_t n = p.heatmap_size;
  // Peak-normalized so the argmax cell is the only pure-white pixel.
  const double peak = *std::max_element(p.heatmap.begin(), p.heatmap.end());
  std::vector<double> scaled(p.heatmap.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = std::floor(p.heatmap[i] / peak * 255.0) / 255.0;
  const Point2 am = argmax_point(p.heatmap, n);
  const auto col = static_cast<std::size_t>(am.x * static_cast<double>(n));
  const auto row = static_cast<std::size_t>(am.y * static_cast<double>(n));
  Json sidecar{{"in_frame_prob", p.in_frame_prob},
               {"argmax", {am.x, am.y}},
               {"argmax_cell", {col, row}},
               {"heatmap_max", peak},
               {"heatmap_size", n}};

  const fs::path dir = f.out.empty() ? fs::path(".") : fs::path(f.out);
  fs::create_directories(dir);
  write_text(dir / "heatmap.pgm", encode_pgm(scaled, n, n));
  write_text(dir / "prediction.json", sidecar.dump() + "\n");
  out << sidecar.dump() << "\n";
  return kOk;
}

int cmd_gradcheck(const Flags& f, std::ostream& out) {
  DecoderConfig model = DecoderConfig::toy();
  LossConfig loss;
  std::uint64_t seed = 0;
  if (!f.config.empty()) {
    const RunConfig cfg = resolve_config(f);
    model = cfg.model;
    loss = cfg.train.loss;
    seed = cfg.init_seed;
  }
  if (f.seed) seed = *f.seed;
  GradCheckOptions opts;
  opts.epsilon = f.epsilon;
  opts.max_elements_per_param = f.max_elements;
  const GradCheckReport r = model_gradcheck(model, seed, loss, opts);
  const bool passed = r.max_relative_error < kGradCheckTolerance;
  Json j{{"max_relative_error", r.max_relative_error},
         {"worst_parameter", r.worst_parameter},
         {"epsilon", r.epsilon},
         {"elements_checked", r.elements_checked},
         {"elements_skipped", r.elements_skipped},
         {"per_parameter_errors", r.per_parameter_errors},
         {"tolerance", kGradCheckTolerance},
         {"passed", passed}};
  out << j.dump() << "\n";
  return passed ? kOk : kRuntimeFailure;
}

int cmd_params(const Flags& f, std::ostream& out) {
  const RunConfig cfg = resolve_config(f);
  out << count_learnable_params(cfg.model) << "\n";
  return kOk;
}

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c) {
  std::vector<double> v(r * c);
  const double bound = 1.0 / std::sqrt(static_cast<double>(r));
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from({r, c}, std::move(v));
}

int cmd_bench_routing(const Flags& f, std::ostream& out) {
  DecoderConfig base = DecoderConfig::toy();
  if (!f.config.empty()) base = resolve_config(f).model;
  const std::size_t d = base.d_model, dh = base.moe.d_h(), m = base.moe.m_shared;
  const std::uint64_t seed = f.seed.value_or(0);
  if (f.tokens == 0 || f.max_n == 0) throw ConfigError("--tokens and --max-n must be positive");

  Rng rng(seed);
  const Tensor x = random_matrix(rng, f.tokens, d);
  const auto expert = [&] {
    return Expert{random_matrix(rng, d, dh), Tensor::zeros({1, dh}), random_matrix(rng, dh, d), Tensor::zeros({1, d})};
  };
  bool all_ok = true;
  NoGradGuard guard;
  for (std::size_t n = 1; n <= f.max_n; ++n) {
    for (std::size_t k = 1; k <= n; ++k) {
      MoEConfig mc = base.moe;
      mc.n_routed = n;
      mc.top_k = k;
      MoEParams params;
      params.gate = random_matrix(rng, d, n);
      for (std::size_t j = 0; j < m; ++j) params.shared.push_back(expert());
      for (std::size_t j = 0; j < n; ++j) params.routed.push_back(expert());
      RoutingStats stats;
      const auto t0 = std::chrono::steady_clock::now();
      moe_forward(x, params, mc, &stats);
      const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      const bool ok = stats.expert_calls == stats.tokens * (m + k);
      all_ok = all_ok && ok;
      out << Json{{"n_routed", n},
                  {"top_k", k},
                  {"m_shared", m},
                  {"tokens", stats.tokens},
                  {"calls_per_token", stats.calls_per_token()},
                  {"expected", m + k},
                  {"ok", ok},
                  {"wall_ms", ms}}
                 .dump()
          << "\n";
    }
  }
  return all_ok ? kOk : kRuntimeFailure;
}

int cmd_synth(const Flags& f, std::ostream& out) {
  RunConfig cfg = resolve_config(f);
  if (f.seed) cfg.data.synthetic.seed = *f.seed;
  const SyntheticEncoder enc = make_encoder(cfg, cfg.model);
  const auto& s = cfg.data.synthetic;
  const auto data = synthetic_dataset(s.n, s.class_balance, s.seed, enc, s.patch_px);
  save_dataset(cfg.output_dir, data);
  const auto labels = labels_of(data);
  out << Json{{"dir", cfg.output_dir},
              {"annotations", (fs::path(cfg.output_dir) / "annotations.jsonl").string()},
              {"n", data.size()},
              {"in_frame", std::count(labels.begin(), labels.end(), 1)}}
             .dump()
      << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"GazeMoE decoder: training, evaluation and diagnostics", "gazemoe"};
  app.require_subcommand(1);
  Flags f;

  const auto add_config = [&](CLI::App* sub, bool required) {
    auto* opt = sub->add_option("--config", f.config, "Run configuration (JSON)");
    if (required) opt->required();
  };
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", f.seed, "Seed override"); };

  auto* train = app.add_subcommand("train", "Train and write a checkpoint plus loss log");
  add_config(train, true);
  train->add_option("--checkpoint", f.checkpoint, "Resume from this checkpoint");
  train->add_option("--out", f.out, "Output directory");
  add_seed(train);
  train->add_option("--workers", f.workers, "Worker threads");
  train->add_option("--mode", f.mode, "Training preset")->check(CLI::IsMember({"pretrain", "finetune"}));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and print the metrics JSON");
  add_config(eval, false);
  eval->add_option("--checkpoint", f.checkpoint, "Checkpoint to evaluate")->required();
  eval->add_option("--out", f.out, "Also write metrics.json here");
  add_seed(eval);
  eval->add_option("--workers", f.workers, "Parallel inference threads");

  auto* infer = app.add_subcommand("infer", "Predict one person's heatmap and in-frame probability");
  infer->add_option("--checkpoint", f.checkpoint, "Checkpoint")->required();
  infer->add_option("--features", f.features, "Feature file (GMFT)")->required();
  infer->add_option("--bbox", f.bbox, "Head box x_min,y_min,x_max,y_max (normalized)")->required();
  infer->add_option("--out", f.out, "Directory for heatmap.pgm and prediction.json");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of the total loss");
  add_config(gradcheck, false);
  add_seed(gradcheck);
  gradcheck->add_option("--epsilon", f.epsilon, "Central-difference step")->check(CLI::PositiveNumber);
  gradcheck->add_option("--max-elements", f.max_elements, "Elements probed per tensor (0 = all)");

  auto* params = app.add_subcommand("params", "Print the learnable-parameter count");
  add_config(params, false);

  auto* bench = app.add_subcommand("bench-routing", "Count expert evaluations per token over an (N, K) grid");
  add_config(bench, false);
  add_seed(bench);
  bench->add_option("--tokens", f.tokens, "Tokens per forward");
  bench->add_option("--max-n", f.max_n, "Largest routed-expert count");

  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset (annotations, features, images)");
  add_config(synth, false);
  synth->add_option("--out", f.out, "Output directory")->required();
  add_seed(synth);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    err << (subs.empty() ? app.help() : subs.front()->help());
    return kUsageError;
  }

  try {
    if (train->parsed()) return cmd_train(f, out);
    if (eval->parsed()) return cmd_eval(f, out);
    if (infer->parsed()) return cmd_infer(f, out);
    if (gradcheck->parsed()) return cmd_gradcheck(f, out);
    if (params->parsed()) return cmd_params(f, out);
    if (bench->parsed()) return cmd_bench_routing(f, out);
    if (synth->parsed()) return cmd_synth(f, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsageError;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kUsageError;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeFailure;
  }
  return kUsageError;
}

}  // namespace gazemoe::cli
