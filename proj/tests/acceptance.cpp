// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "cli.hpp"
#include "gazemoe/augment.hpp"
#include "gazemoe/data.hpp"
#include "gazemoe/losses.hpp"
#include "gazemoe/metrics.hpp"
#include "gazemoe/model.hpp"
#include "gazemoe/train.hpp"

namespace gazemoe {
namespace {

namespace fs = std::filesystem;

constexpr double kParamLo = 3.06e6, kParamHi = 3.74e6;
constexpr double kGateWeightTol = 1e-9;
constexpr double kDenseTol = 1e-10;
constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr double kLossTol = 1e-12;
constexpr double kMetricTol = 1e-12;
constexpr double kMonteCarloTol = 0.02;
constexpr double kOverfitLoss = 0.05;
constexpr std::size_t kOverfitSteps = 2000;
constexpr double kOverfitCells = 2.0;
// Soft-target BCE cannot fall below the target's own entropy; at 16×16 this
// width leaves the floor near 0.02.
constexpr double kOverfitSigma = 0.75;

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

Tensor uniform_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from({r, c}, std::move(v));
}

Expert random_expert(Rng& rng, std::size_t d, std::size_t h) {
  return {uniform_matrix(rng, d, h, -0.5, 0.5), Tensor::from({h}, std::vector<double>(h, 0.1)),
          uniform_matrix(rng, h, d, -0.5, 0.5), Tensor::from({d}, std::vector<double>(d, -0.1))};
}

MoEParams random_moe(Rng& rng, const MoEConfig& cfg) {
  MoEParams p;
  p.gate = uniform_matrix(rng, cfg.d_model, cfg.n_routed);
  for (std::size_t j = 0; j < cfg.m_shared; ++j) p.shared.push_back(random_expert(rng, cfg.d_model, cfg.d_h()));
  for (std::size_t j = 0; j < cfg.n_routed; ++j) p.routed.push_back(random_expert(rng, cfg.d_model, cfg.d_h()));
  return p;
}

// ---- 1 -------------------------------------------------------------------------

Outcome param_count() {
  const DecoderConfig def;
  DecoderConfig ffn = def;
  ffn.ffn_only = true;
  const auto total = static_cast<double>(count_learnable_params(def));
  const auto built = GazeMoE(def, 0).count_learnable_params();
  const auto ffn_total = count_learnable_params(ffn);
  const bool ok = total >= kParamLo && total <= kParamHi && built == count_learnable_params(def) &&
                  ffn_total < count_learnable_params(def);
  return {ok, "default " + std::to_string(built) + ", ffn_only " + std::to_string(ffn_total)};
}

// ---- 2 -------------------------------------------------------------------------

Outcome gating() {
  Rng rng(2);
  const std::size_t d = 16, n = 6, k = 2, tokens = 100000;
  const Tensor w = uniform_matrix(rng, d, n, -2.0, 2.0);
  double worst = 0.0, worst_sum = 0.0;
  std::size_t index_mismatches = 0;
  std::vector<double> x(d);
  for (std::size_t t = 0; t < tokens; ++t) {
    for (auto& v : x) v = rng.uniform(-2.0, 2.0);
    const GatingOutput g = gate(x, w, k);
    // Independent softmax in long double, then a full stable sort.
    std::vector<long double> logits(n, 0.0L);
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < d; ++i) logits[j] += static_cast<long double>(x[i]) * w.at(i, j);
    const long double mx = *std::max_element(logits.begin(), logits.end());
    long double z = 0.0L;
    std::vector<long double> p(n);
    for (std::size_t j = 0; j < n; ++j) z += p[j] = std::exp(logits[j] - mx);
    for (auto& v : p) v /= z;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
    order.resize(k);
    if (g.topk_indices != order) {
      ++index_mismatches;
      continue;
    }
    long double sel = 0.0L;
    for (auto i : order) sel += p[i];
    double wsum = 0.0;
    for (std::size_t s = 0; s < k; ++s) {
      worst = std::max(worst, std::abs(g.topk_weights[s] - static_cast<double>(p[order[s]] / sel)));
      wsum += g.topk_weights[s];
    }
    worst_sum = std::max(worst_sum, std::abs(wsum - 1.0));
  }
  return {index_mismatches == 0 && worst < kGateWeightTol && worst_sum < kGateWeightTol,
          std::to_string(tokens) + " tokens, index mismatches " + std::to_string(index_mismatches) +
              ", max weight error " + fmt_double(worst) + ", max |sum-1| " + fmt_double(worst_sum)};
}

// ---- 3 -------------------------------------------------------------------------

Outcome dense_equivalence() {
  Rng rng(3);
  MoEConfig cfg;
  cfg.d_model = 16;
  cfg.n_routed = 4;
  cfg.top_k = 4;
  cfg.m_shared = 2;
  cfg.mlp_ratio = 2;
  MoEParams p = random_moe(rng, cfg);
  p.gate = Tensor::zeros(p.gate.shape());
  const Tensor x = uniform_matrix(rng, 1000, cfg.d_model);
  NoGradGuard guard;
  const Tensor out = moe_forward(x, p, cfg);
  Tensor shared = Tensor::zeros(x.shape()), routed = Tensor::zeros(x.shape());
  for (const auto& e : p.shared) shared = add(shared, expert_forward(x, e));
  for (const auto& e : p.routed) routed = add(routed, expert_forward(x, e));
  const Tensor expected = add(scale(shared, 1.0 / cfg.m_shared), scale(routed, 1.0 / cfg.n_routed));
  double worst = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) worst = std::max(worst, std::abs(out.at(i) - expected.at(i)));
  return {worst < kDenseTol, "1000 tokens, max abs diff " + fmt_double(worst)};
}

// ---- 4 -------------------------------------------------------------------------

Outcome sparsity() {
  Rng rng(4);
  const std::size_t tokens = 64;
  std::size_t cases = 0, bad = 0;
  NoGradGuard guard;
  for (std::size_t m : {1, 2}) {
    for (std::size_t n = 1; n <= 6; ++n) {
      for (std::size_t k = 1; k <= n; ++k) {
        MoEConfig cfg;
        cfg.d_model = 8;
        cfg.n_routed = n;
        cfg.top_k = k;
        cfg.m_shared = m;
        const MoEParams p = random_moe(rng, cfg);
        RoutingStats stats;
        moe_forward(uniform_matrix(rng, tokens, cfg.d_model), p, cfg, &stats);
        std::size_t routed = 0;
        for (auto r : stats.routed_rows) routed += r;
        ++cases;
        if (stats.tokens != tokens || stats.expert_calls != tokens * (m + k) || routed != tokens * k) ++bad;
      }
    }
  }
  return {bad == 0, std::to_string(cases) + " (M,N,K) cases, " + std::to_string(bad) + " with calls != M+K per token"};
}

// ---- 5 -------------------------------------------------------------------------

Outcome gradient() {
  GradCheckOptions opts;
  opts.epsilon = kGradEps;
  const DecoderConfig cfg = DecoderConfig::toy();
  const GradCheckReport r = model_gradcheck(cfg, 0, LossConfig{}, opts);
  return {r.max_relative_error < kGradTol && r.elements_checked > 0,
          "toy d" + std::to_string(cfg.d_model) + " grid " + std::to_string(cfg.grid) + " N" +
              std::to_string(cfg.moe.n_routed) + " K" + std::to_string(cfg.moe.top_k) + ", " +
              std::to_string(r.elements_checked) + " elements (" + std::to_string(r.elements_skipped) +
              " at routing kinks), max rel error " + fmt_double(r.max_relative_error) + " in " + r.worst_parameter};
}

// ---- 6 -------------------------------------------------------------------------

Outcome loss_identities() {
  double worst_grid = 0.0;
  for (int i = 1; i <= 99; ++i) {
    const double p = i / 100.0;
    for (double y : {0.0, 1.0}) worst_grid = std::max(worst_grid, std::abs(focal(p, y, 1.0, 0.0) - bce(p, y)));
  }
  const double f = std::abs(focal(0.5, 1.0, 1.0, 2.0) - 0.25 * std::log(2.0));
  Rng rng(6);
  std::vector<double> t(64 * 64);
  for (auto& v : t) v = rng.uniform();
  const double h = std::abs(
      heatmap_bce(Tensor::full({64, 64}, 0.5), Tensor::from({64, 64}, t)).item() - std::log(2.0));
  return {worst_grid < kLossTol && f < kLossTol && h < kLossTol,
          "focal/bce grid " + fmt_double(worst_grid) + ", focal(0.5) " + fmt_double(f) + ", bce(0.5) " +
              fmt_double(h)};
}

// ---- 7 -------------------------------------------------------------------------

Outcome alpha() {
  const SyntheticEncoder enc(EncoderConfig{}, 4, 4);
  const double a60 = compute_alpha(labels_of(synthetic_dataset(1000, 0.6, 7, enc, 1)));
  const double a90 = compute_alpha(labels_of(synthetic_dataset(1000, 0.9, 7, enc, 1)));
  return {a60 == 2.0 / 3.0 && a90 == 1.0 / 9.0, "40/60 -> " + fmt_double(a60) + ", 10/90 -> " + fmt_double(a90)};
}

// ---- 8 -------------------------------------------------------------------------

double pairwise_auc(const std::vector<double>& s, const std::vector<int>& m) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (m[i] == 1 && m[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

double brute_force_ap(const std::vector<double>& s, const std::vector<int>& l) {
  // Distinct scores: precision at every positive's rank.
  std::vector<std::size_t> order(s.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return s[a] > s[b]; });
  double total = 0.0;
  std::size_t tp = 0, pos = 0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (l[order[r]] == 1) total += static_cast<double>(++tp) / static_cast<double>(r + 1);
  for (int v : l) pos += v == 1;
  return total / static_cast<double>(pos);
}

Outcome metric_oracles() {
  std::size_t auc_checked = 0, auc_bad = 0;
  for (int code = 0; code < 19683; ++code) {
    std::vector<double> s(9);
    for (int i = 0, c = code; i < 9; ++i, c /= 3) s[i] = 0.5 * (c % 3);
    for (int bits = 1; bits < 511; ++bits) {
      std::vector<int> m(9);
      for (int i = 0; i < 9; ++i) m[i] = (bits >> i) & 1;
      ++auc_checked;
      if (std::abs(heatmap_auc(s, m) - pairwise_auc(s, m)) > kMetricTol) ++auc_bad;
    }
  }
  std::size_t ap_checked = 0, ap_bad = 0;
  for (int bits = 1; bits < 32; ++bits) {
    std::vector<int> labels(5);
    for (int i = 0; i < 5; ++i) labels[i] = (bits >> i) & 1;
    std::vector<double> s{0.1, 0.3, 0.5, 0.7, 0.9};
    do {
      ++ap_checked;
      if (std::abs(average_precision(s, labels) - brute_force_ap(s, labels)) > kMetricTol) ++ap_bad;
    } while (std::next_permutation(s.begin(), s.end()));
  }
  const double antipode = std::abs(spherical_distance({0.25, 0.5}, {0.75, 0.5}) - M_PI);
  Rng rng(8);
  const std::size_t n = 1000000;
  double total = 0.0;
  const auto sphere_point = [&rng] {
    // Uniform on the sphere in equirectangular coordinates.
    return Point2{rng.uniform(), std::acos(1.0 - 2.0 * rng.uniform()) / M_PI};
  };
  for (std::size_t i = 0; i < n; ++i) total += spherical_distance(sphere_point(), sphere_point());
  const double mc = total / static_cast<double>(n);
  return {auc_bad == 0 && ap_bad == 0 && antipode < kMetricTol && std::abs(mc - M_PI / 2) < kMonteCarloTol,
          "AUC " + std::to_string(auc_checked - auc_bad) + "/" + std::to_string(auc_checked) + ", AP " +
              std::to_string(ap_checked - ap_bad) + "/" + std::to_string(ap_checked) + ", antipode err " +
              fmt_double(antipode) + ", MC mean " + fmt_double(mc)};
}

// ---- 9 -------------------------------------------------------------------------

Outcome augmentation() {
  const SyntheticEncoder enc(EncoderConfig{}, 4, 8);
  const auto data = synthetic_dataset(200, 0.99, 9, enc, 2);
  std::vector<AnnotatedImage> frames;
  for (const auto& s : data)
    if (s.record.in_frame) frames.push_back(to_annotated(s));
  const AugConfig cfg;
  const AugConfig off = AugConfig::none();
  std::size_t n = 0, out_of_bounds = 0, flip_bad = 0, off_bad = 0;
  const auto in_unit = [](Point2 p) { return p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0; };
  for (std::size_t t = 0; n < 10000; ++t) {
    const AnnotatedImage& src = frames[t % frames.size()];
    Rng rng(derive_seed(99, t));
    const AnnotatedImage a = pipeline(src, cfg, rng);
    ++n;
    if (!a.bbox.inside_unit_square() || (a.gaze_point && !in_unit(*a.gaze_point))) ++out_of_bounds;
    if (!(hflip(hflip(src)) == src)) ++flip_bad;
    Rng rng_off(t);
    if (!(pipeline(src, off, rng_off) == src)) ++off_bad;
  }
  return {out_of_bounds == 0 && flip_bad == 0 && off_bad == 0,
          std::to_string(n) + " samples, out of bounds " + std::to_string(out_of_bounds) + ", hflip² mismatches " +
              std::to_string(flip_bad) + ", all-off mismatches " + std::to_string(off_bad)};
}

// ---- 10 ------------------------------------------------------------------------

Outcome toy_overfit() {
  const DecoderConfig cfg = DecoderConfig::small();
  const SyntheticEncoder enc(EncoderConfig{}, cfg.feature_dim, cfg.grid);
  const auto data = synthetic_dataset(8, 0.5, 3, enc);
  TrainConfig train;
  train.aug = AugConfig::none();
  train.loss.target_sigma = kOverfitSigma;
  GazeMoE model(cfg, 1);
  ProbeOptions opts;
  opts.max_steps = kOverfitSteps;
  opts.threshold = kOverfitLoss;
  const ProbeResult r = overfit_probe(model, data, train, opts);
  const double worst_cell = r.cell_errors.empty() ? INFINITY : *std::max_element(r.cell_errors.begin(), r.cell_errors.end());
  return {r.converged && !r.diverged && worst_cell <= kOverfitCells && r.inout_correct == r.n_samples,
          "loss " + fmt_double(r.initial_loss) + " -> " + fmt_double(r.final_loss) + " at step " +
              std::to_string(r.steps) + ", worst cell error " + fmt_double(worst_cell) + ", in/out " +
              std::to_string(r.inout_correct) + "/" + std::to_string(r.n_samples)};
}

// ---- 11 ------------------------------------------------------------------------

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "gazemoe_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  RunConfig cfg;
  cfg.model = DecoderConfig::toy();
  cfg.train.epochs = 2;
  cfg.train.batch_size = 4;
  cfg.train.loss.target_sigma = 1.0;
  cfg.data.synthetic.n = 12;
  cfg.data.synthetic.class_balance = 0.5;
  cfg.workers = 1;
  std::ofstream(root / "config.json") << Json(cfg).dump(2);

  std::string ckpt[2], metrics[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = root / ("run" + std::to_string(i));
    std::ostringstream out, err;
    int code = cli::run({"train", "--config", (root / "config.json").string(), "--out", dir.string(), "--seed", "11"},
                        out, err);
    if (code != cli::kOk) return {false, "train failed: " + err.str()};
    std::ostringstream eout, eerr;
    code = cli::run({"eval", "--config", (root / "config.json").string(), "--checkpoint",
                     (dir / "checkpoint.gmoe").string(), "--out", dir.string()},
                    eout, eerr);
    if (code != cli::kOk) return {false, "eval failed: " + eerr.str()};
    ckpt[i] = read_file(dir / "checkpoint.gmoe");
    metrics[i] = read_file(dir / "metrics.json");
  }
  const bool ok = !ckpt[0].empty() && ckpt[0] == ckpt[1] && !metrics[0].empty() && metrics[0] == metrics[1];
  return {ok, "checkpoint " + std::to_string(ckpt[0].size()) + " bytes " + (ckpt[0] == ckpt[1] ? "identical" : "DIFFER") +
                  ", metrics " + (metrics[0] == metrics[1] ? "identical" : "DIFFER")};
}

// ---- 12 ------------------------------------------------------------------------

Outcome ablations() {
  struct Case {
    std::string name;
    DecoderConfig model;
    AugConfig aug;
  };
  std::vector<Case> cases;
  DecoderConfig base = DecoderConfig::small();
  {
    DecoderConfig m = base;
    m.ffn_only = true;
    cases.push_back({"ffn_only", m, AugConfig::none()});
  }
  for (std::size_t r : {1, 2, 4}) {
    DecoderConfig m = base;
    m.moe.mlp_ratio = r;
    cases.push_back({"mlp_ratio=" + std::to_string(r), m, AugConfig::none()});
  }
  for (std::size_t s : {1, 2}) {
    DecoderConfig m = base;
    m.moe.m_shared = s;
    cases.push_back({"m_shared=" + std::to_string(s), m, AugConfig::none()});
  }
  for (int bits = 0; bits < 16; ++bits) {
    AugConfig a = AugConfig::none();
    a.enable_crop = bits & 1;
    a.enable_hflip = bits & 2;
    a.enable_bbox_jitter = bits & 4;
    a.enable_photometric = bits & 8;
    cases.push_back({"aug=" + std::to_string(bits), base, a});
  }

  std::size_t failed = 0;
  std::string failures;
  double worst_ratio = 0.0;
  for (const auto& c : cases) {
    const SyntheticEncoder enc(EncoderConfig{}, c.model.feature_dim, c.model.grid);
    const auto data = synthetic_dataset(8, 0.5, 12, enc);
    TrainConfig train;
    train.aug = c.aug;
    train.loss.target_sigma = kOverfitSigma;
    GazeMoE model(c.model, 2);
    ProbeOptions opts;
    opts.max_steps = 60;
    opts.eval_every = 20;
    opts.stop_at_threshold = false;
    const ProbeResult r = overfit_probe(model, data, train, opts, &enc);
    const double ratio = r.final_loss / r.initial_loss;
    worst_ratio = std::max(worst_ratio, ratio);
    if (r.diverged || !std::isfinite(r.final_loss) || r.steps != opts.max_steps || !(ratio < 1.0)) {
      ++failed;
      failures += " " + c.name;
    }
  }
  return {failed == 0, std::to_string(cases.size()) + " configurations, worst final/initial loss " +
                           fmt_double(worst_ratio) + (failed ? ", failed:" + failures : "")};
}

}  // namespace
}  // namespace gazemoe

int main() {
  using namespace gazemoe;
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"parameter count", param_count},       {"gating vs full sort", gating},
      {"sparse/dense equivalence", dense_equivalence}, {"expert-call sparsity", sparsity},
      {"gradient check", gradient},           {"loss identities", loss_identities},
      {"alpha from class ratios", alpha},     {"metric oracles", metric_oracles},
      {"augmentation safety", augmentation},  {"toy overfit", toy_overfit},
      {"determinism", determinism},           {"ablation harness", ablations},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::printf("criterion %2zu %-26s %s  %s (%.1fs)\n", i + 1, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), s);
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures ? 1 : 0;
}
