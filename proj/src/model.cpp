#include "gazemoe/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "gazemoe/log.hpp"

namespace gazemoe {

// ---- ParamStore -----------------------------------------------------------

Tensor& ParamStore::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ConfigError("duplicate parameter name " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(t));
  return entries_.back().second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return entries_[it->second].second;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return entries_[it->second].second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

// ---- routing --------------------------------------------------------------

std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k) {
  if (k > values.size()) throw ConfigError("top_k larger than the number of experts");
  std::vector<std::size_t> chosen;
  std::vector<bool> taken(values.size(), false);
  for (std::size_t round = 0; round < k; ++round) {
    std::size_t best = values.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (taken[i]) continue;
      if (best == values.size() || values[i] > values[best]) best = i;
    }
    taken[best] = true;
    chosen.push_back(best);
  }
  return chosen;
}

GatingOutput gate(std::span<const double> x_token, const Tensor& w_g, std::size_t top_k) {
  if (w_g.ndim() != 2 || w_g.dim(0) != x_token.size()) {
    throw DimensionError("gate: W_g " + shape_str(w_g.shape()) + " does not match token width " +
                         std::to_string(x_token.size()));
  }
  const std::size_t d = w_g.dim(0), n = w_g.dim(1);
  std::vector<double> logits(n, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t e = 0; e < n; ++e) logits[e] += x_token[i] * w_g.at(i * n + e);
  const double mx = *std::max_element(logits.begin(), logits.end());
  GatingOutput out;
  out.gate_probs.resize(n);
  double z = 0.0;
  for (std::size_t e = 0; e < n; ++e) z += out.gate_probs[e] = std::exp(logits[e] - mx);
  for (double& p : out.gate_probs) p /= z;

  out.topk_indices = top_k_indices(out.gate_probs, top_k);
  double sel = 0.0;
  for (std::size_t i : out.topk_indices) sel += out.gate_probs[i];
  for (std::size_t i : out.topk_indices) out.topk_weights.push_back(out.gate_probs[i] / sel);
  return out;
}

Tensor expert_forward(const Tensor& x, const Expert& e) {
  const Tensor hidden = gelu(add_row(matmul(x, e.w1), e.b1));
  return add_row(matmul(hidden, e.w2), e.b2);
}

Tensor moe_forward(const Tensor& x, const MoEParams& params, const MoEConfig& cfg, RoutingStats* stats) {
  if (x.ndim() != 2 || x.dim(1) != cfg.d_model) {
    throw DimensionError("moe_forward: expected tokens × " + std::to_string(cfg.d_model) + ", got " +
                         shape_str(x.shape()));
  }
  if (params.shared.size() != cfg.m_shared || params.routed.size() != cfg.n_routed) {
    throw ConfigError("moe_forward: expert counts do not match MoEConfig");
  }
  const std::size_t tokens = x.dim(0), n = cfg.n_routed, k = cfg.top_k;

  Tensor shared = expert_forward(x, params.shared[0]);
  for (std::size_t j = 1; j < params.shared.size(); ++j) shared = add(shared, expert_forward(x, params.shared[j]));
  if (params.shared.size() > 1) shared = scale(shared, 1.0 / static_cast<double>(params.shared.size()));

  const Tensor probs = softmax(matmul(x, params.gate), 1);

  // Discrete selection from the probability values; gradients only flow
  // through the renormalized weights of the chosen experts.
  std::vector<std::size_t> selected_flat(tokens * k);
  std::vector<std::vector<std::size_t>> rows_of(n), slots_of(n);
  for (std::size_t t = 0; t < tokens; ++t) {
    const auto top = top_k_indices(probs.data().subspan(t * n, n), k);
    if (stats)
      for (auto i : top) stats->selection_hash = mix_seed(stats->selection_hash ^ i);
    for (std::size_t s = 0; s < k; ++s) {
      selected_flat[t * k + s] = t * n + top[s];
      rows_of[top[s]].push_back(t);
      slots_of[top[s]].push_back(t * k + s);
    }
  }
  const Tensor selected = reshape(gather_elements(probs, selected_flat), {tokens, k});
  const Tensor norm = matmul(selected, Tensor::full({k, 1}, 1.0));
  const Tensor weights = scale_rows(selected, reciprocal(norm));

  Tensor out = shared;
  std::size_t routed_rows = 0;
  if (stats) stats->routed_rows.resize(n, 0);
  for (std::size_t e = 0; e < n; ++e) {
    if (rows_of[e].empty()) continue;
    const Tensor y = expert_forward(gather_rows(x, rows_of[e]), params.routed[e]);
    const Tensor w = gather_elements(weights, slots_of[e]);
    out = add(out, scatter_rows(scale_rows(y, w), rows_of[e], tokens));
    routed_rows += rows_of[e].size();
    if (stats) stats->routed_rows[e] += rows_of[e].size();
  }
  if (stats) {
    stats->tokens += tokens;
    stats->expert_calls += tokens * params.shared.size() + routed_rows;
  }
  return out;
}

// ---- transformer block ----------------------------------------------------

Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, std::size_t num_heads) {
  const std::size_t d = x.dim(1);
  if (d % num_heads != 0) throw ConfigError("multi_head_attention: width not divisible by head count");
  const std::size_t head_dim = d / num_heads;
  const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));

  const Tensor q = add_row(matmul(x, p.wq), p.bq);
  const Tensor k = matmul(x, p.wk);
  const Tensor v = add_row(matmul(x, p.wv), p.bv);
  std::vector<Tensor> heads;
  heads.reserve(num_heads);
  for (std::size_t h = 0; h < num_heads; ++h) {
    const Tensor qh = slice_cols(q, h * head_dim, head_dim);
    const Tensor kh = slice_cols(k, h * head_dim, head_dim);
    const Tensor vh = slice_cols(v, h * head_dim, head_dim);
    const Tensor attn = softmax(scale(matmul(qh, transpose(kh)), scale_factor), 1);
    heads.push_back(matmul(attn, vh));
  }
  const Tensor merged = num_heads == 1 ? heads[0] : concat_cols(heads);
  return add_row(matmul(merged, p.wo), p.bo);
}

Tensor decoder_block(const Tensor& tokens, const BlockParams& p, const DecoderConfig& cfg, bool training, Rng& rng,
                     RoutingStats* stats) {
  const Tensor attn = multi_head_attention(layer_norm(tokens, p.ln1_gamma, p.ln1_beta), p.attn, cfg.num_heads);
  const Tensor h = add(tokens, dropout(attn, cfg.dropout, training, rng));
  const Tensor normed = layer_norm(h, p.ln2_gamma, p.ln2_beta);
  const Tensor ff = p.ffn ? expert_forward(normed, *p.ffn) : moe_forward(normed, p.moe, cfg.moe, stats);
  if (p.ffn && stats) {
    stats->tokens += normed.dim(0);
    stats->expert_calls += normed.dim(0);
  }
  return add(h, dropout(ff, cfg.dropout, training, rng));
}

// ---- helpers --------------------------------------------------------------

std::vector<double> rasterize_head_mask(const BBox& bbox, std::size_t grid, bool* snapped) {
  std::vector<double> mask(grid * grid, 0.0);
  bool any = false;
  const double g = static_cast<double>(grid);
  for (std::size_t r = 0; r < grid; ++r) {
    const double cy = (static_cast<double>(r) + 0.5) / g;
    if (cy < bbox.y_min || cy > bbox.y_max) continue;
    for (std::size_t c = 0; c < grid; ++c) {
      const double cx = (static_cast<double>(c) + 0.5) / g;
      if (cx < bbox.x_min || cx > bbox.x_max) continue;
      mask[r * grid + c] = 1.0;
      any = true;
    }
  }
  if (snapped) *snapped = !any;
  if (!any) {
    const Point2 ctr = bbox.center();
    const auto cell = [&](double v) {
      return static_cast<std::size_t>(std::clamp(std::floor(v * g), 0.0, g - 1.0));
    };
    mask[cell(ctr.y) * grid + cell(ctr.x)] = 1.0;
  }
  return mask;
}

Tensor bilinear_matrix(std::size_t out_size, std::size_t in_size) {
  std::vector<double> m(out_size * in_size, 0.0);
  const double ratio = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (std::size_t i = 0; i < out_size; ++i) {
    double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in_size - 1);
    const double frac = src - static_cast<double>(lo);
    m[i * in_size + lo] += 1.0 - frac;
    m[i * in_size + hi] += frac;
  }
  return Tensor::from({out_size, in_size}, std::move(m));
}

ParamGroup param_group(const std::string& name) {
  return name.rfind("inout_head.", 0) == 0 ? ParamGroup::InOutHead : ParamGroup::Main;
}

// ---- GazeMoE --------------------------------------------------------------

Tensor& GazeMoE::linear_weight(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  Rng local(derive_seed(rng.next_u64(), fnv1a64(name)));
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::vector<double> w(in * out);
  for (double& v : w) v = local.uniform(-bound, bound);
  return params_.add(name, Tensor::from({in, out}, std::move(w), true));
}

Tensor& GazeMoE::bias(const std::string& name, std::size_t n) {
  return params_.add(name, Tensor::zeros({n}, true));
}

Expert GazeMoE::make_expert(const std::string& prefix, Rng& rng) {
  const std::size_t d = cfg_.d_model, h = cfg_.moe.d_h();
  Expert e;
  e.w1 = linear_weight(prefix + ".w1", d, h, rng);
  e.b1 = bias(prefix + ".b1", h);
  e.w2 = linear_weight(prefix + ".w2", h, d, rng);
  e.b2 = bias(prefix + ".b2", d);
  return e;
}

GazeMoE::GazeMoE(DecoderConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  Rng rng(init_seed);
  const std::size_t d = cfg_.d_model, seq = cfg_.seq_len();

  proj_w_ = linear_weight("proj.weight", cfg_.feature_dim, d, rng);
  proj_b_ = bias("proj.bias", d);

  const auto normal_table = [&](const std::string& name, Shape shape, double stddev) -> Tensor& {
    Rng local(derive_seed(rng.next_u64(), fnv1a64(name)));
    std::vector<double> v(shape_numel(shape));
    for (double& x : v) x = local.normal(0.0, stddev);
    return params_.add(name, Tensor::from(std::move(shape), std::move(v), true));
  };
  pos_embed_ = normal_table("pos_embed", {seq, d}, 0.02);
  prompt_embed_ = normal_table("prompt.embed", {1, d}, 0.02);

  for (std::size_t b = 0; b < cfg_.num_blocks; ++b) {
    const std::string pre = "blocks." + std::to_string(b);
    BlockParams bp;
    bp.ln1_gamma = params_.add(pre + ".ln1.gamma", Tensor::full({d}, 1.0, true));
    bp.ln1_beta = bias(pre + ".ln1.beta", d);
    bp.attn.wq = linear_weight(pre + ".attn.q.weight", d, d, rng);
    bp.attn.bq = bias(pre + ".attn.q.bias", d);
    bp.attn.wk = linear_weight(pre + ".attn.k.weight", d, d, rng);
    bp.attn.wv = linear_weight(pre + ".attn.v.weight", d, d, rng);
    bp.attn.bv = bias(pre + ".attn.v.bias", d);
    bp.attn.wo = linear_weight(pre + ".attn.o.weight", d, d, rng);
    bp.attn.bo = bias(pre + ".attn.o.bias", d);
    bp.ln2_gamma = params_.add(pre + ".ln2.gamma", Tensor::full({d}, 1.0, true));
    bp.ln2_beta = bias(pre + ".ln2.beta", d);
    if (cfg_.ffn_only) {
      bp.ffn = make_expert(pre + ".ffn", rng);
    } else {
      bp.moe.gate = linear_weight(pre + ".moe.gate", d, cfg_.moe.n_routed, rng);
      for (std::size_t j = 0; j < cfg_.moe.m_shared; ++j)
        bp.moe.shared.push_back(make_expert(pre + ".moe.shared." + std::to_string(j), rng));
      for (std::size_t j = 0; j < cfg_.moe.n_routed; ++j)
        bp.moe.routed.push_back(make_expert(pre + ".moe.routed." + std::to_string(j), rng));
    }
    blocks_.push_back(std::move(bp));
  }

  final_ln_gamma_ = params_.add("final_ln.gamma", Tensor::full({d}, 1.0, true));
  final_ln_beta_ = bias("final_ln.beta", d);
  heatmap_w_ = linear_weight("heatmap_head.weight", d, 1, rng);
  heatmap_b_ = bias("heatmap_head.bias", 1);
  inout_w_ = linear_weight("inout_head.weight", d, 1, rng);
  inout_b_ = bias("inout_head.bias", 1);

  upsample_ = bilinear_matrix(cfg_.heatmap_size, cfg_.grid);
  upsample_t_ = transpose(upsample_).detach();
}

Tensor GazeMoE::project_features(const FeatureMap& f) const {
  if (f.feature_dim != cfg_.feature_dim || f.grid != cfg_.grid ||
      f.values.size() != f.feature_dim * f.grid * f.grid) {
    throw ConfigError("feature map " + std::to_string(f.feature_dim) + "x" + std::to_string(f.grid) + "x" +
                      std::to_string(f.grid) + " does not match model " + std::to_string(cfg_.feature_dim) + "x" +
                      std::to_string(cfg_.grid) + "x" + std::to_string(cfg_.grid));
  }
  const std::size_t seq = cfg_.seq_len(), c = cfg_.feature_dim;
  std::vector<double> rows(seq * c);
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t t = 0; t < seq; ++t) rows[t * c + ch] = f.values[ch * seq + t];
  return add_row(matmul(Tensor::from({seq, c}, std::move(rows)), proj_w_), proj_b_);
}

Tensor GazeMoE::embed_head_prompt(const Tensor& tokens, const BBox& bbox) const {
  if (!(bbox.x_min >= 0.0 && bbox.x_min < bbox.x_max && bbox.x_max <= 1.0 && bbox.y_min >= 0.0 &&
        bbox.y_min < bbox.y_max && bbox.y_max <= 1.0)) {
    throw ConfigError("head bbox must satisfy 0 <= min < max <= 1 on both axes");
  }
  bool snapped = false;
  auto mask = rasterize_head_mask(bbox, cfg_.grid, &snapped);
  if (snapped) {
    static std::atomic<bool> warned{false};
    if (!warned.exchange(true)) log().warn("head bbox covers no token cell centre; snapped to the nearest cell");
    else log().debug("head bbox snapped to the nearest cell");
  }
  const std::size_t seq = mask.size();
  return add(tokens, matmul(Tensor::from({seq, 1}, std::move(mask)), prompt_embed_));
}

Tensor GazeMoE::heatmap_head(const Tensor& tokens) const {
  const Tensor logits = reshape(add_row(matmul(tokens, heatmap_w_), heatmap_b_), {cfg_.grid, cfg_.grid});
  return sigmoid(matmul(matmul(upsample_, logits), upsample_t_));
}

Tensor GazeMoE::inout_head(const Tensor& tokens) const {
  return reshape(sigmoid(add_row(matmul(mean_rows(tokens), inout_w_), inout_b_)), {1});
}

ForwardOutput GazeMoE::forward(const FeatureMap& features, const BBox& bbox, bool training, Rng& rng,
                               RoutingStats* stats) const {
  Tensor x = add(project_features(features), pos_embed_);
  x = embed_head_prompt(x, bbox);
  for (const auto& b : blocks_) x = decoder_block(x, b, cfg_, training, rng, stats);
  x = layer_norm(x, final_ln_gamma_, final_ln_beta_);
  return {heatmap_head(x), inout_head(x)};
}

GazePrediction GazeMoE::predict(const FeatureMap& features, const BBox& bbox) const {
  NoGradGuard guard;
  Rng unused(0);
  const ForwardOutput out = forward(features, bbox, false, unused);
  GazePrediction p;
  p.heatmap_size = cfg_.heatmap_size;
  p.heatmap.assign(out.heatmap.data().begin(), out.heatmap.data().end());
  p.in_frame_prob = out.in_frame.item();
  return p;
}

std::size_t count_learnable_params(const DecoderConfig& cfg) { return GazeMoE(cfg, 0).count_learnable_params(); }

}  // namespace gazemoe
