#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gazemoe/config.hpp"
#include "gazemoe/tensor.hpp"
#include "gazemoe/types.hpp"

namespace gazemoe {

/// Ordered, named collection of learnable leaf tensors.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void zero_grad();
  std::size_t total_elements() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// ---- routing --------------------------------------------------------------

struct GatingOutput {
  std::vector<double> gate_probs;
  std::vector<std::size_t> topk_indices;
  std::vector<double> topk_weights;
};

/// Indices of the k largest values, descending; equal values go to the lower index.
std::vector<std::size_t> top_k_indices(std::span<const double> values, std::size_t k);

/// Per-token gate: softmax(x·W_g), top-K selection and renormalized weights.
/// `w_g` is d_model × N.
GatingOutput gate(std::span<const double> x_token, const Tensor& w_g, std::size_t top_k);

/// GeLU(x·W1 + b1)·W2 + b2, applied row-wise.
struct Expert {
  Tensor w1, b1, w2, b2;
};

Tensor expert_forward(const Tensor& x, const Expert& e);

struct MoEParams {
  Tensor gate;  // d_model × N
  std::vector<Expert> shared;
  std::vector<Expert> routed;
};

/// Expert-evaluation counters filled by moe_forward.
struct RoutingStats {
  std::size_t tokens = 0;
  /// Token rows pushed through any expert MLP (shared and routed).
  std::size_t expert_calls = 0;
  std::vector<std::size_t> routed_rows;
  /// Order-sensitive digest of every top-K selection seen.
  std::uint64_t selection_hash = 0;

  double calls_per_token() const { return tokens ? static_cast<double>(expert_calls) / tokens : 0.0; }
};

/// x' = mean of shared experts + Σ_k w_k·E_{i_k}(x), routing every row of
/// `x` (tokens × d_model) independently. Unselected experts are not run.
/// Gradients reach the gate only through the selected weights.
Tensor moe_forward(const Tensor& x, const MoEParams& params, const MoEConfig& cfg, RoutingStats* stats = nullptr);

// ---- transformer block ----------------------------------------------------

struct AttentionParams {
  // No key bias: it shifts every score of a query equally and cancels in the softmax.
  Tensor wq, bq, wk, wv, bv, wo, bo;
};

/// Scaled dot-product self-attention over the rows of x, num_heads column slices.
Tensor multi_head_attention(const Tensor& x, const AttentionParams& p, std::size_t num_heads);

struct BlockParams {
  Tensor ln1_gamma, ln1_beta, ln2_gamma, ln2_beta;
  AttentionParams attn;
  MoEParams moe;
  std::optional<Expert> ffn;
};

/// Pre-norm block: x + drop(MHA(LN(x))), then h + drop(MoE(LN(h))).
Tensor decoder_block(const Tensor& tokens, const BlockParams& p, const DecoderConfig& cfg, bool training, Rng& rng,
                     RoutingStats* stats = nullptr);

// ---- prompt / heads helpers -----------------------------------------------

/// Binary mask over grid×grid token cells whose centers fall inside the box.
/// An empty raster is replaced by the cell nearest the box center and
/// `snapped` (when given) is set.
std::vector<double> rasterize_head_mask(const BBox& bbox, std::size_t grid, bool* snapped = nullptr);

/// out × in interpolation matrix for half-pixel-centred bilinear resampling
/// with edge clamping.
Tensor bilinear_matrix(std::size_t out_size, std::size_t in_size);

/// Param group used for per-group learning rates.
enum class ParamGroup { Main, InOutHead };
ParamGroup param_group(const std::string& name);

struct ForwardOutput {
  Tensor heatmap;      // heatmap_size × heatmap_size, sigmoid probabilities
  Tensor in_frame;     // [1], sigmoid probability
};

/// The decoder: 1×1 feature projection, head-prompt embedding, MoE
/// transformer blocks, and the heatmap / in-out heads.
class GazeMoE {
 public:
  GazeMoE(DecoderConfig cfg, std::uint64_t init_seed);

  const DecoderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Per-position linear map feature_dim → d_model plus the learned position
  /// table. Tokens are raster-ordered (row-major over the grid).
  Tensor project_features(const FeatureMap& features) const;
  Tensor embed_head_prompt(const Tensor& tokens, const BBox& bbox) const;
  Tensor heatmap_head(const Tensor& tokens) const;
  Tensor inout_head(const Tensor& tokens) const;

  const BlockParams& block(std::size_t i) const { return blocks_.at(i); }

  ForwardOutput forward(const FeatureMap& features, const BBox& bbox, bool training, Rng& rng,
                        RoutingStats* stats = nullptr) const;

  /// Eval-mode forward without tape recording.
  GazePrediction predict(const FeatureMap& features, const BBox& bbox) const;

  std::size_t count_learnable_params() const { return params_.total_elements(); }

 private:
  Tensor& linear_weight(const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Tensor& bias(const std::string& name, std::size_t n);
  Expert make_expert(const std::string& prefix, Rng& rng);

  DecoderConfig cfg_;
  ParamStore params_;
  Tensor proj_w_, proj_b_, pos_embed_, prompt_embed_;
  std::vector<BlockParams> blocks_;
  Tensor final_ln_gamma_, final_ln_beta_;
  Tensor heatmap_w_, heatmap_b_, inout_w_, inout_b_;
  Tensor upsample_;   // heatmap_size × grid
  Tensor upsample_t_; // grid × heatmap_size
};

/// Learnable parameter count of the model a config would build.
std::size_t count_learnable_params(const DecoderConfig& cfg);

}  // namespace gazemoe
