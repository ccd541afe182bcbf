#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gazemoe/config.hpp"
#include "gazemoe/model.hpp"
#include "gazemoe/train.hpp"

namespace gazemoe {

/// Little-endian layout:
///   "GMOE", u32 version, u32 header length, UTF-8 JSON header
///   {"config": DecoderConfig, "step": n, "meta": {...}},
///   u32 tensor count, then per tensor:
///   u32 name length, name bytes, u32 dtype (1 = f64), u32 ndim, u64 dims[ndim], raw f64 data.
/// Optimizer moments are stored as tensors named "adam.m/<param>" and "adam.v/<param>".
struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<double> data;
  bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
  DecoderConfig config;
  std::size_t step = 0;
  Json meta = Json::object();
  std::vector<NamedArray> tensors;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::string_view bytes);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

/// Snapshot of model parameters and, when given, optimizer state.
Checkpoint make_checkpoint(const GazeMoE& model, const AdamState* adam = nullptr, Json meta = Json::object());

/// Rebuilds the model from the checkpoint config and copies every parameter;
/// a missing tensor or shape mismatch is a ConfigError.
GazeMoE restore_model(const Checkpoint& c);
AdamState restore_adam(const Checkpoint& c);

}  // namespace gazemoe
