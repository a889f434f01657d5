#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "roadflood/segnet.hpp"
#include "roadflood/train.hpp"

namespace roadflood::opt {

using segnet::ModelConfig;
using segnet::ModelParams;

// ---------------------------------------------------------------------------
// Pruning

struct PruneSchedule {
  double initial_sparsity = 0.2;
  double final_sparsity = 0.8;
  std::int64_t begin_step = 0;
  std::int64_t end_step = 5000;
  double power = 3.0;

  void validate() const;
};

nlohmann::json to_json(const PruneSchedule& s);
PruneSchedule prune_schedule_from_json(const nlohmann::json& j);

/// Polynomial decay from initial to final sparsity:
/// s(t) = s_f + (s_i - s_f) * (1 - clamp((t - t0) / (t1 - t0), 0, 1))^power.
double sparsity_at(std::int64_t step, const PruneSchedule& sched);

/// Per-tensor pruned positions (1 = forced to zero). Empty for tensors that
/// are not pruned.
using PruneMasks = std::vector<std::vector<std::uint8_t>>;

/// Number of weights zeroed for a target fraction: ceil(target * n), with
/// products within 1e-9 of an integer snapped to it.
std::size_t prune_count(double target, std::size_t n);

/// Zeroes the ceil(target * n) smallest-magnitude weights of every conv
/// kernel (biases exempt); ties go to the lower flat index. Positions set in
/// `previous` rank ahead of everything else so pruned weights never regrow.
PruneMasks prune_to_sparsity(ModelParams& params, double target, const PruneMasks* previous = nullptr);

void apply_masks(ModelParams& params, const PruneMasks& masks);

/// Zero fraction of each conv kernel, by tensor name.
std::vector<std::pair<std::string, double>> kernel_sparsity(const ModelParams& params);

/// Fine-tunes with the Adam/Dice loop while ramping sparsity along the
/// schedule: after each optimizer step t, prune_to_sparsity(sparsity_at(t))
/// and previously pruned positions stay zero.
segnet::TrainResult prune_finetune(ModelParams params, const segnet::Dataset& data, const ModelConfig& model_cfg,
                                   const PruneSchedule& sched, int epochs, segnet::TrainConfig train_cfg);

// ---------------------------------------------------------------------------
// Quantization

/// Symmetric per-tensor int8, zero point 0.
struct QuantTensor {
  std::string name;
  std::vector<int> shape;
  float scale = 1.0f;
  std::vector<std::int8_t> values;

  bool operator==(const QuantTensor&) const = default;
};

QuantTensor quantize_tensor(const std::string& name, const std::vector<int>& shape, std::span<const float> w);
std::vector<QuantTensor> quantize_params(const ModelParams& params);
std::vector<float> dequantize(const QuantTensor& qt);
ModelParams dequantize_params(std::span<const QuantTensor> qts);

// ---------------------------------------------------------------------------
// Model container
//
//   "RFPM" | u32 version | u64 header length | JSON header | payloads | u32 CRC32(payloads)
//
// All integers little-endian. The header lists each tensor's name, shape,
// encoding, optional scale, and payload offset/length.

enum class Encoding { kDenseF32, kSparse, kQuantI8 };

std::string encoding_name(Encoding e);
Encoding encoding_from_name(const std::string& name);

inline constexpr std::uint32_t kContainerVersion = 1;

struct StoredTensor {
  std::string name;
  std::vector<int> shape;
  Encoding encoding = Encoding::kDenseF32;
  std::vector<float> values;  // dense or sparse encodings
  QuantTensor quant;          // kQuantI8

  bool operator==(const StoredTensor&) const = default;
};

struct StoredModel {
  ModelConfig config;
  std::vector<StoredTensor> tensors;

  /// Weights ready for inference (quantized tensors are dequantized).
  ModelParams params() const;
  bool operator==(const StoredModel&) const = default;
};

StoredModel make_stored(const ModelConfig& cfg, const ModelParams& params, Encoding encoding);
StoredModel make_stored(const ModelConfig& cfg, std::span<const QuantTensor> qts);

std::vector<std::uint8_t> serialize_model(const StoredModel& model);
StoredModel deserialize_model(std::span<const std::uint8_t> bytes);

void save_model(const StoredModel& model, const std::filesystem::path& path);
void save_model(const ModelConfig& cfg, const ModelParams& params, const std::filesystem::path& path,
                Encoding encoding = Encoding::kDenseF32);
StoredModel load_model(const std::filesystem::path& path);

std::size_t payload_bytes(const StoredTensor& t);

struct TensorSize {
  std::string name;
  std::size_t count = 0;
  std::size_t nonzero = 0;
  double sparsity = 0.0;
};

struct SizeReport {
  std::size_t dense_f32_payload = 0;
  std::size_t sparse_payload = 0;
  std::size_t quantized_i8_payload = 0;
  std::size_t dense_f32_file = 0;
  std::size_t sparse_file = 0;
  std::size_t quantized_i8_file = 0;
  std::vector<TensorSize> tensors;
  double kernel_sparsity = 0.0;  // zero fraction over all conv kernels
};

SizeReport size_report(const ModelConfig& cfg, const ModelParams& params);
nlohmann::json to_json(const SizeReport& r);

}  // namespace roadflood::opt
