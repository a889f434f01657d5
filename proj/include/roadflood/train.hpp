#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "roadflood/metrics.hpp"
#include "roadflood/segnet.hpp"
#include "roadflood/water_index.hpp"

namespace roadflood::segnet {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;

  bool operator==(const AdamState&) const = default;
};

template <typename T>
AdamState<T> make_adam_state(const BasicParams<T>& params);

/// One bias-corrected Adam update; `step` counts from 1.
template <typename T>
void adam_step(BasicParams<T>& params, const BasicParams<T>& grads, AdamState<T>& state, std::int64_t step,
               const AdamConfig& cfg);

nlohmann::json to_json(const AdamState<float>& state);
AdamState<float> adam_state_from_json(const nlohmann::json& j);

struct TrainConfig {
  double learning_rate = 0.001;
  int epochs = 100;
  int batch_size = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double dice_smooth = 1.0;
  std::uint64_t seed = 0;
  double validation_fraction = 0.2;
  double decision_threshold = 0.5;
  /// Stop once an epoch's training dice reaches this value.
  std::optional<double> early_stop_dice;
  int threads = 1;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_epsilon}; }
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  Metrics train;
  std::optional<Metrics> validation;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
  std::int64_t steps = 0;
};

nlohmann::json to_json(const TrainReport& report);
std::string to_csv(const TrainReport& report);

/// Model-ready samples: NHWC images and flattened {0,1} labels.
struct Dataset {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<std::vector<float>> images;
  std::vector<std::vector<float>> labels;

  std::size_t size() const { return images.size(); }
  Batch<float> batch(std::span<const std::size_t> indices) const;
  std::vector<float> targets(std::span<const std::size_t> indices) const;
};

/// Interleaves band-sequential chips into HWC samples.
Dataset dataset_from_chips(std::span<const water::LabeledChip> chips);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

/// Deterministic shuffle-then-cut; validation gets floor(n * fraction).
Split split_dataset(std::size_t n, double validation_fraction, std::uint64_t seed);

struct TrainHooks {
  /// Called after every optimizer update with the 0-based global step.
  std::function<void(std::int64_t, ModelParams&)> after_step;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  ModelParams params;
  TrainReport report;
};

TrainResult train(const Dataset& data, ModelParams init, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Loads the manifest, initializes weights from the seed, and trains.
TrainResult train(const std::filesystem::path& manifest, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Metrics of the whole index set, evaluated batch-globally.
Metrics evaluate(const ModelParams& params, const ModelConfig& model_cfg, const Dataset& data,
                 std::span<const std::size_t> indices, double smooth = kDefaultSmooth,
                 double threshold = kDefaultDecisionThreshold, int batch_size = 8, int threads = 1);

/// Predicted probabilities for every index, concatenated in order.
std::vector<float> predict(const ModelParams& params, const ModelConfig& model_cfg, const Dataset& data,
                           std::span<const std::size_t> indices, int batch_size = 8, int threads = 1);

std::vector<std::size_t> all_indices(const Dataset& data);

}  // namespace roadflood::segnet
