#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

// Residual U-Net for binary water segmentation, with hand-written forward
// and reverse-mode passes. Tensors are NHWC; conv kernels are stored as
// [kh, kw, in, out] and biases as [out].
namespace roadflood::segnet {

struct ModelConfig {
  int levels = 3;
  int base_filters = 8;
  int in_channels = 4;

  void validate() const;
  int filters(int level) const { return base_filters << level; }
  /// Spatial dims must be divisible by this.
  int divisor() const { return 1 << levels; }

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

template <typename T>
struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<T> values;

  std::size_t size() const { return values.size(); }
  /// Conv kernels are prunable; biases are not.
  bool is_kernel() const { return shape.size() == 4; }
};

template <typename T>
struct BasicParams {
  std::vector<NamedTensor<T>> tensors;

  const NamedTensor<T>* find(std::string_view name) const;
  NamedTensor<T>* find(std::string_view name);
  std::size_t value_count() const;
  void fill(T value);
  /// this += other, tensor by tensor (shapes must agree).
  void add(const BasicParams& other);
  void scale(T factor);
};

using ModelParams = BasicParams<float>;

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
};

/// Ordered tensor names and shapes implied by a config.
std::vector<TensorSpec> param_layout(const ModelConfig& cfg);

template <typename T>
BasicParams<T> zero_params(const ModelConfig& cfg);

/// Glorot-uniform kernels, zero biases.
template <typename T>
BasicParams<T> init_params(const ModelConfig& cfg, std::uint64_t seed);

template <typename To, typename From>
BasicParams<To> cast_params(const BasicParams<From>& p) {
  BasicParams<To> out;
  for (const auto& t : p.tensors) {
    out.tensors.push_back({t.name, t.shape, std::vector<To>(t.values.begin(), t.values.end())});
  }
  return out;
}

/// Throws if names, shapes, or count disagree with the config layout, or a
/// value is not finite.
template <typename T>
void check_params(const BasicParams<T>& params, const ModelConfig& cfg);

/// Dense NHWC batch.
template <typename T>
struct Batch {
  int n = 0;
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<T> data;

  Batch() = default;
  Batch(int n_, int h_, int w_, int c_) : n(n_), height(h_), width(w_), channels(c_), data(sample_size() * n_) {}

  std::size_t sample_size() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  }
  std::span<T> sample(int i) { return std::span<T>(data).subspan(sample_size() * i, sample_size()); }
  std::span<const T> sample(int i) const {
    return std::span<const T>(data).subspan(sample_size() * i, sample_size());
  }
};

/// Sigmoid probabilities, N x H x W x 1.
template <typename T>
Batch<T> forward(const BasicParams<T>& params, const ModelConfig& cfg, const Batch<T>& input, int threads = 1);

template <typename T>
struct LossAndGrads {
  double loss = 0.0;
  Batch<T> probs;
  BasicParams<T> grads;
};

/// Dice loss over the whole batch and its exact gradient with respect to
/// every parameter. `targets` is N*H*W values in {0,1}. `loss_scale`
/// multiplies the loss (and therefore every gradient).
template <typename T>
LossAndGrads<T> backward(const BasicParams<T>& params, const ModelConfig& cfg, const Batch<T>& input,
                         std::span<const T> targets, double smooth = 1.0, int threads = 1,
                         double loss_scale = 1.0);

}  // namespace roadflood::segnet
