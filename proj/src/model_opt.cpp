#include "roadflood/model_opt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "roadflood/error.hpp"

namespace roadflood::opt {

using nlohmann::json;

void PruneSchedule::validate() const {
  if (!(initial_sparsity >= 0.0 && initial_sparsity <= final_sparsity && final_sparsity < 1.0)) {
    throw InvalidArgument("prune schedule needs 0 <= initial <= final < 1");
  }
  if (begin_step > end_step) throw InvalidArgument("prune schedule begin_step exceeds end_step");
  if (!(power > 0.0)) throw InvalidArgument("prune schedule power must be positive");
}

json to_json(const PruneSchedule& s) {
  return json{{"initial_sparsity", s.initial_sparsity},
              {"final_sparsity", s.final_sparsity},
              {"begin_step", s.begin_step},
              {"end_step", s.end_step},
              {"power", s.power}};
}

PruneSchedule prune_schedule_from_json(const json& j) {
  PruneSchedule s;
  s.initial_sparsity = j.value("initial_sparsity", s.initial_sparsity);
  s.final_sparsity = j.value("final_sparsity", s.final_sparsity);
  s.begin_step = j.value("begin_step", s.begin_step);
  s.end_step = j.value("end_step", s.end_step);
  s.power = j.value("power", s.power);
  s.validate();
  return s;
}

double sparsity_at(std::int64_t step, const PruneSchedule& sched) {
  double progress = 1.0;
  if (sched.end_step > sched.begin_step) {
    progress = static_cast<double>(step - sched.begin_step) / static_cast<double>(sched.end_step - sched.begin_step);
  } else if (step < sched.begin_step) {
    progress = 0.0;
  }
  // Endpoints returned as given; the blend below is off by an ulp there.
  if (progress <= 0.0) return sched.initial_sparsity;
  if (progress >= 1.0) return sched.final_sparsity;
  return sched.final_sparsity +
         (sched.initial_sparsity - sched.final_sparsity) * std::pow(1.0 - progress, sched.power);
}

std::size_t prune_count(double target, std::size_t n) {
  if (!(target >= 0.0 && target < 1.0)) throw InvalidArgument("prune target must lie in [0, 1)");
  const double exact = target * static_cast<double>(n);
  const double nearest = std::round(exact);
  const double k = std::abs(exact - nearest) < 1e-9 ? nearest : std::ceil(exact);
  return std::min(n, static_cast<std::size_t>(k));
}

PruneMasks prune_to_sparsity(ModelParams& params, double target, const PruneMasks* previous) {
  const auto& tensors = params.tensors;
  if (previous && previous->size() != tensors.size()) throw InvalidArgument("prune masks do not match model");
  PruneMasks masks(tensors.size());
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    auto& t = params.tensors[ti];
    if (!t.is_kernel()) continue;
    const std::size_t n = t.values.size();
    const std::size_t k = prune_count(target, n);
    const std::vector<std::uint8_t>* prev =
        (previous && !(*previous)[ti].empty()) ? &(*previous)[ti] : nullptr;
    if (k == 0 && !prev) continue;

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rank = [&](std::size_t i) { return (prev && (*prev)[i]) ? -1.0 : std::abs(static_cast<double>(t.values[i])); };
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rank(a) < rank(b); });

    auto& mask = masks[ti];
    mask.assign(n, 0);
    for (std::size_t i = 0; i < k; ++i) mask[order[i]] = 1;
    if (prev) {
      for (std::size_t i = 0; i < n; ++i) mask[i] |= (*prev)[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (mask[i]) t.values[i] = 0.0f;
    }
  }
  return masks;
}

void apply_masks(ModelParams& params, const PruneMasks& masks) {
  if (masks.size() != params.tensors.size()) throw InvalidArgument("prune masks do not match model");
  for (std::size_t ti = 0; ti < masks.size(); ++ti) {
    const auto& m = masks[ti];
    auto& v = params.tensors[ti].values;
    if (m.empty()) continue;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (m[i]) v[i] = 0.0f;
    }
  }
}

std::vector<std::pair<std::string, double>> kernel_sparsity(const ModelParams& params) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& t : params.tensors) {
    if (!t.is_kernel()) continue;
    const auto zeros = std::count(t.values.begin(), t.values.end(), 0.0f);
    out.emplace_back(t.name, static_cast<double>(zeros) / static_cast<double>(t.values.size()));
  }
  return out;
}

segnet::TrainResult prune_finetune(ModelParams params, const segnet::Dataset& data, const ModelConfig& model_cfg,
                                   const PruneSchedule& sched, int epochs, segnet::TrainConfig train_cfg) {
  sched.validate();
  train_cfg.epochs = epochs;
  train_cfg.early_stop_dice.reset();
  PruneMasks masks(params.tensors.size());
  segnet::TrainHooks hooks;
  hooks.after_step = [&](std::int64_t step, ModelParams& p) {
    apply_masks(p, masks);
    masks = prune_to_sparsity(p, sparsity_at(step, sched), &masks);
  };
  return segnet::train(data, std::move(params), model_cfg, train_cfg, hooks);
}

// ---------------------------------------------------------------------------

QuantTensor quantize_tensor(const std::string& name, const std::vector<int>& shape, std::span<const float> w) {
  QuantTensor q;
  q.name = name;
  q.shape = shape;
  float max_abs = 0.0f;
  for (float v : w) {
    if (!std::isfinite(v)) throw InvalidArgument("cannot quantize non-finite weight in " + name);
    max_abs = std::max(max_abs, std::abs(v));
  }
  q.scale = max_abs > 0.0f ? static_cast<float>(static_cast<double>(max_abs) / 127.0) : 1.0f;
  if (!(q.scale > 0.0f)) q.scale = 1.0f;  // subnormal underflow
  q.values.resize(w.size());
  const double s = q.scale;
  for (std::size_t i = 0; i < w.size(); ++i) {
    // nearbyint rounds half to even under the default rounding mode.
    const double r = std::nearbyint(static_cast<double>(w[i]) / s);
    q.values[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
  }
  return q;
}

std::vector<QuantTensor> quantize_params(const ModelParams& params) {
  std::vector<QuantTensor> out;
  out.reserve(params.tensors.size());
  for (const auto& t : params.tensors) out.push_back(quantize_tensor(t.name, t.shape, t.values));
  return out;
}

std::vector<float> dequantize(const QuantTensor& qt) {
  std::vector<float> out(qt.values.size());
  const double s = qt.scale;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(qt.values[i] * s);
  return out;
}

ModelParams dequantize_params(std::span<const QuantTensor> qts) {
  ModelParams p;
  for (const auto& q : qts) p.tensors.push_back({q.name, q.shape, dequantize(q)});
  return p;
}

}  // namespace roadflood::opt
