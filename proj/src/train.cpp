#include "roadflood/train.hpp"

#include <cmath>
#include <sstream>

#include "roadflood/error.hpp"
#include "roadflood/rng.hpp"

namespace roadflood::segnet {

using nlohmann::json;

template <typename T>
AdamState<T> make_adam_state(const BasicParams<T>& params) {
  AdamState<T> s;
  for (const auto& t : params.tensors) {
    s.m.emplace_back(t.values.size(), T(0));
    s.v.emplace_back(t.values.size(), T(0));
  }
  return s;
}

template <typename T>
void adam_step(BasicParams<T>& params, const BasicParams<T>& grads, AdamState<T>& state, std::int64_t step,
               const AdamConfig& cfg) {
  if (step < 1) throw InvalidArgument("adam step counts from 1");
  if (grads.tensors.size() != params.tensors.size() || state.m.size() != params.tensors.size() ||
      state.v.size() != params.tensors.size()) {
    throw InvalidArgument("adam: parameter, gradient and state tensor counts differ");
  }
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    auto& p = params.tensors[i].values;
    const auto& g = grads.tensors[i].values;
    auto& m = state.m[i];
    auto& v = state.v[i];
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size()) {
      throw InvalidArgument("adam: shape mismatch in tensor " + params.tensors[i].name);
    }
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = g[k];
      const double mk = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * gk;
      const double vk = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = static_cast<double>(m[k]) / c1;
      const double vhat = static_cast<double>(v[k]) / c2;
      p[k] = static_cast<T>(p[k] - cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon));
    }
  }
}

template AdamState<float> make_adam_state<float>(const BasicParams<float>&);
template AdamState<double> make_adam_state<double>(const BasicParams<double>&);
template void adam_step<float>(BasicParams<float>&, const BasicParams<float>&, AdamState<float>&, std::int64_t,
                               const AdamConfig&);
template void adam_step<double>(BasicParams<double>&, const BasicParams<double>&, AdamState<double>&,
                                std::int64_t, const AdamConfig&);

json to_json(const AdamState<float>& state) { return json{{"m", state.m}, {"v", state.v}}; }

AdamState<float> adam_state_from_json(const json& j) {
  AdamState<float> s;
  s.m = j.at("m").get<std::vector<std::vector<float>>>();
  s.v = j.at("v").get<std::vector<std::vector<float>>>();
  return s;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (epochs < 0) throw InvalidArgument("epochs must be non-negative");
  if (batch_size < 1) throw InvalidArgument("batch_size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw InvalidArgument("validation_fraction must lie in [0, 1)");
  }
  if (!(dice_smooth >= 0.0)) throw InvalidArgument("dice_smooth must be non-negative");
  if (threads < 1) throw InvalidArgument("threads must be >= 1");
}

json to_json(const TrainConfig& c) {
  json j{{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
         {"batch_size", c.batch_size},       {"adam_beta1", c.adam_beta1},
         {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon},
         {"dice_smooth", c.dice_smooth},     {"seed", c.seed},
         {"validation_fraction", c.validation_fraction},
         {"decision_threshold", c.decision_threshold}};
  if (c.early_stop_dice) j["early_stop_dice"] = *c.early_stop_dice;
  return j;
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.adam_beta1 = j.value("adam_beta1", c.adam_beta1);
    c.adam_beta2 = j.value("adam_beta2", c.adam_beta2);
    c.adam_epsilon = j.value("adam_epsilon", c.adam_epsilon);
    c.dice_smooth = j.value("dice_smooth", c.dice_smooth);
    c.seed = j.value("seed", c.seed);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.decision_threshold = j.value("decision_threshold", c.decision_threshold);
    if (j.contains("early_stop_dice") && !j["early_stop_dice"].is_null()) {
      c.early_stop_dice = j["early_stop_dice"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("train config: ") + e.what());
  }
  c.validate();
  return c;
}

namespace {

json metrics_json(const Metrics& m) {
  return json{{"dice", m.dice},
              {"jaccard", m.jaccard},
              {"iou", m.iou},
              {"binary_accuracy", m.binary_accuracy},
              {"loss", m.loss}};
}

}  // namespace

json to_json(const TrainReport& report) {
  json epochs = json::array();
  for (const auto& e : report.epochs) {
    json row{{"epoch", e.epoch}, {"train", metrics_json(e.train)}};
    if (e.validation) row["validation"] = metrics_json(*e.validation);
    epochs.push_back(row);
  }
  return json{{"train_count", report.train_count},
              {"validation_count", report.validation_count},
              {"steps", report.steps},
              {"epochs", epochs}};
}

std::string to_csv(const TrainReport& report) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,dice,jaccard,iou,binary_accuracy,loss,val_dice,val_jaccard,val_iou,val_binary_accuracy,val_loss\n";
  for (const auto& e : report.epochs) {
    out << e.epoch << ',' << e.train.dice << ',' << e.train.jaccard << ',' << e.train.iou << ','
        << e.train.binary_accuracy << ',' << e.train.loss;
    if (e.validation) {
      const auto& v = *e.validation;
      out << ',' << v.dice << ',' << v.jaccard << ',' << v.iou << ',' << v.binary_accuracy << ',' << v.loss;
    } else {
      out << ",,,,,";
    }
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Data

Batch<float> Dataset::batch(std::span<const std::size_t> indices) const {
  Batch<float> b(static_cast<int>(indices.size()), height, width, channels);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto& img = images.at(indices[i]);
    std::copy(img.begin(), img.end(), b.sample(static_cast<int>(i)).begin());
  }
  return b;
}

std::vector<float> Dataset::targets(std::span<const std::size_t> indices) const {
  std::vector<float> out;
  out.reserve(indices.size() * static_cast<std::size_t>(height) * width);
  for (auto i : indices) out.insert(out.end(), labels.at(i).begin(), labels.at(i).end());
  return out;
}

Dataset dataset_from_chips(std::span<const water::LabeledChip> chips) {
  Dataset d;
  if (chips.empty()) return d;
  d.height = chips.front().image.height();
  d.width = chips.front().image.width();
  d.channels = static_cast<int>(chips.front().image.band_count());
  const std::size_t plane = static_cast<std::size_t>(d.height) * d.width;
  for (const auto& c : chips) {
    if (c.image.height() != d.height || c.image.width() != d.width ||
        static_cast<int>(c.image.band_count()) != d.channels) {
      throw InvalidArgument("chips in a dataset must share one shape");
    }
    if (c.label.width() != d.width || c.label.height() != d.height) {
      throw InvalidArgument("chip label shape does not match its image");
    }
    std::vector<float> hwc(plane * d.channels);
    for (int b = 0; b < d.channels; ++b) {
      const auto band = c.image.band(static_cast<std::size_t>(b));
      for (std::size_t p = 0; p < plane; ++p) hwc[p * d.channels + b] = band[p];
    }
    d.images.push_back(std::move(hwc));
    d.labels.emplace_back(c.label.values().begin(), c.label.values().end());
  }
  return d;
}

Split split_dataset(std::size_t n, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed ^ 0x5eed5a1177ULL);
  rng.shuffle(std::span<std::size_t>(order));
  const auto n_val = static_cast<std::size_t>(std::floor(static_cast<double>(n) * validation_fraction + 1e-9));
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

std::vector<std::size_t> all_indices(const Dataset& data) {
  std::vector<std::size_t> idx(data.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

std::vector<float> predict(const ModelParams& params, const ModelConfig& model_cfg, const Dataset& data,
                           std::span<const std::size_t> indices, int batch_size, int threads) {
  std::vector<float> out;
  out.reserve(indices.size() * static_cast<std::size_t>(data.height) * data.width);
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto chunk = indices.subspan(start, std::min<std::size_t>(batch_size, indices.size() - start));
    const auto probs = forward(params, model_cfg, data.batch(chunk), threads);
    out.insert(out.end(), probs.data.begin(), probs.data.end());
  }
  return out;
}

Metrics evaluate(const ModelParams& params, const ModelConfig& model_cfg, const Dataset& data,
                 std::span<const std::size_t> indices, double smooth, double threshold, int batch_size,
                 int threads) {
  const auto probs = predict(params, model_cfg, data, indices, batch_size, threads);
  const auto targets = data.targets(indices);
  return evaluate_metrics(probs, targets, smooth, threshold);
}

// ---------------------------------------------------------------------------

TrainResult train(const Dataset& data, ModelParams init, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  cfg.validate();
  model_cfg.validate();
  if (data.size() == 0) throw InvalidArgument("training dataset is empty");
  if (data.channels != model_cfg.in_channels) throw InvalidArgument("dataset channels do not match model");
  check_params(init, model_cfg);

  const auto split = split_dataset(data.size(), cfg.validation_fraction, cfg.seed);
  if (split.train.empty()) throw InvalidArgument("no training samples after the validation split");

  TrainResult result;
  result.params = std::move(init);
  result.report.train_count = split.train.size();
  result.report.validation_count = split.validation.size();

  auto state = make_adam_state(result.params);
  const auto adam = cfg.adam();
  Rng shuffle_rng(cfg.seed + 1);
  std::vector<std::size_t> order = split.train;
  std::int64_t step = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    Metrics sum;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::span<const std::size_t> idx(order.data() + start,
                                             std::min<std::size_t>(cfg.batch_size, order.size() - start));
      const auto batch = data.batch(idx);
      const auto targets = data.targets(idx);
      auto lg = backward<float>(result.params, model_cfg, batch, targets, cfg.dice_smooth, cfg.threads);

      const auto m = evaluate_metrics(lg.probs.data, targets, cfg.dice_smooth, cfg.decision_threshold);
      const double w = static_cast<double>(idx.size());
      sum.dice += w * m.dice;
      sum.jaccard += w * m.jaccard;
      sum.iou += w * m.iou;
      sum.binary_accuracy += w * m.binary_accuracy;
      seen += idx.size();

      ++step;
      adam_step(result.params, lg.grads, state, step, adam);
      if (hooks.after_step) hooks.after_step(step - 1, result.params);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    const double n = static_cast<double>(seen);
    rec.train = {sum.dice / n, sum.jaccard / n, sum.iou / n, sum.binary_accuracy / n, 0.0};
    rec.train.loss = 1.0 - rec.train.dice;
    if (!split.validation.empty()) {
      rec.validation = evaluate(result.params, model_cfg, data, split.validation, cfg.dice_smooth,
                                cfg.decision_threshold, cfg.batch_size, cfg.threads);
    }
    result.report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
    if (cfg.early_stop_dice && rec.train.dice >= *cfg.early_stop_dice) break;
  }
  result.report.steps = step;
  return result;
}

TrainResult train(const std::filesystem::path& manifest, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  const auto chips = water::load_chips(manifest);
  if (chips.empty()) throw InvalidArgument("chip manifest " + manifest.string() + " is empty");
  const auto data = dataset_from_chips(chips);
  return train(data, init_params<float>(model_cfg, cfg.seed), model_cfg, cfg, hooks);
}

}  // namespace roadflood::segnet
