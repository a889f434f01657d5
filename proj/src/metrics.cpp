#include "roadflood/metrics.hpp"

#include <cstddef>

#include "roadflood/error.hpp"

namespace roadflood::segnet {

namespace {

template <typename T>
void check_pair(std::span<const T> probs, std::span<const T> targets) {
  if (probs.size() != targets.size()) throw InvalidArgument("metric inputs differ in size");
}

double ratio_or_one(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

}  // namespace

template <typename T>
OverlapSums overlap_sums(std::span<const T> probs, std::span<const T> targets) {
  check_pair(probs, targets);
  OverlapSums s;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = probs[i];
    const double g = targets[i];
    s.intersection += p * g;
    s.sum_pred += p;
    s.sum_target += g;
  }
  return s;
}

template <typename T>
double dice_coeff(std::span<const T> probs, std::span<const T> targets, double smooth) {
  const auto s = overlap_sums(probs, targets);
  return ratio_or_one(2.0 * s.intersection + smooth, s.sum_pred + s.sum_target + smooth);
}

template <typename T>
double jaccard_coeff(std::span<const T> probs, std::span<const T> targets, double smooth) {
  const auto s = overlap_sums(probs, targets);
  return ratio_or_one(s.intersection + smooth, s.sum_pred + s.sum_target - s.intersection + smooth);
}

template <typename T>
double iou_hard(std::span<const T> probs, std::span<const T> targets, double threshold) {
  check_pair(probs, targets);
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool p = probs[i] >= threshold;
    const bool g = targets[i] >= 0.5;
    inter += (p && g);
    uni += (p || g);
  }
  return ratio_or_one(static_cast<double>(inter), static_cast<double>(uni));
}

template <typename T>
double hard_dice(std::span<const T> probs, std::span<const T> targets, double threshold) {
  check_pair(probs, targets);
  std::size_t inter = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool p = probs[i] >= threshold;
    const bool g = targets[i] >= 0.5;
    inter += (p && g);
    total += p + g;
  }
  return ratio_or_one(2.0 * static_cast<double>(inter), static_cast<double>(total));
}

template <typename T>
double binary_accuracy(std::span<const T> probs, std::span<const T> targets, double threshold) {
  check_pair(probs, targets);
  if (probs.empty()) return 1.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) hits += (probs[i] >= threshold) == (targets[i] >= 0.5);
  return static_cast<double>(hits) / static_cast<double>(probs.size());
}

Metrics evaluate_metrics(std::span<const float> probs, std::span<const float> targets, double smooth,
                         double threshold) {
  Metrics m;
  m.dice = dice_coeff(probs, targets, smooth);
  m.jaccard = jaccard_coeff(probs, targets, smooth);
  m.iou = iou_hard(probs, targets, threshold);
  m.binary_accuracy = binary_accuracy(probs, targets, threshold);
  m.loss = 1.0 - m.dice;
  return m;
}

#define ROADFLOOD_INSTANTIATE_METRICS(T)                                                        \
  template OverlapSums overlap_sums<T>(std::span<const T>, std::span<const T>);                \
  template double dice_coeff<T>(std::span<const T>, std::span<const T>, double);               \
  template double jaccard_coeff<T>(std::span<const T>, std::span<const T>, double);            \
  template double iou_hard<T>(std::span<const T>, std::span<const T>, double);                 \
  template double hard_dice<T>(std::span<const T>, std::span<const T>, double);                \
  template double binary_accuracy<T>(std::span<const T>, std::span<const T>, double);

ROADFLOOD_INSTANTIATE_METRICS(float)
ROADFLOOD_INSTANTIATE_METRICS(double)

#undef ROADFLOOD_INSTANTIATE_METRICS

}  // namespace roadflood::segnet
