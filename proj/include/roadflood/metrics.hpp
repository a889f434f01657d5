#pragma once

#include <span>

namespace roadflood::segnet {

inline constexpr double kDefaultSmooth = 1.0;
inline constexpr double kDefaultDecisionThreshold = 0.5;

/// Batch-global sums behind the overlap metrics.
struct OverlapSums {
  double intersection = 0.0;  // sum p*g
  double sum_pred = 0.0;      // sum p
  double sum_target = 0.0;    // sum g
};

template <typename T>
OverlapSums overlap_sums(std::span<const T> probs, std::span<const T> targets);

/// (2*sum(pg) + eps) / (sum(p) + sum(g) + eps). With eps = 0 and both
/// inputs empty the result is 1.
template <typename T>
double dice_coeff(std::span<const T> probs, std::span<const T> targets, double smooth = kDefaultSmooth);

/// (sum(pg) + eps) / (sum(p) + sum(g) - sum(pg) + eps).
template <typename T>
double jaccard_coeff(std::span<const T> probs, std::span<const T> targets, double smooth = kDefaultSmooth);

/// Intersection over union of the thresholded prediction (p >= threshold).
/// Two empty masks score 1.
template <typename T>
double iou_hard(std::span<const T> probs, std::span<const T> targets,
                double threshold = kDefaultDecisionThreshold);

/// Dice of the thresholded prediction with no smoothing.
template <typename T>
double hard_dice(std::span<const T> probs, std::span<const T> targets,
                 double threshold = kDefaultDecisionThreshold);

template <typename T>
double binary_accuracy(std::span<const T> probs, std::span<const T> targets,
                       double threshold = kDefaultDecisionThreshold);

template <typename T>
double dice_loss(std::span<const T> probs, std::span<const T> targets, double smooth = kDefaultSmooth) {
  return 1.0 - dice_coeff(probs, targets, smooth);
}

struct Metrics {
  double dice = 0.0;
  double jaccard = 0.0;
  double iou = 0.0;
  double binary_accuracy = 0.0;
  double loss = 0.0;
};

Metrics evaluate_metrics(std::span<const float> probs, std::span<const float> targets,
                         double smooth = kDefaultSmooth, double threshold = kDefaultDecisionThreshold);

}  // namespace roadflood::segnet
