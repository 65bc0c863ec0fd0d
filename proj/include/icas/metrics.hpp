#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "icas/attacks.hpp"

namespace icas {

/// A score oriented so that higher means "member".
struct LabeledScore {
  double score = 0.0;
  bool is_member = false;

  bool operator==(const LabeledScore&) const = default;
};

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;

  bool operator==(const RocPoint&) const = default;
};

struct Threshold {
  double tau = 0.0;
  double accuracy = 0.0;
};

struct EvalReport {
  double auroc = 0.5;
  std::vector<std::pair<double, double>> tpr_at_fpr;  // (fpr budget, tpr)
  double asr = 0.0;
  double threshold = 0.0;
  std::vector<RocPoint> roc;
  std::size_t n_member = 0;
  std::size_t n_nonmember = 0;
};

/// Negates lower_is_member scores. Throws ValidationError on unknown labels.
std::vector<LabeledScore> orient(std::span<const ScoredSample> scores);

/// Mann-Whitney AUROC with midranks for ties.
double auroc(std::span<const LabeledScore> data);

/// Step ROC curve from (0,0) to (1,1), one vertex per distinct score.
std::vector<RocPoint> roc_points(std::span<const LabeledScore> data);

/// Trapezoidal area under a polyline ROC curve.
double roc_area(std::span<const RocPoint> roc);

/// Largest TPR at a realizable threshold whose FPR does not exceed budget.
double tpr_at_fpr(std::span<const LabeledScore> data, double budget);

/// Accuracy-maximizing threshold for the rule score >= tau => member. Candidates
/// are midpoints of adjacent distinct scores plus min - 1 and max + 1; accuracy
/// ties go to the smallest tau.
Threshold calibrate_threshold(std::span<const LabeledScore> calib);

/// Fraction of samples classified correctly by score >= tau.
double accuracy_at(std::span<const LabeledScore> data, double tau);

/// Calibrates on one split and reports held-out accuracy.
Threshold attack_success_rate(std::span<const LabeledScore> calibration,
                              std::span<const LabeledScore> evaluation);

/// AUROC, TPR@FPR and ROC over calibration + evaluation; ASR on the held-out part.
EvalReport evaluate(std::span<const LabeledScore> calibration, std::span<const LabeledScore> evaluation,
                    std::span<const double> fpr_budgets);

}  // namespace icas
