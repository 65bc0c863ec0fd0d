#include "icas/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "icas/error.hpp"

namespace icas {

namespace {

struct ClassCounts {
  std::int64_t pos = 0;
  std::int64_t neg = 0;
};

ClassCounts count_classes(std::span<const LabeledScore> data) {
  ClassCounts c;
  for (const LabeledScore& d : data) {
    if (!std::isfinite(d.score)) throw NumericError("non-finite score");
    (d.is_member ? c.pos : c.neg) += 1;
  }
  if (c.pos == 0 || c.neg == 0) throw ConfigError("metrics need at least one member and one nonmember");
  return c;
}

std::vector<LabeledScore> sorted_descending(std::span<const LabeledScore> data) {
  std::vector<LabeledScore> v(data.begin(), data.end());
  std::sort(v.begin(), v.end(), [](const LabeledScore& x, const LabeledScore& y) { return x.score > y.score; });
  return v;
}

double below(double x) {
  const double t = x - 1.0;
  return t < x ? t : std::nextafter(x, -std::numeric_limits<double>::infinity());
}

double above(double x) {
  const double t = x + 1.0;
  return t > x ? t : std::nextafter(x, std::numeric_limits<double>::infinity());
}

}  // namespace

std::vector<LabeledScore> orient(std::span<const ScoredSample> scores) {
  std::vector<LabeledScore> out;
  out.reserve(scores.size());
  for (const ScoredSample& s : scores) {
    if (s.label == Label::unknown)
      throw ValidationError("label", "sample " + s.sample_id + " has label unknown; metrics need ground truth");
    const double v = s.direction == Direction::lower_is_member ? -s.score : s.score;
    out.push_back({v, s.label == Label::member});
  }
  return out;
}

double auroc(std::span<const LabeledScore> data) {
  const ClassCounts c = count_classes(data);
  std::vector<LabeledScore> v(data.begin(), data.end());
  std::sort(v.begin(), v.end(), [](const LabeledScore& x, const LabeledScore& y) { return x.score < y.score; });
  // Doubled midranks keep every quantity an exact integer.
  std::int64_t rank_sum2 = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    std::int64_t members = 0;
    while (j < v.size() && v[j].score == v[i].score) members += v[j++].is_member ? 1 : 0;
    const auto midrank2 = static_cast<std::int64_t>(i + 1 + j);
    rank_sum2 += members * midrank2;
    i = j;
  }
  const std::int64_t numerator2 = rank_sum2 - c.pos * (c.pos + 1);
  return static_cast<double>(numerator2) / static_cast<double>(2 * c.pos * c.neg);
}

std::vector<RocPoint> roc_points(std::span<const LabeledScore> data) {
  const ClassCounts c = count_classes(data);
  const auto v = sorted_descending(data);
  std::vector<RocPoint> roc{{0.0, 0.0}};
  std::int64_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    const double s = v[i].score;
    while (i < v.size() && v[i].score == s) (v[i++].is_member ? tp : fp) += 1;
    roc.push_back({static_cast<double>(fp) / static_cast<double>(c.neg),
                   static_cast<double>(tp) / static_cast<double>(c.pos)});
  }
  if (!(roc.back() == RocPoint{1.0, 1.0})) roc.push_back({1.0, 1.0});
  return roc;
}

double roc_area(std::span<const RocPoint> roc) {
  double area = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    area += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) / 2.0;
  return area;
}

double tpr_at_fpr(std::span<const LabeledScore> data, double budget) {
  if (!(budget > 0.0 && budget <= 1.0)) throw ConfigError("FPR budget must lie in (0, 1]");
  double best = 0.0;
  for (const RocPoint& p : roc_points(data))
    if (p.fpr <= budget + 1e-12) best = std::max(best, p.tpr);
  return best;
}

double accuracy_at(std::span<const LabeledScore> data, double tau) {
  if (data.empty()) throw ConfigError("accuracy of an empty set");
  std::size_t correct = 0;
  for (const LabeledScore& d : data) correct += ((d.score >= tau) == d.is_member) ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

Threshold calibrate_threshold(std::span<const LabeledScore> calib) {
  const ClassCounts c = count_classes(calib);
  std::vector<LabeledScore> v(calib.begin(), calib.end());
  std::sort(v.begin(), v.end(), [](const LabeledScore& x, const LabeledScore& y) { return x.score < y.score; });

  // Candidate below everything: all predicted member.
  double best_tau = below(v.front().score);
  std::int64_t best_correct = c.pos;
  std::int64_t neg_below = 0, pos_below = 0;  // counts with score < current candidate
  for (std::size_t i = 0; i < v.size();) {
    const double s = v[i].score;
    while (i < v.size() && v[i].score == s) (v[i++].is_member ? pos_below : neg_below) += 1;
    double tau;
    if (i < v.size()) {
      const double next = v[i].score;
      tau = s + (next - s) / 2.0;
      if (!(tau > s)) tau = next;
    } else {
      tau = above(s);
    }
    const std::int64_t correct = (c.pos - pos_below) + neg_below;
    if (correct > best_correct) {
      best_correct = correct;
      best_tau = tau;
    }
  }
  return {best_tau, static_cast<double>(best_correct) / static_cast<double>(v.size())};
}

Threshold attack_success_rate(std::span<const LabeledScore> calibration,
                              std::span<const LabeledScore> evaluation) {
  const Threshold t = calibrate_threshold(calibration);
  return {t.tau, accuracy_at(evaluation, t.tau)};
}

EvalReport evaluate(std::span<const LabeledScore> calibration, std::span<const LabeledScore> evaluation,
                    std::span<const double> fpr_budgets) {
  std::vector<LabeledScore> all(calibration.begin(), calibration.end());
  all.insert(all.end(), evaluation.begin(), evaluation.end());
  EvalReport r;
  const ClassCounts c = count_classes(all);
  r.n_member = static_cast<std::size_t>(c.pos);
  r.n_nonmember = static_cast<std::size_t>(c.neg);
  r.auroc = auroc(all);
  r.roc = roc_points(all);
  for (double b : fpr_budgets) r.tpr_at_fpr.emplace_back(b, tpr_at_fpr(all, b));
  const Threshold t = attack_success_rate(calibration, evaluation);
  r.asr = t.accuracy;
  r.threshold = t.tau;
  return r;
}

}  // namespace icas
