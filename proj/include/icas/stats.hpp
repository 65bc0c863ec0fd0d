#pragma once

#include <cmath>
#include <algorithm>
#include <limits>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "icas/error.hpp"
#include "icas/records.hpp"

namespace icas {

/// Order of a Rényi entropy; alpha = +inf selects min-entropy.
class RenyiOrder {
 public:
  explicit RenyiOrder(double alpha) : alpha_(alpha) {
    if (!(alpha > 0.0)) throw ConfigError("Renyi order must be > 0");
  }
  static RenyiOrder infinity() { return RenyiOrder(std::numeric_limits<double>::infinity()); }
  static RenyiOrder parse(const std::string& key) { return RenyiOrder(parse_renyi_key(key)); }

  double value() const noexcept { return alpha_; }
  bool is_infinite() const noexcept { return std::isinf(alpha_); }
  bool is_shannon() const noexcept { return alpha_ == 1.0; }
  std::string key() const { return renyi_key(alpha_); }

  bool operator==(const RenyiOrder&) const = default;

 private:
  double alpha_;
};

struct VocabStats {
  double vocab_mean = 0.0;
  double vocab_std = 0.0;
  RenyiMap renyi;
  double max_cond_lp = 0.0;
};

inline constexpr double kNormalizationTolerance = 1e-6;

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  const Scalar peak = x.maxCoeff();
  if (!std::isfinite(peak)) return peak;
  return peak + std::log((x.array() - peak).exp().sum());
}

/// logits - logsumexp(logits), max-shifted.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> log_normalize(
    const Eigen::MatrixBase<Derived>& logits) {
  if (logits.size() < 2) throw ConfigError("log_normalize needs at least 2 entries");
  if (!logits.allFinite()) throw NumericError("log_normalize: non-finite logit");
  const auto peak = logits.maxCoeff();
  const auto shifted = (logits.array() - peak).matrix().eval();
  const auto lse = std::log(shifted.array().exp().sum());
  return (shifted.array() - lse).matrix();
}

template <typename Derived>
void require_normalized(const Eigen::MatrixBase<Derived>& logprobs) {
  if (logprobs.size() < 2) throw ConfigError("distribution needs at least 2 outcomes");
  if (!logprobs.allFinite()) throw NumericError("non-finite log-probability");
  const double lse = static_cast<double>(log_sum_exp(logprobs));
  if (std::abs(lse) > kNormalizationTolerance)
    throw NumericError("log-probabilities are not normalized (log-sum-exp = " + std::to_string(lse) + ")");
}

/// Mean and population standard deviation of log p(x|c) under x ~ p(.|c).
template <typename Derived>
std::pair<typename Derived::Scalar, typename Derived::Scalar> vocab_mean_std(
    const Eigen::MatrixBase<Derived>& logprobs) {
  using Scalar = typename Derived::Scalar;
  require_normalized(logprobs);
  // Centering on the peak makes a uniform distribution give mean == lp and std == 0 exactly.
  const Scalar peak = logprobs.maxCoeff();
  const auto p = logprobs.array().exp();
  const Scalar mean = peak + (p * (logprobs.array() - peak)).sum();
  const Scalar var = (p * (logprobs.array() - mean).square()).sum();
  return {mean, std::sqrt(std::max<Scalar>(var, Scalar(0)))};
}

/// H_alpha of a normalized distribution given as log-probs. alpha = 1 and
/// alpha = inf are separate branches; the general case is evaluated as
/// logsumexp(alpha * lp) / (1 - alpha).
template <typename Derived>
typename Derived::Scalar renyi_entropy(const Eigen::MatrixBase<Derived>& logprobs, RenyiOrder order) {
  using Scalar = typename Derived::Scalar;
  require_normalized(logprobs);
  if (order.is_infinite()) return -logprobs.maxCoeff();
  if (order.is_shannon()) return -(logprobs.array().exp() * logprobs.array()).sum();
  const Scalar alpha = static_cast<Scalar>(order.value());
  return log_sum_exp((alpha * logprobs.array()).matrix()) / (Scalar(1) - alpha);
}

template <typename Derived>
VocabStats vocab_stats(const Eigen::MatrixBase<Derived>& logprobs, const std::vector<RenyiOrder>& orders) {
  VocabStats out;
  std::tie(out.vocab_mean, out.vocab_std) = vocab_mean_std(logprobs);
  out.max_cond_lp = logprobs.maxCoeff();
  for (const RenyiOrder& order : orders) {
    // H_inf is stored as the exact negation of maxlp so the record invariant holds bit-for-bit.
    out.renyi[order.key()] = order.is_infinite() ? -out.max_cond_lp : renyi_entropy(logprobs, order);
  }
  return out;
}

/// vocab_stats over contiguous storage; the single path used by both the
/// toy model and summarize, so their outputs agree bit-for-bit.
VocabStats summarize_distribution(std::span<const double> logprobs, const std::vector<RenyiOrder>& orders);

/// Parses a comma list such as "0.5,1,2,inf".
std::vector<RenyiOrder> parse_orders(const std::string& text);

/// Converts a debug full-distribution record to the canonical record format.
SampleRecord summarize(const FullDistributionRecord& full, const std::vector<RenyiOrder>& orders);

}  // namespace icas
