#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "icas/error.hpp"
#include "icas/metrics.hpp"

namespace icas {

/// y = slope * x + intercept by ordinary least squares.
struct FitResult {
  double slope = 0.0;
  double intercept = 0.0;
  double pearson_r = 1.0;
  std::size_t n = 0;
};

struct FitPoint {
  double x = 0.0;
  double y = 0.0;
};

/// OLS fit of y on x. Pearson r is Sxy / sqrt(Sxx Syy), defined as 1 when
/// Syy = 0. Throws ConfigError for n < 2 or a constant design.
template <typename DerivedX, typename DerivedY>
FitResult linear_fit(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y);

FitResult linear_fit(std::span<const FitPoint> points);

enum class XTransform { identity, log2 };

XTransform parse_x_transform(const std::string& text);

/// (x, auroc) pairs in input order, with x optionally mapped through log2.
std::vector<FitPoint> series_from_reports(std::span<const std::pair<double, EvalReport>> reports,
                                          XTransform transform = XTransform::identity);

/// Drops points whose AUROC exceeds `max_auroc` (the linear regime ends near 1).
std::vector<FitPoint> drop_saturated(std::span<const FitPoint> points, double max_auroc);

template <typename DerivedX, typename DerivedY>
FitResult linear_fit(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedY>& y) {
  using Eigen::Index;
  if (x.size() != y.size()) throw ConfigError("linear_fit: x and y differ in length");
  if (x.size() < 2) throw ConfigError("linear_fit needs at least 2 points");
  if (!x.allFinite() || !y.allFinite()) throw NumericError("linear_fit: non-finite input");
  const auto n = static_cast<double>(x.size());
  const double x_mean = x.sum() / n;
  const double y_mean = y.sum() / n;
  const auto dx = (x.array() - x_mean).eval();
  const auto dy = (y.array() - y_mean).eval();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  const double sxy = (dx * dy).sum();
  if (!(sxx > 0.0)) throw ConfigError("linear_fit: all x values are equal");
  FitResult r;
  r.n = static_cast<std::size_t>(x.size());
  r.slope = sxy / sxx;
  r.intercept = y_mean - r.slope * x_mean;
  r.pearson_r = syy > 0.0 ? std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0) : 1.0;
  return r;
}

}  // namespace icas
