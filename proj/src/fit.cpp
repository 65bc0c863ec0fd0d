#include "icas/fit.hpp"

#include "icas/error.hpp"

namespace icas {

FitResult linear_fit(std::span<const FitPoint> points) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(points.size()));
  Eigen::VectorXd y(x.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    x[static_cast<Eigen::Index>(i)] = points[i].x;
    y[static_cast<Eigen::Index>(i)] = points[i].y;
  }
  return linear_fit(x, y);
}

XTransform parse_x_transform(const std::string& text) {
  if (text == "identity" || text == "none" || text.empty()) return XTransform::identity;
  if (text == "log2") return XTransform::log2;
  throw ConfigError("x_transform must be identity or log2, got '" + text + "'");
}

std::vector<FitPoint> series_from_reports(std::span<const std::pair<double, EvalReport>> reports,
                                          XTransform transform) {
  std::vector<FitPoint> out;
  out.reserve(reports.size());
  for (const auto& [x, report] : reports) {
    if (transform == XTransform::log2 && !(x > 0.0)) throw ConfigError("log2 transform needs x > 0");
    out.push_back({transform == XTransform::log2 ? std::log2(x) : x, report.auroc});
  }
  return out;
}

std::vector<FitPoint> drop_saturated(std::span<const FitPoint> points, double max_auroc) {
  std::vector<FitPoint> out;
  for (const FitPoint& p : points)
    if (p.y <= max_auroc) out.push_back(p);
  return out;
}

}  // namespace icas
