#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "dqfl/error.hpp"

namespace dqfl {

/// alpha-fair utility: ln x at alpha = 1, otherwise x^(1-alpha) / (1-alpha).
/// The second branch is used exactly as written, without the usual -1 in the
/// numerator, so the two branches are not continuous at alpha = 1.
inline double alpha_utility(double x, double alpha) {
  if (!(x > 0.0)) throw DomainError("alpha_utility requires x > 0");
  if (!(alpha >= 0.0)) throw DomainError("alpha_utility requires alpha >= 0");
  if (alpha == 1.0) return std::log(x);
  return std::pow(x, 1.0 - alpha) / (1.0 - alpha);
}

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double population_variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

/// (sum x)^2 / (n sum x^2); 1 when every value is zero.
inline double jain_index(std::span<const double> v) {
  double s = 0.0, s2 = 0.0;
  for (double x : v) {
    s += x;
    s2 += x * x;
  }
  if (s2 == 0.0) return 1.0;
  return s * s / (static_cast<double>(v.size()) * s2);
}

/// Sorted-rank Gini: sum_i (2i - n - 1) x_(i) / (n sum x), ranks from 1; 0 for an all-zero vector.
inline double gini_coefficient(std::span<const double> v) {
  std::vector<double> x(v.begin(), v.end());
  std::sort(x.begin(), x.end());
  const double n = static_cast<double>(x.size());
  double total = 0.0, weighted = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    total += x[i];
    weighted += (2.0 * static_cast<double>(i + 1) - n - 1.0) * x[i];
  }
  if (total == 0.0) return 0.0;
  return weighted / (n * total);
}

/// Accuracy floor applied before alpha_utility so clients at 0% stay in its domain.
inline constexpr double kUtilityFloor = 1e-6;

struct FairnessReport {
  std::size_t clients = 0;
  double mean_accuracy = 0.0;   // fraction
  double worst_decile = 0.0;    // mean of the ceil(K/10) lowest, fraction
  double best_decile = 0.0;     // mean of the ceil(K/10) highest, fraction
  double variance_pct2 = 0.0;   // population variance in percent^2
  double jain = 1.0;
  double gini = 0.0;
  double alpha = 1.0;
  double alpha_utility_sum = 0.0;
};

inline FairnessReport fairness_report(std::span<const double> accuracies, double alpha) {
  if (accuracies.empty()) throw ContractError("fairness_report needs at least one accuracy");
  std::vector<double> sorted(accuracies.begin(), accuracies.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t k = sorted.size();
  const std::size_t tail = (k + 9) / 10;

  FairnessReport r;
  r.clients = k;
  r.mean_accuracy = mean(sorted);
  r.worst_decile = mean(std::span<const double>(sorted).first(tail));
  r.best_decile = mean(std::span<const double>(sorted).last(tail));
  std::vector<double> pct(sorted.size());
  std::transform(sorted.begin(), sorted.end(), pct.begin(), [](double a) { return 100.0 * a; });
  r.variance_pct2 = population_variance(pct);
  r.jain = jain_index(sorted);
  r.gini = gini_coefficient(sorted);
  r.alpha = alpha;
  for (double a : accuracies) r.alpha_utility_sum += alpha_utility(std::max(a, kUtilityFloor), alpha);
  return r;
}

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
};

/// Counts over [0, 1] in bins of bin_width; 1.0 lands in the last bin. A 1e-9
/// slack absorbs representation error at bin edges (0.3 / 0.1 < 3).
inline std::vector<HistogramBin> histogram(std::span<const double> values, double bin_width) {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) throw ContractError("bin_width must be positive");
  const auto bins = static_cast<std::size_t>(std::max(1.0, std::ceil(1.0 / bin_width - 1e-9)));
  std::vector<HistogramBin> out(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].lo = static_cast<double>(i) * bin_width;
    out[i].hi = std::min(1.0, static_cast<double>(i + 1) * bin_width);
  }
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    auto b = static_cast<std::size_t>(std::floor(c / bin_width + 1e-9));
    out[std::min(b, bins - 1)].count++;
  }
  return out;
}

}  // namespace dqfl
