#pragma once

// Test-only reference computations. Deliberately naive and independent of the
// code paths they check.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "dqfl/model.hpp"
#include "dqfl/rng.hpp"

namespace dqfl::oracle {

/// Cross-entropy of one sample from explicit probabilities, no log-sum-exp tricks
/// beyond a max shift (long double to stay accurate).
inline double naive_sample_loss(const ModelSpec& spec, const ParamVector& p, std::span<const double> x, int y) {
  const std::size_t d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
  std::vector<long double> z(c);
  if (spec.kind == ModelKind::kLogistic) {
    for (std::size_t k = 0; k < c; ++k) {
      long double acc = p[c * d + k];
      for (std::size_t j = 0; j < d; ++j) acc += static_cast<long double>(p[k * d + j]) * x[j];
      z[k] = acc;
    }
  } else {
    std::vector<long double> a(h);
    for (std::size_t j = 0; j < h; ++j) {
      long double acc = p[h * d + j];
      for (std::size_t l = 0; l < d; ++l) acc += static_cast<long double>(p[j * d + l]) * x[l];
      a[j] = std::tanh(acc);
    }
    const std::size_t off = h * d + h;
    for (std::size_t k = 0; k < c; ++k) {
      long double acc = p[off + c * h + k];
      for (std::size_t j = 0; j < h; ++j) acc += static_cast<long double>(p[off + k * h + j]) * a[j];
      z[k] = acc;
    }
  }
  long double mx = z[0];
  for (auto v : z) mx = std::max(mx, v);
  long double denom = 0;
  for (auto v : z) denom += std::exp(v - mx);
  const long double prob = std::exp(z[static_cast<std::size_t>(y)] - mx) / denom;
  return static_cast<double>(-std::log(prob));
}

inline double naive_loss(const ModelSpec& spec, const ParamVector& p, const Batch& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < b.size(); ++i) total += naive_sample_loss(spec, p, b.row(i), b.labels[i]);
  return total / static_cast<double>(b.size());
}

/// Central finite differences of f at x with step h.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Relative error with the denominator floored at `floor`, so coordinates whose
/// true value is ~0 are compared on an absolute scale of floor * tolerance.
inline double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Two-pass population variance in long double.
inline double variance(const std::vector<double>& v) {
  long double m = 0;
  for (double x : v) m += x;
  m /= static_cast<long double>(v.size());
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return static_cast<double>(s / static_cast<long double>(v.size()));
}

inline Batch random_batch(Rng& rng, std::size_t n, std::size_t d, std::size_t c, double scale = 1.0) {
  Batch b;
  b.dim = d;
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    for (auto& v : x) v = scale * rng.normal();
    b.push_back(x, static_cast<int>(rng.uniform_index(c)));
  }
  return b;
}

inline ParamVector random_params(Rng& rng, std::size_t n, double scale) {
  ParamVector p(n);
  for (auto& v : p.values) v = scale * rng.normal();
  return p;
}

}  // namespace dqfl::oracle
