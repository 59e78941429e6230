#pragma once

// Differentiable classifiers used by clients: multinomial logistic regression
// and a one-hidden-layer tanh MLP, both trained with mean cross-entropy.
//
// Parameter layout (row-major):
//   logistic: W[C x d], b[C]
//   mlp:      W1[h x d], b1[h], W2[C x h], b2[C]

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dqfl/error.hpp"
#include "dqfl/rng.hpp"

namespace dqfl {

enum class ModelKind { kLogistic, kMlp };

inline std::string to_string(ModelKind kind) { return kind == ModelKind::kLogistic ? "logistic" : "mlp"; }

struct ModelSpec {
  ModelKind kind = ModelKind::kLogistic;
  std::size_t input_dim = 1;
  std::size_t num_classes = 2;
  std::size_t hidden_dim = 0;
  double weight_init_scale = 0.01;

  void validate() const {
    if (input_dim < 1) throw ConfigError("model input_dim must be >= 1");
    if (num_classes < 2) throw ConfigError("model num_classes must be >= 2");
    if (kind == ModelKind::kMlp && hidden_dim < 1) throw ConfigError("mlp hidden_dim must be >= 1");
    if (!std::isfinite(weight_init_scale) || weight_init_scale < 0.0)
      throw ConfigError("weight_init_scale must be finite and non-negative");
  }

  std::size_t param_count() const {
    if (kind == ModelKind::kLogistic) return input_dim * num_classes + num_classes;
    return input_dim * hidden_dim + hidden_dim + hidden_dim * num_classes + num_classes;
  }

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// Flat trainable parameters of one model.
struct ParamVector {
  std::vector<double> values;

  ParamVector() = default;
  explicit ParamVector(std::size_t n, double fill = 0.0) : values(n, fill) {}
  explicit ParamVector(std::vector<double> v) : values(std::move(v)) {}

  std::size_t size() const noexcept { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  std::span<const double> view() const noexcept { return values; }

  bool all_finite() const {
    return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
  }

  friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

/// n samples of dimension d with integer class labels.
struct Batch {
  std::size_t dim = 0;
  std::vector<double> features;  // n x dim, row-major
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  void push_back(std::span<const double> x, int label) {
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
  }

  Batch subset(std::span<const std::size_t> idx) const {
    Batch out;
    out.dim = dim;
    out.features.reserve(idx.size() * dim);
    out.labels.reserve(idx.size());
    for (auto i : idx) out.push_back(row(i), labels[i]);
    return out;
  }

  friend bool operator==(const Batch&, const Batch&) = default;
};

/// Draws zero-mean normal weights scaled by weight_init_scale; biases are zero.
inline ParamVector init_params(const ModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  ParamVector p(spec.param_count());
  Rng rng(seed);
  const std::size_t d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
  auto fill = [&](std::size_t offset, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) p[offset + i] = spec.weight_init_scale * rng.normal();
  };
  if (spec.kind == ModelKind::kLogistic) {
    fill(0, c * d);
  } else {
    fill(0, h * d);
    fill(h * d + h, c * h);
  }
  return p;
}

namespace detail {

inline void check_dims(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  if (params.size() != spec.param_count())
    throw ContractError("parameter length " + std::to_string(params.size()) + " does not match model (" +
                        std::to_string(spec.param_count()) + ")");
  if (batch.dim != spec.input_dim) throw ContractError("batch feature dimension does not match model input_dim");
  if (batch.size() == 0) throw ContractError("empty batch");
  if (batch.features.size() != batch.size() * batch.dim) throw ContractError("batch feature matrix has wrong size");
  for (int y : batch.labels)
    if (y < 0 || static_cast<std::size_t>(y) >= spec.num_classes) throw ContractError("label out of range");
}

// out[r] = bias[r] + sum_j w[r * in + j] * x[j]
inline void affine(const double* w, const double* bias, std::span<const double> x, std::size_t out_dim,
                   double* out) {
  const std::size_t in = x.size();
  for (std::size_t r = 0; r < out_dim; ++r) {
    double acc = bias[r];
    const double* wr = w + r * in;
    for (std::size_t j = 0; j < in; ++j) acc += wr[j] * x[j];
    out[r] = acc;
  }
}

// Forward pass for one sample. Fills logits; for the MLP also the hidden activations.
inline void forward(const ModelSpec& spec, const ParamVector& p, std::span<const double> x,
                    std::vector<double>& hidden, std::vector<double>& logits) {
  const std::size_t d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
  logits.resize(c);
  if (spec.kind == ModelKind::kLogistic) {
    affine(p.values.data(), p.values.data() + c * d, x, c, logits.data());
    return;
  }
  hidden.resize(h);
  affine(p.values.data(), p.values.data() + h * d, x, h, hidden.data());
  for (auto& a : hidden) a = std::tanh(a);
  const double* w2 = p.values.data() + h * d + h;
  affine(w2, w2 + c * h, hidden, c, logits.data());
}

// Stable log-softmax in place; returns nothing, logits become log-probabilities.
inline void log_softmax(std::vector<double>& logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  for (auto& z : logits) z -= lse;
}

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace detail

/// Mean cross-entropy of the batch.
inline double loss(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  detail::check_dims(spec, params, batch);
  std::vector<double> hidden, logits;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::forward(spec, params, batch.row(i), hidden, logits);
    detail::log_softmax(logits);
    total -= logits[static_cast<std::size_t>(batch.labels[i])];
  }
  return total / static_cast<double>(batch.size());
}

/// Mean cross-entropy and its analytic gradient.
inline std::pair<double, ParamVector> loss_grad(const ModelSpec& spec, const ParamVector& params,
                                                const Batch& batch) {
  detail::check_dims(spec, params, batch);
  const std::size_t d = spec.input_dim, c = spec.num_classes, h = spec.hidden_dim;
  ParamVector grad(params.size());
  std::vector<double> hidden, logits, dhidden;
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto x = batch.row(i);
    const auto y = static_cast<std::size_t>(batch.labels[i]);
    detail::forward(spec, params, x, hidden, logits);
    detail::log_softmax(logits);
    total -= logits[y];
    // dL/dz = softmax - onehot
    for (std::size_t k = 0; k < c; ++k) logits[k] = std::exp(logits[k]) - (k == y ? 1.0 : 0.0);

    if (spec.kind == ModelKind::kLogistic) {
      for (std::size_t k = 0; k < c; ++k) {
        double* gw = grad.values.data() + k * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += logits[k] * x[j];
        grad[c * d + k] += logits[k];
      }
      continue;
    }
    const std::size_t w2_off = h * d + h;
    const double* w2 = params.values.data() + w2_off;
    dhidden.assign(h, 0.0);
    for (std::size_t k = 0; k < c; ++k) {
      double* gw = grad.values.data() + w2_off + k * h;
      for (std::size_t j = 0; j < h; ++j) {
        gw[j] += logits[k] * hidden[j];
        dhidden[j] += logits[k] * w2[k * h + j];
      }
      grad[w2_off + c * h + k] += logits[k];
    }
    for (std::size_t j = 0; j < h; ++j) {
      const double da = dhidden[j] * (1.0 - hidden[j] * hidden[j]);
      double* gw = grad.values.data() + j * d;
      for (std::size_t l = 0; l < d; ++l) gw[l] += da * x[l];
      grad[h * d + j] += da;
    }
  }
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (auto& g : grad.values) g *= inv_n;
  return {total * inv_n, std::move(grad)};
}

/// Class predicted for one sample; ties go to the lowest class index.
inline std::size_t predict(const ModelSpec& spec, const ParamVector& params, std::span<const double> x) {
  std::vector<double> hidden, logits;
  detail::forward(spec, params, x, hidden, logits);
  return detail::argmax_lowest(logits);
}

/// Fraction of samples whose argmax prediction equals the label.
inline double accuracy(const ModelSpec& spec, const ParamVector& params, const Batch& batch) {
  detail::check_dims(spec, params, batch);
  std::vector<double> hidden, logits;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    detail::forward(spec, params, batch.row(i), hidden, logits);
    if (detail::argmax_lowest(logits) == static_cast<std::size_t>(batch.labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

}  // namespace dqfl
