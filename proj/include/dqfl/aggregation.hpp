#pragma once

// Aggregation weights for FedAvg and for loss-powered fair aggregation, and the
// convex combination that produces the next global model.

#include <algorithm>
#include <charconv>
#include <limits>
#include <span>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "dqfl/error.hpp"
#include "dqfl/local_trainer.hpp"
#include "dqfl/model.hpp"

namespace dqfl {

enum class StrategyKind { kFedAvg, kStaticQ, kDynamicQ };

inline constexpr double kDefaultLossFloor = 1e-8;

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kFedAvg;
  double q = 0.0;  // static_q only
  double loss_floor = kDefaultLossFloor;

  void validate() const {
    if (!std::isfinite(q) || q < 0.0) throw ConfigError("q must be finite and >= 0");
    if (!(loss_floor > 0.0 && loss_floor <= 1e-3)) throw ConfigError("loss_floor must be in (0, 1e-3]");
  }

  /// Stable identifier used in logs: fedavg, static_q(<q>), dynamic_q.
  std::string label() const;

  friend bool operator==(const StrategyConfig&, const StrategyConfig&) = default;
};

/// Client weights ordered by ascending client id.
struct WeightVector {
  std::vector<std::pair<std::size_t, double>> entries;

  std::size_t size() const noexcept { return entries.size(); }
  double sum() const {
    double s = 0.0;
    for (const auto& e : entries) s += e.second;
    return s;
  }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

namespace detail {

inline void check_reports(std::span<const ClientReport> reports, std::span<const double> shares) {
  if (reports.empty()) throw ContractError("aggregation needs at least one report");
  if (reports.size() != shares.size()) throw ContractError("one data share per report required");
  for (std::size_t i = 1; i < reports.size(); ++i)
    if (reports[i].client_id <= reports[i - 1].client_id)
      throw ContractError("reports must be sorted by strictly ascending client id");
  for (double p : shares)
    if (!(p > 0.0) || !std::isfinite(p)) throw ContractError("data shares must be positive and finite");
}

inline WeightVector normalize(std::span<const ClientReport> reports, const std::vector<double>& raw) {
  double total = 0.0;
  for (double x : raw) total += x;
  WeightVector w;
  w.entries.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) w.entries.emplace_back(reports[i].client_id, raw[i] / total);
  return w;
}

}  // namespace detail

/// w_k = p_k / sum of p_i over the participating clients. shares[i] belongs to reports[i].
inline WeightVector fedavg_weights(std::span<const ClientReport> reports, std::span<const double> shares) {
  detail::check_reports(reports, shares);
  return detail::normalize(reports, std::vector<double>(shares.begin(), shares.end()));
}

/// w_k proportional to p_k * max(F_k, floor)^q. Powers are formed as
/// exp(q ln F - max_i q ln F_i) so large q and large losses cannot overflow;
/// the shift cancels in the ratio. At q = 0 every factor is exactly 1 and the
/// result is bit-identical to fedavg_weights.
inline WeightVector dqffl_weights(std::span<const ClientReport> reports, std::span<const double> shares, double q,
                                  double loss_floor = kDefaultLossFloor) {
  detail::check_reports(reports, shares);
  if (!std::isfinite(q) || q < 0.0) throw ContractError("q must be finite and >= 0");
  std::vector<double> log_terms(reports.size());
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const double f = reports[i].reported_loss;
    if (!std::isfinite(f)) throw ContractError("non-finite reported loss from client " + std::to_string(reports[i].client_id));
    log_terms[i] = q * std::log(std::max(f, loss_floor));
    shift = std::max(shift, log_terms[i]);
  }
  std::vector<double> raw(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) raw[i] = shares[i] * std::exp(log_terms[i] - shift);
  return detail::normalize(reports, raw);
}

/// Weighted objective sum_k w_k F_k over the round's reports.
inline double weighted_loss(std::span<const ClientReport> reports, const WeightVector& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < reports.size(); ++i) total += weights.entries[i].second * reports[i].reported_loss;
  return total;
}

/// Convex combination of the clients' updated parameters, summed in ascending client id order.
inline ParamVector aggregate(std::span<const ClientReport> reports, const WeightVector& weights) {
  if (reports.empty()) throw ContractError("aggregate needs at least one report");
  if (weights.size() != reports.size()) throw ContractError("weight count does not match report count");
  const std::size_t n = reports.front().updated_params.size();
  ParamVector out(n);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (weights.entries[i].first != reports[i].client_id) throw ContractError("weights and reports disagree on client ids");
    if (reports[i].updated_params.size() != n) throw ContractError("parameter length mismatch between clients");
    const double w = weights.entries[i].second;
    const auto& p = reports[i].updated_params;
    for (std::size_t j = 0; j < n; ++j) out[j] += w * p[j];
  }
  return out;
}

inline std::string StrategyConfig::label() const {
  switch (kind) {
    case StrategyKind::kFedAvg:
      return "fedavg";
    case StrategyKind::kStaticQ: {
      char buf[64];
      auto res = std::to_chars(buf, buf + sizeof(buf), q);
      return "static_q(" + std::string(buf, res.ptr) + ")";
    }
    case StrategyKind::kDynamicQ:
      return "dynamic_q";
  }
  return "unknown";
}

}  // namespace dqfl
