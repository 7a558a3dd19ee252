#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "debias_cl/cl_engine.hpp"
#include "debias_cl/session.hpp"

namespace debias_cl {

// Least-squares slope of ys against xs. Zero when xs has no spread.
inline double linear_slope(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw DimensionError("linear_slope: need two or more paired points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
  }
  return sxx > 0.0 ? sxy / sxx : 0.0;
}

// Average ranks (1-based), ties sharing the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

struct RankCorrelation {
  double rho = 0.0;
  bool undefined = false;  // a series was constant; rho reported as 0
};

inline RankCorrelation spearman(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size() || xs.size() < 2) throw DimensionError("spearman: need two or more paired points");
  const std::vector<double> rx = average_ranks(xs), ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return {0.0, true};
  return {std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0), false};
}

struct DeclineRow {
  std::size_t index = 0;
  std::string metric;
  double value = 0.0;
};

struct MetricTrend {
  std::string metric;
  double slope = 0.0;
  double spearman = 0.0;
  bool spearman_undefined = false;
};

struct DeclineReport {
  std::vector<DeclineRow> rows;
  std::vector<MetricTrend> trends;

  const MetricTrend& trend(const std::string& metric) const {
    for (const MetricTrend& t : trends)
      if (t.metric == metric) return t;
    throw DomainError("DeclineReport: no metric " + metric);
  }

  std::vector<double> series(const std::string& metric) const {
    std::vector<double> out;
    for (const DeclineRow& r : rows)
      if (r.metric == metric) out.push_back(r.value);
    return out;
  }

  // Recomputes slope and rank correlation per metric from the rows alone.
  void summarize() {
    trends.clear();
    std::vector<std::string> names;
    for (const DeclineRow& r : rows)
      if (std::find(names.begin(), names.end(), r.metric) == names.end()) names.push_back(r.metric);
    for (const std::string& name : names) {
      std::vector<double> xs, ys;
      for (const DeclineRow& r : rows) {
        if (r.metric != name) continue;
        xs.push_back(static_cast<double>(r.index));
        ys.push_back(r.value);
      }
      const RankCorrelation rc = spearman(xs, ys);
      trends.push_back(MetricTrend{name, linear_slope(xs, ys), rc.rho, rc.undefined});
    }
  }
};

inline constexpr const char* kMetricResponseAccuracy = "response_accuracy";
inline constexpr const char* kMetricConsistency = "consistency";
inline constexpr const char* kMetricActivation = "activation_fraction";

inline std::string accuracy_metric(Direction d) { return to_string(d) + "_top1"; }

// Behavioral decay curves over sessions: r(t), consistency and a(t).
inline DeclineReport behavioral_curves(std::span<const SessionMeta> sessions) {
  if (sessions.size() < 3) throw DomainError("behavioral_curves: need at least 3 sessions");
  DeclineReport report;
  for (const char* metric : {kMetricResponseAccuracy, kMetricConsistency, kMetricActivation}) {
    for (const SessionMeta& m : sessions) {
      const std::string name = metric;
      const double v = name == kMetricResponseAccuracy ? m.response_accuracy
                       : name == kMetricConsistency    ? m.consistency
                                                       : m.activation_fraction;
      report.rows.push_back(DeclineRow{m.session, name, v});
    }
  }
  report.summarize();
  return report;
}

// Trains a fresh encoder on each block of `window_size` sessions and
// evaluates retrieval on that block's test samples. Window w's encoder is
// initialized from a seed derived from (init_seed, w); all other settings are
// shared.
inline DeclineReport per_window_models(const Dataset& ds, std::uint32_t window_size, const EncoderConfig& encoder_cfg,
                                       const TrainConfig& cfg, const RetrievalConfig& retrieval) {
  const std::uint32_t sessions = ds.header.sessions;
  if (window_size == 0 || sessions % window_size != 0) {
    throw ProtocolError("per_window_models: " + std::to_string(sessions) + " sessions are not divisible into windows of " +
                        std::to_string(window_size));
  }
  DeclineReport report;
  const std::uint32_t windows = sessions / window_size;
  for (std::uint32_t w = 1; w <= windows; ++w) {
    const SessionRange range{(w - 1) * window_size + 1, w * window_size};
    EncoderConfig ec = encoder_cfg;
    ec.init_seed = derive_seed(encoder_cfg.init_seed, {w});
    const std::vector<std::size_t> train_idx = ds.select(range, Split::Train);
    StepTrainResult trained = train_step(init_encoder(ec), nullptr, ds, train_idx, {}, cfg, w);
    for (const ReportRow& row : evaluate_step(trained.params, ds, range, w, retrieval))
      report.rows.push_back(DeclineRow{w, accuracy_metric(row.direction), row.top1});
  }
  report.summarize();
  return report;
}

}  // namespace debias_cl
