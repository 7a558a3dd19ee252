#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "debias_cl/random.hpp"
#include "debias_cl/session.hpp"

namespace debias_cl {

// Synthetic recording campaign with memory decay: response accuracy falls
// linearly from r_max to r_min, the stimulus-driven gain falls with it, the
// noise grows, and a negative baseline deepens so fewer voxels read positive.
struct GenConfig {
  std::uint32_t sessions = 40;
  std::uint32_t samples_per_session = 100;
  std::uint32_t fmri_dim = 64;
  std::uint32_t embed_dim = 16;
  double r_max = 0.95;
  double r_min = 0.70;
  double gain_floor = 0.55;
  double noise_base = 0.5;
  double noise_growth = 2.0;
  // Baseline offset b(t) = -baseline_shift * (1 - r(t)) on every voxel.
  double baseline_shift = 3.0;
  double test_fraction = 0.2;
  std::uint64_t seed = 42;

  std::uint32_t test_count() const {
    return static_cast<std::uint32_t>(std::lround(test_fraction * samples_per_session));
  }

  void validate() const {
    if (sessions == 0 || samples_per_session == 0 || fmri_dim == 0 || embed_dim == 0) {
      throw ConfigError("data: sessions, samples_per_session, fmri_dim and embed_dim must be positive");
    }
    if (!(r_min >= 0.0 && r_max <= 1.0 && r_min <= r_max)) throw ConfigError("data: need 0 <= r_min <= r_max <= 1");
    if (!(gain_floor > 0.0 && gain_floor <= 1.0)) throw ConfigError("data: gain_floor must lie in (0,1]");
    if (!(noise_base >= 0.0 && noise_growth >= 0.0)) throw ConfigError("data: noise parameters must be non-negative");
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("data: test_fraction must lie in (0,1)");
    const std::uint32_t tc = test_count();
    if (tc == 0 || tc >= samples_per_session) {
      throw ConfigError("data: test_fraction leaves a session without train or test samples");
    }
  }

  double response_accuracy(std::uint32_t t) const {
    if (sessions == 1) return r_max;
    return r_max - (r_max - r_min) * static_cast<double>(t - 1) / static_cast<double>(sessions - 1);
  }
  double gain(std::uint32_t t) const { return gain_floor + (1.0 - gain_floor) * response_accuracy(t); }
  double noise_sigma(std::uint32_t t) const { return noise_base * (1.0 + noise_growth * (1.0 - response_accuracy(t))); }
  double baseline(std::uint32_t t) const { return -baseline_shift * (1.0 - response_accuracy(t)); }
};

// Fixed mixing matrix W* [n x d], entries N(0, 1/sqrt(d)) read as standard
// deviation. Drawn first from the generator stream.
inline std::vector<double> draw_mixing(Rng& rng, std::uint32_t n, std::uint32_t d) {
  std::vector<double> w(static_cast<std::size_t>(n) * d);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  for (double& v : w) v = rng.normal(0.0, sd);
  return w;
}

inline Dataset generate(const GenConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  const std::uint32_t n = cfg.fmri_dim, d = cfg.embed_dim;
  const std::vector<double> mixing = draw_mixing(rng, n, d);
  const std::uint32_t first_test = cfg.samples_per_session - cfg.test_count();

  Dataset ds;
  ds.header = DatasetHeader{cfg.sessions, cfg.samples_per_session, n, d, cfg.test_fraction, cfg.seed};
  ds.samples.reserve(static_cast<std::size_t>(cfg.sessions) * cfg.samples_per_session);

  for (std::uint32_t t = 1; t <= cfg.sessions; ++t) {
    const double r = cfg.response_accuracy(t);
    const double g = cfg.gain(t);
    const double sigma = cfg.noise_sigma(t);
    const double base = cfg.baseline(t);
    std::size_t positive = 0;

    for (std::uint32_t k = 0; k < cfg.samples_per_session; ++k) {
      Sample s;
      s.session = t;
      s.embedding.resize(d);
      double norm2 = 0.0;
      do {
        norm2 = 0.0;
        for (double& v : s.embedding) {
          v = rng.normal();
          norm2 += v * v;
        }
      } while (norm2 == 0.0);
      const double inv = 1.0 / std::sqrt(norm2);
      for (double& v : s.embedding) v *= inv;

      s.fmri.resize(n);
      for (std::uint32_t i = 0; i < n; ++i) {
        double signal = 0.0;
        for (std::uint32_t j = 0; j < d; ++j) signal += mixing[static_cast<std::size_t>(i) * d + j] * s.embedding[j];
        const double x = g * signal + base + rng.normal(0.0, sigma);
        s.fmri[i] = x;
        positive += x > 0.0 ? 1 : 0;
      }
      s.response_correct = rng.bernoulli(r);
      s.split = k >= first_test ? Split::Test : Split::Train;
      ds.samples.push_back(std::move(s));
    }

    SessionMeta meta;
    meta.session = t;
    meta.response_accuracy = r;
    meta.consistency = std::clamp(r + 0.03, 0.0, 1.0);
    meta.activation_fraction =
        static_cast<double>(positive) / (static_cast<double>(cfg.samples_per_session) * static_cast<double>(n));
    ds.sessions.push_back(meta);
  }
  return ds;
}

struct SessionStatRow {
  std::uint32_t session = 0;
  double response_accuracy = 0.0;  // empirical mean of response_correct
  double consistency = 0.0;
  double activation_fraction = 0.0;
  std::size_t samples = 0;
};

inline std::vector<SessionStatRow> session_stats(const Dataset& ds) {
  if (ds.sessions.empty()) throw DomainError("session_stats: dataset has no sessions");
  std::vector<SessionStatRow> rows(ds.sessions.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i].session = ds.sessions[i].session;
    rows[i].consistency = ds.sessions[i].consistency;
    rows[i].activation_fraction = ds.sessions[i].activation_fraction;
  }
  for (const Sample& s : ds.samples) {
    SessionStatRow& row = rows.at(s.session - 1);
    row.response_accuracy += s.response_correct ? 1.0 : 0.0;
    ++row.samples;
  }
  for (SessionStatRow& row : rows) {
    if (row.samples == 0) throw DomainError("session_stats: session " + std::to_string(row.session) + " is empty");
    row.response_accuracy /= static_cast<double>(row.samples);
  }
  return rows;
}

}  // namespace debias_cl
