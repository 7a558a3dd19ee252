#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "debias_cl/error.hpp"

namespace debias_cl {

// Behavioral statistics of one recording session (1-based index).
struct SessionMeta {
  std::uint32_t session = 1;
  double response_accuracy = 1.0;    // r(t)
  double consistency = 1.0;
  double activation_fraction = 1.0;  // a(t) = activated voxels / all voxels

  friend bool operator==(const SessionMeta&, const SessionMeta&) = default;
};

enum class Split : std::uint8_t { Train = 0, Test = 1 };

struct Sample {
  std::vector<double> fmri;       // n
  std::vector<double> embedding;  // d, unit norm
  std::uint32_t session = 1;
  bool response_correct = false;
  Split split = Split::Train;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct DatasetHeader {
  std::uint32_t sessions = 0;
  std::uint32_t samples_per_session = 0;
  std::uint32_t fmri_dim = 0;
  std::uint32_t embed_dim = 0;
  double test_fraction = 0.0;
  std::uint64_t seed = 0;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

// Inclusive 1-based session range.
struct SessionRange {
  std::uint32_t first = 1;
  std::uint32_t last = 1;

  bool contains(std::uint32_t t) const { return t >= first && t <= last; }
  std::uint32_t size() const { return last - first + 1; }
  std::string label() const { return std::to_string(first) + "-" + std::to_string(last); }

  friend bool operator==(const SessionRange&, const SessionRange&) = default;
};

// Samples stored session by session; within a session, train samples precede
// test samples.
struct Dataset {
  DatasetHeader header;
  std::vector<SessionMeta> sessions;
  std::vector<Sample> samples;

  const SessionMeta& meta(std::uint32_t t) const {
    if (t == 0 || t > sessions.size()) throw DomainError("dataset: no session " + std::to_string(t));
    return sessions[t - 1];
  }

  // Indices of the samples in `range` with the given split, in storage order.
  std::vector<std::size_t> select(SessionRange range, Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (range.contains(samples[i].session) && samples[i].split == split) out.push_back(i);
    return out;
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

}  // namespace debias_cl
