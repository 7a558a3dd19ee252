#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "debias_cl/binary_io.hpp"
#include "debias_cl/session.hpp"

namespace debias_cl {

// Dataset file layout (little-endian):
//   "VBCL" u16 version=1
//   header: S u32, samples_per_session u32, n u32, d u32, test_fraction f64, seed u64
//   S x (t u32, r f64, consistency f64, a f64)
//   S*samples_per_session x (t u32, flags u8 [bit0 correct, bit1 test], x n*f64, c d*f64)
//   CRC32 u32 over everything between the version and the checksum
inline constexpr std::string_view kDatasetMagic = "VBCL";
inline constexpr std::uint16_t kDatasetVersion = 1;

namespace detail {

inline constexpr std::size_t kDatasetHeaderBytes = 4 * 4 + 8 + 8;
inline constexpr std::size_t kSessionRecordBytes = 4 + 3 * 8;

inline std::size_t sample_record_bytes(const DatasetHeader& h) {
  return 4 + 1 + (static_cast<std::size_t>(h.fmri_dim) + h.embed_dim) * 8;
}

inline std::size_t dataset_payload_bytes(const DatasetHeader& h) {
  return kDatasetHeaderBytes + h.sessions * kSessionRecordBytes +
         static_cast<std::size_t>(h.sessions) * h.samples_per_session * sample_record_bytes(h);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  const DatasetHeader& h = ds.header;
  if (ds.sessions.size() != h.sessions ||
      ds.samples.size() != static_cast<std::size_t>(h.sessions) * h.samples_per_session) {
    throw DimensionError("write_dataset: dataset contents disagree with its header");
  }
  ByteWriter w;
  w.put(h.sessions);
  w.put(h.samples_per_session);
  w.put(h.fmri_dim);
  w.put(h.embed_dim);
  w.put(h.test_fraction);
  w.put(h.seed);
  for (const SessionMeta& m : ds.sessions) {
    w.put(m.session);
    w.put(m.response_accuracy);
    w.put(m.consistency);
    w.put(m.activation_fraction);
  }
  for (const Sample& s : ds.samples) {
    if (s.fmri.size() != h.fmri_dim || s.embedding.size() != h.embed_dim) {
      throw DimensionError("write_dataset: sample width disagrees with header");
    }
    w.put(s.session);
    const std::uint8_t flags = (s.response_correct ? 1u : 0u) | (s.split == Split::Test ? 2u : 0u);
    w.put(flags);
    w.doubles(s.fmri);
    w.doubles(s.embedding);
  }
  return frame(kDatasetMagic, kDatasetVersion, w);
}

// Optional shape the caller requires; checked right after the header is read.
struct DatasetExpectation {
  std::optional<std::uint32_t> fmri_dim;
  std::optional<std::uint32_t> embed_dim;
  std::optional<std::uint32_t> sessions;
};

inline Dataset decode_dataset(std::span<const std::uint8_t> bytes, const DatasetExpectation& expect = {}) {
  const std::string what = "dataset";
  std::span<const std::uint8_t> payload = unframe(bytes, kDatasetMagic, kDatasetVersion, what);
  ByteReader r(payload, what);

  Dataset ds;
  DatasetHeader& h = ds.header;
  h.sessions = r.get<std::uint32_t>();
  h.samples_per_session = r.get<std::uint32_t>();
  h.fmri_dim = r.get<std::uint32_t>();
  h.embed_dim = r.get<std::uint32_t>();
  h.test_fraction = r.get<double>();
  h.seed = r.get<std::uint64_t>();

  auto check = [&](const std::optional<std::uint32_t>& want, std::uint32_t got, const char* field) {
    if (want && *want != got) {
      throw HeaderMismatchError(what + ": header " + field + "=" + std::to_string(got) + ", expected " +
                                std::to_string(*want));
    }
  };
  check(expect.fmri_dim, h.fmri_dim, "fmri_dim");
  check(expect.embed_dim, h.embed_dim, "embed_dim");
  check(expect.sessions, h.sessions, "sessions");

  const std::size_t expected = detail::dataset_payload_bytes(h);
  if (payload.size() < expected) throw TruncatedError(what + ": payload shorter than the header implies");
  if (payload.size() > expected) throw FormatError(what + ": trailing bytes after payload");
  verify_checksum(bytes, payload, what);

  ds.sessions.resize(h.sessions);
  for (SessionMeta& m : ds.sessions) {
    m.session = r.get<std::uint32_t>();
    m.response_accuracy = r.get<double>();
    m.consistency = r.get<double>();
    m.activation_fraction = r.get<double>();
  }
  ds.samples.resize(static_cast<std::size_t>(h.sessions) * h.samples_per_session);
  for (Sample& s : ds.samples) {
    s.session = r.get<std::uint32_t>();
    const auto flags = r.get<std::uint8_t>();
    s.response_correct = (flags & 1u) != 0;
    s.split = (flags & 2u) != 0 ? Split::Test : Split::Train;
    s.fmri.resize(h.fmri_dim);
    s.embedding.resize(h.embed_dim);
    r.doubles(s.fmri);
    r.doubles(s.embedding);
  }
  return ds;
}

inline void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  write_file_bytes(path, encode_dataset(ds));
}

inline Dataset read_dataset(const std::filesystem::path& path, const DatasetExpectation& expect = {}) {
  return decode_dataset(read_file_bytes(path), expect);
}

}  // namespace debias_cl
