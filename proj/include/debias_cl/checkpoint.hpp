#pragma once

#include <filesystem>
#include <string>

#include "debias_cl/binary_io.hpp"
#include "debias_cl/encoder.hpp"

namespace debias_cl {

// Encoder checkpoint (little-endian):
//   "BRNC" u16 version=1
//   config: n u32, hidden u32, taps u32, d u32, activation u8, init_seed u64
//   step u32
//   per layer in forward order: weight (row-major) then bias, all f64
//   CRC32 u32 over everything between the version and the checksum
inline constexpr std::string_view kCheckpointMagic = "BRNC";
inline constexpr std::uint16_t kCheckpointVersion = 1;

struct Checkpoint {
  EncoderParams params;
  std::uint32_t step = 0;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline std::vector<std::uint8_t> encode_checkpoint(const EncoderParams& params, std::uint32_t step) {
  const EncoderConfig& c = params.config();
  ByteWriter w;
  w.put(static_cast<std::uint32_t>(c.input_dim));
  w.put(static_cast<std::uint32_t>(c.hidden_dim));
  w.put(static_cast<std::uint32_t>(c.tap_count));
  w.put(static_cast<std::uint32_t>(c.output_dim));
  w.put(static_cast<std::uint8_t>(c.activation));
  w.put(c.init_seed);
  w.put(step);
  for (const Tensor* t : params.parameters()) w.doubles(t->data());
  return frame(kCheckpointMagic, kCheckpointVersion, w);
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  const std::string what = "checkpoint";
  std::span<const std::uint8_t> payload = unframe(bytes, kCheckpointMagic, kCheckpointVersion, what);
  ByteReader r(payload, what);
  EncoderConfig c;
  c.input_dim = r.get<std::uint32_t>();
  c.hidden_dim = r.get<std::uint32_t>();
  c.tap_count = r.get<std::uint32_t>();
  c.output_dim = r.get<std::uint32_t>();
  const auto act = r.get<std::uint8_t>();
  if (act > 1) throw FormatError(what + ": unknown activation code " + std::to_string(act));
  c.activation = static_cast<Activation>(act);
  c.init_seed = r.get<std::uint64_t>();
  const auto step = r.get<std::uint32_t>();
  try {
    c.validate();
  } catch (const ConfigError& e) {
    throw FormatError(what + ": " + e.what());
  }

  const std::size_t expected = r.position() + c.parameter_count() * sizeof(double);
  if (payload.size() < expected) throw TruncatedError(what + ": payload shorter than the config implies");
  if (payload.size() > expected) throw FormatError(what + ": trailing bytes after parameters");
  verify_checksum(bytes, payload, what);

  EncoderParams params = init_encoder(c);
  for (Tensor* t : params.parameters()) r.doubles(t->data());
  return Checkpoint{std::move(params), step};
}

inline void write_checkpoint(const EncoderParams& params, std::uint32_t step, const std::filesystem::path& path) {
  write_file_bytes(path, encode_checkpoint(params, step));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace debias_cl
