#pragma once

// ACPF feature-map dumps.
//
// Layout (all integers little-endian):
//   "ACPF"  version:u8=1  layer_count:u32
//   per layer: name_len:u16  name:utf8  s:u32 c:u32 H:u32 W:u32
//              payload: s*c*H*W float32, row-major (s, c, H, W)

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace acp {

inline constexpr std::uint8_t kAcpfVersion = 1;

struct DumpShape {
  std::uint32_t samples = 1;
  std::uint32_t channels = 1;
  std::uint32_t height = 1;
  std::uint32_t width = 1;

  std::uint64_t map_size() const noexcept { return std::uint64_t{height} * width; }
  std::uint64_t element_count() const noexcept { return std::uint64_t{samples} * channels * map_size(); }
  friend bool operator==(const DumpShape&, const DumpShape&) = default;
};

struct FeatureDump {
  std::string layer_name;
  DumpShape shape;
  std::vector<float> data;

  float at(std::uint32_t s, std::uint32_t c, std::uint32_t h, std::uint32_t w) const {
    return data[((std::uint64_t{s} * shape.channels + c) * shape.height + h) * shape.width + w];
  }
  friend bool operator==(const FeatureDump&, const FeatureDump&) = default;
};

/// Per-channel mean maps, flattened row-major, stored contiguously.
struct AveragedMaps {
  std::string layer_name;
  std::size_t channel_count = 0;
  std::size_t map_size = 0;
  std::vector<double> values;

  std::span<const double> channel(std::size_t i) const {
    return std::span<const double>(values).subspan(i * map_size, map_size);
  }
};

/// Throws Data if any dump breaks the FeatureDump invariants.
void validate_dump(const FeatureDump& d);

std::vector<std::uint8_t> encode_dumps(std::span<const FeatureDump> dumps);
std::vector<FeatureDump> decode_dumps(std::span<const std::uint8_t> bytes);

/// Throws Io on write failure.
void write_dump(const std::filesystem::path& path, std::span<const FeatureDump> dumps);

/// Throws Io, Format (bad magic/version/header), Truncated, Data (non-finite).
std::vector<FeatureDump> read_dump(const std::filesystem::path& path);

/// Mean over the sample axis, accumulated in double.
AveragedMaps average_samples(const FeatureDump& d);

}  // namespace acp
