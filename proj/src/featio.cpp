#include "acp/featio.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include "acp/error.hpp"

namespace acp {
namespace {

constexpr std::uint8_t kMagic[4] = {'A', 'C', 'P', 'F'};

class ByteWriter {
 public:
  explicit ByteWriter(std::vector<std::uint8_t>& out) : out_(out) {}

  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put_le(v, 2); }
  void u32(std::uint32_t v) { put_le(v, 4); }
  void f32(float v) { put_le(std::bit_cast<std::uint32_t>(v), 4); }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t>& out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

  std::size_t remaining() const noexcept { return in_.size() - pos_; }

  std::uint8_t u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get_le(4)); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw Error(ErrorKind::Truncated, "ACPF data ends at byte " + std::to_string(in_.size()) + ", needed " +
                                            std::to_string(n) + " more at offset " + std::to_string(pos_));
    }
  }
  std::uint64_t get_le(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{in_[pos_ + i]} << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

void validate_dump(const FeatureDump& d) {
  const DumpShape& s = d.shape;
  if (s.samples == 0 || s.channels == 0 || s.height == 0 || s.width == 0) {
    throw Error(ErrorKind::Data, "dump '" + d.layer_name + "' has a zero dimension");
  }
  if (d.layer_name.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorKind::Data, "dump layer name longer than 65535 bytes");
  }
  if (d.data.size() != s.element_count()) {
    throw Error(ErrorKind::Data, "dump '" + d.layer_name + "' holds " + std::to_string(d.data.size()) +
                                     " values, shape needs " + std::to_string(s.element_count()));
  }
  for (float v : d.data) {
    if (!std::isfinite(v)) throw Error(ErrorKind::Data, "dump '" + d.layer_name + "' contains a non-finite value");
  }
}

std::vector<std::uint8_t> encode_dumps(std::span<const FeatureDump> dumps) {
  std::vector<std::uint8_t> out;
  ByteWriter w(out);
  w.bytes(kMagic, sizeof kMagic);
  w.u8(kAcpfVersion);
  w.u32(static_cast<std::uint32_t>(dumps.size()));
  for (const FeatureDump& d : dumps) {
    validate_dump(d);
    w.u16(static_cast<std::uint16_t>(d.layer_name.size()));
    w.bytes(d.layer_name.data(), d.layer_name.size());
    w.u32(d.shape.samples);
    w.u32(d.shape.channels);
    w.u32(d.shape.height);
    w.u32(d.shape.width);
    for (float v : d.data) w.f32(v);
  }
  return out;
}

std::vector<FeatureDump> decode_dumps(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (bytes.size() < sizeof kMagic || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw Error(ErrorKind::Format, "not an ACPF file (bad magic)");
  }
  r.bytes(sizeof kMagic);
  const std::uint8_t version = r.u8();
  if (version != kAcpfVersion) {
    throw Error(ErrorKind::Format, "unsupported ACPF version " + std::to_string(version));
  }
  const std::uint32_t layer_count = r.u32();

  std::vector<FeatureDump> dumps;
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    FeatureDump d;
    const std::uint16_t name_len = r.u16();
    const auto name = r.bytes(name_len);
    d.layer_name.assign(name.begin(), name.end());
    d.shape.samples = r.u32();
    d.shape.channels = r.u32();
    d.shape.height = r.u32();
    d.shape.width = r.u32();
    const DumpShape& s = d.shape;
    if (s.samples == 0 || s.channels == 0 || s.height == 0 || s.width == 0) {
      throw Error(ErrorKind::Format, "layer '" + d.layer_name + "' declares a zero dimension");
    }
    // Four u32 factors can overflow 64 bits; compare in long double first.
    const long double declared = static_cast<long double>(s.samples) * s.channels * s.height * s.width;
    if (declared * 4 > static_cast<long double>(r.remaining())) {
      throw Error(ErrorKind::Truncated, "layer '" + d.layer_name + "' declares " +
                                            std::to_string(static_cast<unsigned long long>(declared)) +
                                            " floats but only " + std::to_string(r.remaining()) + " bytes remain");
    }
    d.data.resize(s.element_count());
    for (float& v : d.data) {
      v = r.f32();
      if (!std::isfinite(v)) throw Error(ErrorKind::Data, "layer '" + d.layer_name + "' contains a non-finite value");
    }
    dumps.push_back(std::move(d));
  }
  if (r.remaining() != 0) {
    throw Error(ErrorKind::Format, std::to_string(r.remaining()) + " trailing bytes after the last layer");
  }
  return dumps;
}

void write_dump(const std::filesystem::path& path, std::span<const FeatureDump> dumps) {
  const std::vector<std::uint8_t> bytes = encode_dumps(dumps);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out.flush()) throw Error(ErrorKind::Io, "failed writing '" + path.string() + "'");
}

std::vector<FeatureDump> read_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open dump file '" + path.string() + "'");
  const std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (in.bad()) throw Error(ErrorKind::Io, "failed reading '" + path.string() + "'");
  return decode_dumps(bytes);
}

AveragedMaps average_samples(const FeatureDump& d) {
  AveragedMaps m;
  m.layer_name = d.layer_name;
  m.channel_count = d.shape.channels;
  m.map_size = static_cast<std::size_t>(d.shape.map_size());
  m.values.assign(m.channel_count * m.map_size, 0.0);
  const std::size_t per_sample = m.values.size();
  for (std::uint32_t s = 0; s < d.shape.samples; ++s) {
    const float* src = d.data.data() + s * per_sample;
    for (std::size_t i = 0; i < per_sample; ++i) m.values[i] += static_cast<double>(src[i]);
  }
  const double count = static_cast<double>(d.shape.samples);
  for (double& v : m.values) v /= count;
  return m;
}

}  // namespace acp
