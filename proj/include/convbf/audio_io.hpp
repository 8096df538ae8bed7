// RIFF/WAVE reading and writing for multichannel buffers.
//
// Reading accepts PCM16, PCM24, PCM32 and IEEE float32 (plain or
// WAVE_FORMAT_EXTENSIBLE). Writing produces PCM16 or float32. Samples are
// held internally as doubles, channel-major.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "convbf/error.hpp"

namespace convbf {

struct AudioBuffer {
  Eigen::MatrixXd samples;  // channels x length
  int sample_rate = 16000;

  AudioBuffer() = default;
  AudioBuffer(Eigen::MatrixXd s, int rate) : samples(std::move(s)), sample_rate(rate) {}

  Eigen::Index channels() const { return samples.rows(); }
  Eigen::Index length() const { return samples.cols(); }

  // Throws SizeError unless M >= 1, N >= 1 and every sample is finite.
  void validate() const {
    if (samples.rows() < 1 || samples.cols() < 1)
      throw SizeError("audio buffer must have at least one channel and one sample");
    if (!samples.allFinite()) throw FormatError("audio buffer contains non-finite samples");
    if (sample_rate <= 0) throw FormatError("audio buffer sample rate must be positive");
  }

  AudioBuffer channel(Eigen::Index m) const {
    return AudioBuffer(samples.row(m), sample_rate);
  }
};

enum class WavEncoding { kInt16, kFloat32 };

namespace detail {

inline std::uint32_t read_le(const unsigned char* p, int bytes) {
  std::uint32_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

inline void put_le(std::vector<unsigned char>& out, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xffu));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

}  // namespace detail

inline AudioBuffer read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on '" + path + "'");

  using detail::read_le;
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw FormatError("'" + path + "' is not a RIFF/WAVE file (truncated or bad header)");

  std::uint16_t format = 0, channels = 0, bits = 0, block_align = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = read_le(chunk + 4, 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size())
        throw FormatError("'" + path + "': truncated fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = static_cast<std::uint16_t>(read_le(f, 2));
      channels = static_cast<std::uint16_t>(read_le(f + 2, 2));
      rate = read_le(f + 4, 4);
      block_align = static_cast<std::uint16_t>(read_le(f + 12, 2));
      bits = static_cast<std::uint16_t>(read_le(f + 14, 2));
      if (format == detail::kFormatExtensible) {
        if (size < 40) throw FormatError("'" + path + "': truncated extensible fmt chunk");
        format = static_cast<std::uint16_t>(read_le(f + 24, 2));
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + size > bytes.size())
        throw FormatError("'" + path + "': data chunk is truncated");
      data = bytes.data() + body;
      data_size = size;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) throw FormatError("'" + path + "': missing fmt chunk");
  if (data == nullptr) throw FormatError("'" + path + "': missing data chunk");

  const bool pcm = format == detail::kFormatPcm && (bits == 16 || bits == 24 || bits == 32);
  const bool flt = format == detail::kFormatFloat && bits == 32;
  if (!pcm && !flt)
    throw FormatError("'" + path + "': unsupported encoding (format tag " +
                      std::to_string(format) + ", " + std::to_string(bits) + " bits)");
  const int width = bits / 8;
  if (channels == 0 || block_align != channels * width)
    throw FormatError("'" + path + "': inconsistent channel count or block alignment");

  const std::size_t frames = data_size / block_align;
  if (frames == 0) throw FormatError("'" + path + "': no sample frames");
  Eigen::MatrixXd samples(channels, static_cast<Eigen::Index>(frames));
  for (std::size_t n = 0; n < frames; ++n) {
    for (int m = 0; m < channels; ++m) {
      const unsigned char* p = data + n * block_align + static_cast<std::size_t>(m) * width;
      double value = 0.0;
      if (flt) {
        const std::uint32_t raw = read_le(p, 4);
        float f;
        std::memcpy(&f, &raw, sizeof f);
        value = f;
      } else if (bits == 16) {
        value = static_cast<std::int16_t>(read_le(p, 2)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t v = static_cast<std::int32_t>(read_le(p, 3) << 8) >> 8;
        value = v / 8388608.0;
      } else {
        value = static_cast<std::int32_t>(read_le(p, 4)) / 2147483648.0;
      }
      samples(m, static_cast<Eigen::Index>(n)) = value;
    }
  }
  AudioBuffer out(std::move(samples), static_cast<int>(rate));
  out.validate();
  return out;
}

// Writes `buf`; samples outside [-1, 1] are hard-clipped. Returns the number
// of clipped samples.
inline std::size_t write_wav(const std::string& path, const AudioBuffer& buf,
                             WavEncoding encoding = WavEncoding::kFloat32) {
  buf.validate();
  using detail::put_le;
  const int channels = static_cast<int>(buf.channels());
  const int width = encoding == WavEncoding::kInt16 ? 2 : 4;
  const std::uint32_t data_size =
      static_cast<std::uint32_t>(buf.length() * channels * width);

  std::vector<unsigned char> out;
  out.reserve(44 + data_size);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put_le(out, 36 + data_size, 4);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put_le(out, 16, 4);
  put_le(out, encoding == WavEncoding::kInt16 ? detail::kFormatPcm : detail::kFormatFloat, 2);
  put_le(out, static_cast<std::uint32_t>(channels), 2);
  put_le(out, static_cast<std::uint32_t>(buf.sample_rate), 4);
  put_le(out, static_cast<std::uint32_t>(buf.sample_rate * channels * width), 4);
  put_le(out, static_cast<std::uint32_t>(channels * width), 2);
  put_le(out, static_cast<std::uint32_t>(width * 8), 2);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put_le(out, data_size, 4);

  std::size_t clipped = 0;
  for (Eigen::Index n = 0; n < buf.length(); ++n) {
    for (int m = 0; m < channels; ++m) {
      double x = buf.samples(m, n);
      if (x > 1.0 || x < -1.0) {
        ++clipped;
        x = std::clamp(x, -1.0, 1.0);
      }
      if (encoding == WavEncoding::kInt16) {
        const long q = std::clamp(std::lround(x * 32768.0), -32768L, 32767L);
        put_le(out, static_cast<std::uint32_t>(static_cast<std::int16_t>(q)) & 0xffffu, 2);
      } else {
        const float f = static_cast<float>(x);
        std::uint32_t raw;
        std::memcpy(&raw, &f, sizeof raw);
        put_le(out, raw, 4);
      }
    }
  }

  std::ofstream file(path, std::ios::binary | std::ios::trunc);
  if (!file) throw IoError("cannot open '" + path + "' for writing");
  file.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!file) throw IoError("write failure on '" + path + "'");
  return clipped;
}

}  // namespace convbf
