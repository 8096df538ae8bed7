// Short-time Fourier analysis and weighted overlap-add synthesis.
//
// Frame t of a spectrogram covers signal samples
//   [t * hop - offset, t * hop - offset + frame_len)
// where `offset` is the number of zeros prepended before analysis (zero for
// analyze(), frame_len - hop for analyze_padded()).
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "convbf/audio_io.hpp"
#include "convbf/error.hpp"

namespace convbf {

using cdouble = std::complex<double>;

enum class WindowType { kHann };

struct StftConfig {
  int frame_len = 512;
  int hop = 128;
  WindowType window = WindowType::kHann;
  int sample_rate = 16000;

  int fft_size() const { return frame_len; }
  int num_bins() const { return frame_len / 2 + 1; }

  double bin_frequency(int f) const {
    return static_cast<double>(f) * sample_rate / fft_size();
  }

  static StftConfig from_durations(int sample_rate, double frame_ms, double hop_ms) {
    StftConfig cfg;
    cfg.sample_rate = sample_rate;
    cfg.frame_len = static_cast<int>(std::lround(frame_ms * sample_rate / 1000.0));
    cfg.hop = static_cast<int>(std::lround(hop_ms * sample_rate / 1000.0));
    cfg.validate();
    return cfg;
  }

  // Hann WOLA reconstruction needs an integer overlap factor of at least 3.
  void validate() const {
    if (frame_len < 4 || frame_len % 2 != 0)
      throw UsageError("STFT frame length must be even and >= 4");
    if (hop < 1 || frame_len % hop != 0 || frame_len / hop < 3)
      throw UsageError("STFT hop must divide the frame length with overlap factor >= 3");
    if (sample_rate <= 0) throw UsageError("STFT sample rate must be positive");
  }
};

// Periodic Hann window.
inline Eigen::VectorXd analysis_window(const StftConfig& cfg) {
  Eigen::VectorXd w(cfg.frame_len);
  for (int n = 0; n < cfg.frame_len; ++n)
    w(n) = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / cfg.frame_len);
  return w;
}

class MultichannelSpectrogram {
 public:
  using BinMap = Eigen::Map<Eigen::MatrixXcd>;
  using ConstBinMap = Eigen::Map<const Eigen::MatrixXcd>;

  MultichannelSpectrogram() = default;
  MultichannelSpectrogram(int channels, int frames, const StftConfig& cfg,
                          int offset = 0, Eigen::Index signal_length = 0)
      : channels_(channels),
        frames_(frames),
        bins_(cfg.num_bins()),
        config_(cfg),
        offset_(offset),
        signal_length_(signal_length),
        coeffs_(static_cast<std::size_t>(channels) * frames * cfg.num_bins(), cdouble(0.0)) {}

  int channels() const { return channels_; }
  int frames() const { return frames_; }
  int bins() const { return bins_; }
  const StftConfig& config() const { return config_; }
  int offset() const { return offset_; }
  Eigen::Index signal_length() const { return signal_length_; }

  cdouble& operator()(int m, int t, int f) { return coeffs_[index(m, t, f)]; }
  const cdouble& operator()(int m, int t, int f) const { return coeffs_[index(m, t, f)]; }

  // Channels x frames view of one frequency bin; column t is x_t.
  BinMap bin(int f) { return BinMap(coeffs_.data() + block(f), channels_, frames_); }
  ConstBinMap bin(int f) const {
    return ConstBinMap(coeffs_.data() + block(f), channels_, frames_);
  }

  // First sample (signal coordinates, may be negative) covered by frame t.
  Eigen::Index frame_start(int t) const {
    return static_cast<Eigen::Index>(t) * config_.hop - offset_;
  }

  bool all_finite() const {
    for (const auto& c : coeffs_)
      if (!std::isfinite(c.real()) || !std::isfinite(c.imag())) return false;
    return true;
  }

  // Same geometry, new data.
  MultichannelSpectrogram with_channels(int channels) const {
    return MultichannelSpectrogram(channels, frames_, config_, offset_, signal_length_);
  }

  MultichannelSpectrogram& operator*=(cdouble c) {
    for (auto& x : coeffs_) x *= c;
    return *this;
  }

 private:
  std::size_t block(int f) const { return static_cast<std::size_t>(f) * frames_ * channels_; }
  std::size_t index(int m, int t, int f) const {
    return block(f) + static_cast<std::size_t>(t) * channels_ + m;
  }

  int channels_ = 0;
  int frames_ = 0;
  int bins_ = 0;
  StftConfig config_;
  int offset_ = 0;
  Eigen::Index signal_length_ = 0;
  std::vector<cdouble> coeffs_;
};

namespace detail {

inline MultichannelSpectrogram analyze_with_padding(const AudioBuffer& buf, const StftConfig& cfg,
                                                    Eigen::Index lead, Eigen::Index trail) {
  cfg.validate();
  if (buf.sample_rate != cfg.sample_rate)
    throw SizeError("sample rate " + std::to_string(buf.sample_rate) +
                    " does not match STFT configuration " + std::to_string(cfg.sample_rate));
  const Eigen::Index n = buf.length();
  const Eigen::Index padded = lead + n + trail;
  if (buf.channels() < 1 || padded < cfg.frame_len)
    throw SizeError("signal of " + std::to_string(n) + " samples is shorter than one frame");
  const int frames = static_cast<int>(1 + (padded - cfg.frame_len) / cfg.hop);
  const int channels = static_cast<int>(buf.channels());

  MultichannelSpectrogram spec(channels, frames, cfg, static_cast<int>(lead), n);
  const Eigen::VectorXd window = analysis_window(cfg);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.frame_len);
  std::vector<cdouble> out;
  for (int m = 0; m < channels; ++m) {
    for (int t = 0; t < frames; ++t) {
      const Eigen::Index start = spec.frame_start(t);
      for (int k = 0; k < cfg.frame_len; ++k) {
        const Eigen::Index s = start + k;
        frame[k] = (s >= 0 && s < n) ? buf.samples(m, s) * window(k) : 0.0;
      }
      fft.fwd(out, frame);
      for (int f = 0; f < spec.bins(); ++f) spec(m, t, f) = out[f];
    }
  }
  return spec;
}

}  // namespace detail

// Frames cover [t*hop, t*hop + frame_len) with no padding, so
// T = 1 + floor((N - frame_len) / hop).
inline MultichannelSpectrogram analyze(const AudioBuffer& buf, const StftConfig& cfg) {
  return detail::analyze_with_padding(buf, cfg, 0, 0);
}

// Zero-pads frame_len - hop samples at the start and at least as many at the
// end so every input sample lies in the fully overlapped region.
inline MultichannelSpectrogram analyze_padded(const AudioBuffer& buf, const StftConfig& cfg) {
  cfg.validate();
  const Eigen::Index pad = cfg.frame_len - cfg.hop;
  const Eigen::Index core = pad + buf.length() + pad - cfg.frame_len;
  const Eigen::Index extra = core < 0 ? -core : (cfg.hop - core % cfg.hop) % cfg.hop;
  return detail::analyze_with_padding(buf, cfg, pad, pad + extra);
}

// Weighted overlap-add with the analysis window, normalized by the
// overlapped sum of squared windows. Returns signal_length() samples (or the
// natural frame extent when the spectrogram carries no length).
inline AudioBuffer synthesize(const MultichannelSpectrogram& spec) {
  const StftConfig& cfg = spec.config();
  const Eigen::Index natural =
      static_cast<Eigen::Index>(spec.frames() - 1) * cfg.hop + cfg.frame_len - spec.offset();
  const Eigen::Index n = spec.signal_length() > 0 ? spec.signal_length() : natural;
  const Eigen::VectorXd window = analysis_window(cfg);

  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(spec.channels(), n);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(n);
  for (int t = 0; t < spec.frames(); ++t) {
    const Eigen::Index start = spec.frame_start(t);
    for (int k = 0; k < cfg.frame_len; ++k) {
      const Eigen::Index s = start + k;
      if (s >= 0 && s < n) norm(s) += window(k) * window(k);
    }
  }

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<cdouble> half(spec.bins());
  std::vector<double> frame;
  for (int m = 0; m < spec.channels(); ++m) {
    for (int t = 0; t < spec.frames(); ++t) {
      for (int f = 0; f < spec.bins(); ++f) half[f] = spec(m, t, f);
      fft.inv(frame, half, cfg.frame_len);
      const Eigen::Index start = spec.frame_start(t);
      for (int k = 0; k < cfg.frame_len; ++k) {
        const Eigen::Index s = start + k;
        if (s >= 0 && s < n) acc(m, s) += frame[k] * window(k);
      }
    }
  }
  for (Eigen::Index s = 0; s < n; ++s) {
    if (norm(s) > 1e-12)
      acc.col(s) /= norm(s);
    else
      acc.col(s).setZero();
  }
  return AudioBuffer(std::move(acc), cfg.sample_rate);
}

// Single-channel spectrogram (frames x bins) to a 1-channel spectrogram with
// the geometry of `like`.
inline MultichannelSpectrogram single_channel(const Eigen::MatrixXcd& frames_by_bins,
                                              const MultichannelSpectrogram& like) {
  MultichannelSpectrogram out = like.with_channels(1);
  for (int f = 0; f < out.bins(); ++f)
    for (int t = 0; t < out.frames(); ++t) out(0, t, f) = frames_by_bins(t, f);
  return out;
}

}  // namespace convbf
