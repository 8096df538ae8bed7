// Intrusive objective measures: LPC cepstral distance and frequency-weighted
// segmental SNR. Both use 32 ms frames with a 16 ms shift and average over
// speech-active frames, i.e. frames whose reference energy is within 40 dB
// of the loudest reference frame.
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "convbf/audio_io.hpp"
#include "convbf/error.hpp"

namespace convbf {

struct MetricReport {
  double cd = 0.0;      // dB
  double fwssnr = 0.0;  // dB
};

inline constexpr int kLpcOrder = 12;
inline constexpr int kMelBands = 25;
inline constexpr double kCdClampMax = 10.0;
inline constexpr double kSnrFloorDb = -10.0;
inline constexpr double kSnrCeilDb = 35.0;
inline constexpr double kActiveRangeDb = 40.0;
inline constexpr double kBandWeightExponent = 0.2;

namespace metric_detail {

struct Framing {
  int frame_len;
  int hop;
  int frames;
};

inline Framing framing(const AudioBuffer& ref, const AudioBuffer& test) {
  if (ref.channels() != 1 || test.channels() != 1)
    throw SizeError("metrics expect single-channel signals");
  if (ref.length() != test.length())
    throw SizeError("reference and test lengths differ (" + std::to_string(ref.length()) + " vs " +
                    std::to_string(test.length()) + ")");
  if (ref.sample_rate != test.sample_rate) throw SizeError("reference and test sample rates differ");
  Framing fr;
  fr.frame_len = static_cast<int>(std::lround(0.032 * ref.sample_rate));
  fr.hop = static_cast<int>(std::lround(0.016 * ref.sample_rate));
  if (ref.length() < fr.frame_len) throw SizeError("signal shorter than one metric frame");
  fr.frames = static_cast<int>(1 + (ref.length() - fr.frame_len) / fr.hop);
  return fr;
}

inline std::vector<double> hann(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / n);
  return w;
}

inline std::vector<double> frame_of(const AudioBuffer& x, const Framing& fr, int t,
                                    const std::vector<double>& window) {
  std::vector<double> out(fr.frame_len);
  const Eigen::Index start = static_cast<Eigen::Index>(t) * fr.hop;
  for (int k = 0; k < fr.frame_len; ++k) out[k] = x.samples(0, start + k) * window[k];
  return out;
}

inline std::vector<bool> active_frames(const AudioBuffer& ref, const Framing& fr) {
  std::vector<double> energy(fr.frames);
  for (int t = 0; t < fr.frames; ++t)
    energy[t] = ref.samples.row(0).segment(static_cast<Eigen::Index>(t) * fr.hop, fr.frame_len)
                    .squaredNorm();
  const double peak = *std::max_element(energy.begin(), energy.end());
  std::vector<bool> active(fr.frames, false);
  if (!(peak > 0.0)) return active;
  const double threshold = peak * std::pow(10.0, -kActiveRangeDb / 10.0);
  for (int t = 0; t < fr.frames; ++t) active[t] = energy[t] > 0.0 && energy[t] >= threshold;
  return active;
}

// LPC polynomial A(z) = 1 + sum a_k z^-k by Levinson-Durbin; all zeros when
// the frame has no energy.
inline std::array<double, kLpcOrder + 1> lpc(const std::vector<double>& frame) {
  std::array<double, kLpcOrder + 1> r{};
  for (int lag = 0; lag <= kLpcOrder; ++lag) {
    double s = 0.0;
    for (std::size_t n = lag; n < frame.size(); ++n) s += frame[n] * frame[n - lag];
    r[lag] = s;
  }
  std::array<double, kLpcOrder + 1> a{};
  a[0] = 1.0;
  if (!(r[0] > 0.0)) return a;
  double err = r[0];
  for (int i = 1; i <= kLpcOrder; ++i) {
    double acc = r[i];
    for (int j = 1; j < i; ++j) acc += a[j] * r[i - j];
    const double k = -acc / err;
    if (!(std::abs(k) < 1.0)) break;
    std::array<double, kLpcOrder + 1> prev = a;
    for (int j = 1; j < i; ++j) a[j] = prev[j] + k * prev[i - j];
    a[i] = k;
    err *= 1.0 - k * k;
    if (!(err > 0.0)) break;
  }
  return a;
}

// Cepstrum c_1..c_p of 1 / A(z) (gain term excluded).
inline std::array<double, kLpcOrder + 1> lpc_cepstrum(const std::array<double, kLpcOrder + 1>& a) {
  std::array<double, kLpcOrder + 1> c{};
  for (int n = 1; n <= kLpcOrder; ++n) {
    double s = -a[n];
    for (int k = 1; k < n; ++k) s -= (static_cast<double>(k) / n) * c[k] * a[n - k];
    c[n] = s;
  }
  return c;
}

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangular mel filters over the one-sided spectrum: bands x bins.
inline Eigen::MatrixXd mel_filterbank(int bands, int fft_size, int sample_rate) {
  const int bins = fft_size / 2 + 1;
  const double top = hz_to_mel(sample_rate / 2.0);
  std::vector<double> centers(bands + 2);
  for (int i = 0; i < bands + 2; ++i) centers[i] = mel_to_hz(top * i / (bands + 1));
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(bands, bins);
  for (int j = 0; j < bands; ++j) {
    const double lo = centers[j], mid = centers[j + 1], hi = centers[j + 2];
    for (int k = 0; k < bins; ++k) {
      const double hz = static_cast<double>(k) * sample_rate / fft_size;
      if (hz > lo && hz <= mid)
        h(j, k) = (hz - lo) / (mid - lo);
      else if (hz > mid && hz < hi)
        h(j, k) = (hi - hz) / (hi - mid);
    }
  }
  return h;
}

}  // namespace metric_detail

inline double cepstral_distance(const AudioBuffer& reference, const AudioBuffer& test) {
  using namespace metric_detail;
  const Framing fr = framing(reference, test);
  const std::vector<double> window = hann(fr.frame_len);
  const std::vector<bool> active = active_frames(reference, fr);
  const double scale = 10.0 / std::numbers::ln10;
  double total = 0.0;
  int count = 0;
  for (int t = 0; t < fr.frames; ++t) {
    if (!active[t]) continue;
    const auto cr = lpc_cepstrum(lpc(frame_of(reference, fr, t, window)));
    const auto ct = lpc_cepstrum(lpc(frame_of(test, fr, t, window)));
    double sq = 0.0;
    for (int n = 1; n <= kLpcOrder; ++n) sq += (cr[n] - ct[n]) * (cr[n] - ct[n]);
    total += std::clamp(scale * std::sqrt(2.0 * sq), 0.0, kCdClampMax);
    ++count;
  }
  return count > 0 ? total / count : 0.0;
}

// Per mel band: SNR = 10 log10(|S|^2 / |S - S^|^2) from complex spectra,
// clamped to [-10, 35] dB and weighted by the band magnitude to the 0.2.
inline double fwssnr(const AudioBuffer& reference, const AudioBuffer& test) {
  using namespace metric_detail;
  const Framing fr = framing(reference, test);
  const std::vector<double> window = hann(fr.frame_len);
  const std::vector<bool> active = active_frames(reference, fr);
  const Eigen::MatrixXd bank = mel_filterbank(kMelBands, fr.frame_len, reference.sample_rate);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> sr, st;
  Eigen::VectorXd ref_pow(bank.cols()), err_pow(bank.cols());

  double total = 0.0;
  int count = 0;
  for (int t = 0; t < fr.frames; ++t) {
    if (!active[t]) continue;
    fft.fwd(sr, frame_of(reference, fr, t, window));
    fft.fwd(st, frame_of(test, fr, t, window));
    for (Eigen::Index k = 0; k < bank.cols(); ++k) {
      ref_pow(k) = std::norm(sr[k]);
      err_pow(k) = std::norm(sr[k] - st[k]);
    }
    const Eigen::VectorXd s = bank * ref_pow;
    const Eigen::VectorXd e = bank * err_pow;
    double num = 0.0, den = 0.0;
    for (int j = 0; j < kMelBands; ++j) {
      double snr;
      if (!(s(j) > 0.0))
        snr = kSnrFloorDb;
      else if (!(e(j) > 0.0))
        snr = kSnrCeilDb;
      else
        snr = std::clamp(10.0 * std::log10(s(j) / e(j)), kSnrFloorDb, kSnrCeilDb);
      const double w = std::pow(std::sqrt(s(j)), kBandWeightExponent);
      num += w * snr;
      den += w;
    }
    if (den > 0.0) {
      total += num / den;
      ++count;
    }
  }
  return count > 0 ? total / count : 0.0;
}

inline MetricReport evaluate(const AudioBuffer& reference, const AudioBuffer& test) {
  return MetricReport{cepstral_distance(reference, test), fwssnr(reference, test)};
}

}  // namespace convbf
