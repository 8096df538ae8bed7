// Synthetic reverberant, noisy multichannel scenes with exact ground truth:
//   mixture = desired + late + noise
// where desired is the source convolved with the first early_ms of each
// impulse response and late with the remainder.
#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <vector>

#include "convbf/audio_io.hpp"
#include "convbf/error.hpp"

namespace convbf {

enum class NoiseColor { kWhite, kPink };

struct SceneSpec {
  int channels = 8;
  double t60 = 0.5;              // seconds
  double snr_db = 20.0;          // +inf disables noise
  double early_ms = 50.0;        // boundary between desired and late parts
  double duration_s = 4.0;       // total, including silent edges
  double head_silence_ms = 300.0;
  double tail_silence_ms = 300.0;
  double direct_spread_ms = 0.6;   // array diameter in travel time
  double reverb_ratio = 2.0;     // reverberant energy relative to direct, per second of T60
  NoiseColor noise = NoiseColor::kPink;
  int sample_rate = 16000;
  std::uint64_t seed = 1;

  void validate() const {
    if (channels < 1) throw UsageError("scene needs at least one channel");
    if (!(t60 > 0.0)) throw UsageError("T60 must be positive");
    if (!(early_ms > 0.0)) throw UsageError("early_ms must be positive");
    if (head_silence_ms < 225.0) throw UsageError("head silence must be at least 225 ms");
    if (tail_silence_ms < 75.0) throw UsageError("tail silence must be at least 75 ms");
    if (!(duration_s * 1000.0 > head_silence_ms + tail_silence_ms))
      throw UsageError("scene duration leaves no room for speech");
    if (sample_rate <= 0) throw UsageError("sample rate must be positive");
  }

  Eigen::Index samples() const {
    return static_cast<Eigen::Index>(std::lround(duration_s * sample_rate));
  }

  Eigen::Index early_samples() const {
    return static_cast<Eigen::Index>(std::lround(early_ms * sample_rate / 1000.0));
  }
};

struct RoomScene {
  AudioBuffer clean;   // 1 channel, zero in the silent edges
  Eigen::MatrixXd rirs;  // channels x rir length
  double t60 = 0.0;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  AudioBuffer mixture;
  AudioBuffer desired;
  AudioBuffer late;
  AudioBuffer noise;
};

namespace sim_detail {

// Decorrelated stream seeds derived from the scene seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Linear convolution of every row of `h` with `x`, truncated to x's length.
inline Eigen::MatrixXd convolve_rows(const Eigen::VectorXd& x, const Eigen::MatrixXd& h) {
  const Eigen::Index n = x.size();
  const Eigen::Index full = n + h.cols() - 1;
  int nfft = 1;
  while (nfft < full) nfft <<= 1;
  Eigen::FFT<double> fft;
  std::vector<double> xs(nfft, 0.0), hs(nfft, 0.0), y;
  std::vector<std::complex<double>> xf, hf;
  for (Eigen::Index i = 0; i < n; ++i) xs[i] = x(i);
  fft.fwd(xf, xs);
  Eigen::MatrixXd out(h.rows(), n);
  for (Eigen::Index m = 0; m < h.rows(); ++m) {
    std::fill(hs.begin(), hs.end(), 0.0);
    for (Eigen::Index k = 0; k < h.cols(); ++k) hs[k] = h(m, k);
    fft.fwd(hf, hs);
    for (std::size_t k = 0; k < hf.size(); ++k) hf[k] *= xf[k];
    fft.inv(y, hf);
    for (Eigen::Index i = 0; i < n; ++i) out(m, i) = y[i];
  }
  return out;
}

}  // namespace sim_detail

// Impulse responses for a uniform circular array whose diameter spans
// `direct_spread_ms` of acoustic travel time. Each channel gets a unit direct
// impulse whose delay follows a random source azimuth, then a dense tail of
// Gaussian reflections, one per sample. Reflections within the first
// `coherent_ms` share the direct-path arrival pattern, so the early image is
// the direct steering vector times a filtered source; later ones arrive from
// random directions and give the tail diffuse-field spatial coherence. Tail
// energy decays by 60 dB over t60 seconds and totals about reverb_ratio * t60.
inline Eigen::MatrixXd generate_rir(int channels, double t60, double direct_spread_ms,
                                    std::uint64_t seed, int sample_rate = 16000,
                                    double reverb_ratio = 2.0, double coherent_ms = 0.0) {
  if (!(t60 > 0.0)) throw UsageError("T60 must be positive");
  if (direct_spread_ms < 0.0) throw UsageError("direct delay spread must be non-negative");
  const double radius_samples = 0.5 * direct_spread_ms * sample_rate / 1000.0;
  const int lead = static_cast<int>(std::ceil(radius_samples)) + 1;
  const Eigen::Index length =
      static_cast<Eigen::Index>(std::ceil(1.25 * t60 * sample_rate)) + 2 * lead + 1;
  const double alpha = 3.0 * std::numbers::ln10 / (t60 * sample_rate);
  const double sigma0 = std::sqrt(reverb_ratio * t60 * (1.0 - std::exp(-2.0 * alpha)));

  std::mt19937_64 rng(sim_detail::stream_seed(seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  // Projection of microphone m onto an arrival direction, in samples.
  std::vector<double> mic_angle(channels);
  for (int m = 0; m < channels; ++m) mic_angle[m] = 2.0 * std::numbers::pi * m / channels;
  auto offsets = [&](double azimuth, double elevation_cos, std::vector<int>& out) {
    for (int m = 0; m < channels; ++m)
      out[m] = static_cast<int>(std::lround(-radius_samples * elevation_cos *
                                            std::cos(azimuth - mic_angle[m])));
  };

  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(channels, length);
  std::vector<int> direct(channels), shift(channels);
  offsets(2.0 * std::numbers::pi * uni(rng), 1.0, direct);
  for (int m = 0; m < channels; ++m) h(m, lead + direct[m]) = 1.0;

  const double coherent = coherent_ms * sample_rate / 1000.0;
  for (Eigen::Index n = 1; n + 2 * lead < length; ++n) {
    const double amp = sigma0 * std::exp(-alpha * static_cast<double>(n)) * gauss(rng);
    const double azimuth = 2.0 * std::numbers::pi * uni(rng);
    const double elevation_cos = std::sqrt(1.0 - std::pow(2.0 * uni(rng) - 1.0, 2));
    if (static_cast<double>(n) < coherent)
      shift = direct;
    else
      offsets(azimuth, elevation_cos, shift);
    for (int m = 0; m < channels; ++m) h(m, lead + n + shift[m]) += amp;
  }
  return h;
}

// Speech-like source: bursts of Gaussian noise with raised-cosine envelopes
// separated by short gaps. Voiced bursts pass through three formant
// resonators; about a third of the bursts are fricative-like, shaped by a
// single high-frequency resonance.
inline AudioBuffer generate_source(Eigen::Index length, std::uint64_t seed,
                                   int sample_rate = 16000) {
  std::mt19937_64 rng(sim_detail::stream_seed(seed, 2));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Eigen::VectorXd s = Eigen::VectorXd::Zero(length);

  struct Resonator {
    double a1 = 0, a2 = 0, g = 0, y1 = 0, y2 = 0;
    Resonator(double hz, double radius, int rate) {
      a1 = 2.0 * radius * std::cos(2.0 * std::numbers::pi * hz / rate);
      a2 = -radius * radius;
      g = 1.0 - radius;
    }
    double step(double x) {
      const double y = x + a1 * y1 + a2 * y2;
      y2 = y1;
      y1 = y;
      return g * y;
    }
  };
  const double nyquist = sample_rate / 2.0;

  Eigen::Index pos = 0;
  while (pos < length) {
    const auto burst = static_cast<Eigen::Index>((0.08 + 0.22 * uni(rng)) * sample_rate);
    const auto gap = static_cast<Eigen::Index>((0.03 + 0.17 * uni(rng)) * sample_rate);
    const bool fricative = uni(rng) < 0.35;
    const double gain = std::exp(0.5 * gauss(rng));
    Resonator f1(300.0 + 600.0 * uni(rng), 0.94 + 0.04 * uni(rng), sample_rate);
    Resonator f2(900.0 + 1500.0 * uni(rng), 0.92 + 0.05 * uni(rng), sample_rate);
    Resonator f3(std::min(2200.0 + 1200.0 * uni(rng), 0.9 * nyquist), 0.90 + 0.05 * uni(rng),
                 sample_rate);
    Resonator fr(std::min((0.35 + 0.5 * uni(rng)) * nyquist, 0.95 * nyquist), 0.75, sample_rate);
    double tilt = 0.0, prev = 0.0;
    for (Eigen::Index k = 0; k < burst && pos + k < length; ++k) {
      const double e = gauss(rng);
      double y;
      if (fricative) {
        y = 0.6 * fr.step(e - prev);
        prev = e;
      } else {
        y = f1.step(e) + 0.7 * f2.step(e) + 0.5 * f3.step(e) + 0.04 * e;
        tilt = 0.5 * tilt + y;
        y = tilt;
      }
      const double env = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (k + 0.5) / burst);
      s(pos + k) = gain * env * y;
    }
    pos += burst + gap;
  }
  const double rms = std::sqrt(s.squaredNorm() / static_cast<double>(std::max<Eigen::Index>(length, 1)));
  if (rms > 0.0) s *= 0.05 / rms;
  return AudioBuffer(s.transpose(), sample_rate);
}

inline Eigen::MatrixXd generate_noise(int channels, Eigen::Index length, NoiseColor color,
                                      std::uint64_t seed) {
  std::mt19937_64 rng(sim_detail::stream_seed(seed, 3));
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd n(channels, length);
  for (int m = 0; m < channels; ++m) {
    double b0 = 0, b1 = 0, b2 = 0;
    for (Eigen::Index i = 0; i < length; ++i) {
      const double w = gauss(rng);
      if (color == NoiseColor::kWhite) {
        n(m, i) = w;
      } else {
        // Three-pole approximation of a 1/f spectrum.
        b0 = 0.99765 * b0 + w * 0.0990460;
        b1 = 0.96300 * b1 + w * 0.2965164;
        b2 = 0.57000 * b2 + w * 1.0526913;
        n(m, i) = b0 + b1 + b2 + w * 0.1848;
      }
    }
  }
  return n;
}

inline RoomScene mix_scene(const SceneSpec& spec, const AudioBuffer& clean) {
  spec.validate();
  const Eigen::Index n = spec.samples();
  if (clean.channels() != 1 || clean.length() < n)
    throw SizeError("clean source must be a single channel of at least " + std::to_string(n) +
                    " samples");
  if (clean.sample_rate != spec.sample_rate) throw SizeError("clean source sample rate mismatch");

  Eigen::VectorXd s = clean.samples.row(0).head(n).transpose();
  const auto head = static_cast<Eigen::Index>(std::lround(spec.head_silence_ms * spec.sample_rate / 1000.0));
  const auto tail = static_cast<Eigen::Index>(std::lround(spec.tail_silence_ms * spec.sample_rate / 1000.0));
  s.head(std::min(head, n)).setZero();
  s.tail(std::min(tail, n)).setZero();

  RoomScene scene;
  scene.t60 = spec.t60;
  scene.snr_db = spec.snr_db;
  scene.seed = spec.seed;
  scene.clean = AudioBuffer(s.transpose(), spec.sample_rate);
  scene.rirs = generate_rir(spec.channels, spec.t60, spec.direct_spread_ms, spec.seed,
                            spec.sample_rate, spec.reverb_ratio, spec.early_ms);

  const Eigen::Index early = std::min<Eigen::Index>(scene.rirs.cols(), spec.early_samples());
  Eigen::MatrixXd early_part = Eigen::MatrixXd::Zero(spec.channels, scene.rirs.cols());
  Eigen::MatrixXd late_part = Eigen::MatrixXd::Zero(spec.channels, scene.rirs.cols());
  early_part.leftCols(early) = scene.rirs.leftCols(early);
  late_part.rightCols(scene.rirs.cols() - early) = scene.rirs.rightCols(scene.rirs.cols() - early);

  Eigen::MatrixXd desired = sim_detail::convolve_rows(s, early_part);
  Eigen::MatrixXd late = early < scene.rirs.cols() ? sim_detail::convolve_rows(s, late_part)
                                                   : Eigen::MatrixXd::Zero(spec.channels, n);
  // The FFT leaves ~1e-17 residue in exactly-silent regions; keep silence exact.
  const Eigen::Index first = std::min(head, n);
  desired.leftCols(first).setZero();
  late.leftCols(first).setZero();

  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(spec.channels, n);
  if (std::isfinite(spec.snr_db)) {
    noise = generate_noise(spec.channels, n, spec.noise, spec.seed);
    const double speech_energy = (desired + late).squaredNorm();
    const double noise_energy = noise.squaredNorm();
    const double target = speech_energy / std::pow(10.0, spec.snr_db / 10.0);
    noise *= std::sqrt(target / noise_energy);
  }

  scene.desired = AudioBuffer(desired, spec.sample_rate);
  scene.late = AudioBuffer(late, spec.sample_rate);
  scene.noise = AudioBuffer(noise, spec.sample_rate);
  scene.mixture = AudioBuffer((desired + late) + noise, spec.sample_rate);
  return scene;
}

inline RoomScene make_scene(const SceneSpec& spec) {
  return mix_scene(spec, generate_source(spec.samples(), spec.seed, spec.sample_rate));
}

// 10 log10(sum (d+l)^2 / sum n^2) over all channels.
inline double measured_snr_db(const RoomScene& scene) {
  return 10.0 * std::log10((scene.desired.samples + scene.late.samples).squaredNorm() /
                           scene.noise.samples.squaredNorm());
}

// Energy of h before `split` relative to the energy from `split` on, in dB.
// With split at the early boundary this is the ground-truth
// desired-to-late ratio of an impulse response.
inline double energy_ratio_db(const Eigen::VectorXd& h, Eigen::Index split) {
  split = std::clamp<Eigen::Index>(split, 0, h.size());
  const double head = h.head(split).squaredNorm();
  const double tail = h.tail(h.size() - split).squaredNorm();
  if (!(tail > 0.0)) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(head / tail);
}

}  // namespace convbf
