// End-to-end enhancement: band-dependent filter orders, alternating
// estimation of the desired-signal power and steering vector by iterating
// WPE followed by MPDR, and the final filtering pass for each method.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "convbf/audio_io.hpp"
#include "convbf/beamform.hpp"
#include "convbf/error.hpp"
#include "convbf/estimation.hpp"
#include "convbf/numerics.hpp"
#include "convbf/parallel.hpp"
#include "convbf/stft.hpp"
#include "convbf/wpe.hpp"

namespace convbf {

enum class Method { kWpe, kMpdr, kCascade, kWpd };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kWpe: return "wpe";
    case Method::kMpdr: return "mpdr";
    case Method::kCascade: return "cascade";
    case Method::kWpd: return "wpd";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "wpe") return Method::kWpe;
  if (s == "mpdr") return Method::kMpdr;
  if (s == "cascade") return Method::kCascade;
  if (s == "wpd") return Method::kWpd;
  throw UsageError("unknown method '" + s + "' (expected wpe|mpdr|cascade|wpd)");
}

struct Band {
  double lo_hz = 0.0;
  double hi_hz = 0.0;
  int order = 0;
};

struct BandSchedule {
  std::vector<Band> bands;
  int delay = 4;

  void validate(double nyquist) const {
    if (bands.empty()) throw UsageError("band schedule is empty");
    if (delay < 1) throw UsageError("prediction delay must be >= 1");
    double edge = 0.0;
    for (const Band& b : bands) {
      if (b.lo_hz != edge || !(b.hi_hz > b.lo_hz))
        throw UsageError("band schedule must consist of contiguous increasing bands from 0 Hz");
      if (b.order < delay)
        throw UsageError("regression order L_w=" + std::to_string(b.order) +
                         " is smaller than the prediction delay b=" + std::to_string(delay));
      edge = b.hi_hz;
    }
    if (edge < nyquist) throw UsageError("band schedule does not reach the Nyquist frequency");
  }

  // Band containing `hz`; bands are half-open except the last.
  int order_at(double hz) const {
    for (const Band& b : bands)
      if (hz >= b.lo_hz && hz < b.hi_hz) return b.order;
    return bands.back().order;
  }

  std::string to_string() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < bands.size(); ++i)
      os << (i ? "," : "") << bands[i].hi_hz << ":" << bands[i].order;
    return os.str();
  }
};

// 0-0.8, 0.8-1.5, 1.5-3, 3-6 and 6-8 kHz with orders 12, 10, 8, 6, 6 and
// b = 4; edges scale with the Nyquist frequency for other rates.
inline BandSchedule default_schedule(int sample_rate) {
  const double s = sample_rate / 16000.0;
  BandSchedule sched;
  sched.delay = 4;
  sched.bands = {{0.0, 800.0 * s, 12},
                 {800.0 * s, 1500.0 * s, 10},
                 {1500.0 * s, 3000.0 * s, 8},
                 {3000.0 * s, 6000.0 * s, 6},
                 {6000.0 * s, 8000.0 * s, 6}};
  return sched;
}

// "hi:order,hi:order,..." with implicit 0 Hz lower edge.
inline BandSchedule parse_schedule(const std::string& text, int delay) {
  BandSchedule sched;
  sched.delay = delay;
  std::stringstream ss(text);
  std::string item;
  double lo = 0.0;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw UsageError("schedule entry '" + item + "' lacks ':'");
    Band b;
    try {
      b.hi_hz = std::stod(item.substr(0, colon));
      b.order = std::stoi(item.substr(colon + 1));
    } catch (const std::exception&) {
      throw UsageError("malformed schedule entry '" + item + "'");
    }
    b.lo_hz = lo;
    lo = b.hi_hz;
    sched.bands.push_back(b);
  }
  if (sched.bands.empty()) throw UsageError("empty schedule string");
  return sched;
}

inline std::vector<int> orders_for_bins(const BandSchedule& sched, const StftConfig& stft) {
  std::vector<int> out(stft.num_bins());
  for (int f = 0; f < stft.num_bins(); ++f) out[f] = sched.order_at(stft.bin_frequency(f));
  return out;
}

struct PipelineConfig {
  Method method = Method::kWpd;
  int iterations = 2;
  StftConfig stft = StftConfig::from_durations(16000, 32.0, 8.0);
  BandSchedule schedule = default_schedule(16000);
  int reference = 0;
  double head_ms = 225.0;
  double tail_ms = 75.0;
  double loading = kDefaultLoading;
  int jobs = 1;

  void validate() const {
    stft.validate();
    schedule.validate(stft.sample_rate / 2.0);
    if (iterations < 0) throw UsageError("iteration count must be non-negative");
    if (reference < 0) throw UsageError("reference channel must be non-negative");
    if (head_ms < 0 || tail_ms < 0) throw UsageError("noise-only durations must be non-negative");
    if (loading < 0) throw UsageError("diagonal loading must be non-negative");
    if (jobs < 1) throw UsageError("jobs must be >= 1");
  }
};

class PipelineFailure : public Error {
 public:
  using Error::Error;
};

inline constexpr double kMaxFailedBinFraction = 0.05;

struct BinDiagnostics {
  double weighted_power = 0.0;      // sum_t |y_t|^2 / sigma_t^2
  double constraint_residual = 0.0; // |w_0^H v - 1|
  double condition = 1.0;
  bool failed = false;
  std::string message;
};

struct Diagnostics {
  Method method = Method::kWpd;
  std::vector<BinDiagnostics> bins;
  std::vector<std::string> warnings;

  double total_weighted_power() const {
    double s = 0.0;
    for (const auto& b : bins) s += b.weighted_power;
    return s;
  }
  double max_constraint_residual() const {
    double s = 0.0;
    for (const auto& b : bins) s = std::max(s, b.constraint_residual);
    return s;
  }
  int failed_bins() const {
    int n = 0;
    for (const auto& b : bins) n += b.failed ? 1 : 0;
    return n;
  }
};

// Power and steering estimates shared by every method's final pass.
struct ParameterSnapshot {
  PowerEstimate power;
  SteeringVector steering;
  std::vector<char> failed;  // bins that failed during estimation (char: written concurrently)
};

namespace detail {

inline bool silent(Eigen::Ref<const Eigen::MatrixXcd> x) { return x.squaredNorm() == 0.0; }

inline WpeFilter zero_wpe(int channels, int delay, int order) {
  WpeFilter w;
  w.delay = delay;
  w.order = order;
  w.taps = Eigen::MatrixXcd::Zero(channels * (order - delay + 1), channels);
  return w;
}

// Minimum-norm distortionless beamformer, used for bins without energy.
inline Eigen::VectorXcd trivial_beamformer(const Eigen::VectorXcd& v) { return v / v.squaredNorm(); }

inline std::string with_iteration(int it, const std::exception& e) {
  return "iteration " + std::to_string(it) + ": " + e.what();
}

}  // namespace detail

inline ParameterSnapshot estimate_parameters(const MultichannelSpectrogram& spec,
                                             const PipelineConfig& cfg) {
  cfg.validate();
  const int bins = spec.bins();
  const int m = spec.channels();
  if (cfg.reference >= m)
    throw UsageError("reference channel " + std::to_string(cfg.reference) + " exceeds channel count");
  const std::vector<int> orders = orders_for_bins(cfg.schedule, spec.config());
  const int delay = cfg.schedule.delay;

  ParameterSnapshot snap;
  snap.power = initial_power(spec);
  snap.failed.assign(bins, false);
  snap.steering.reference = cfg.reference;
  snap.steering.v.resize(bins, m);
  snap.steering.low_confidence.assign(bins, false);

  auto update_steering = [&](const MultichannelSpectrogram& source, int it) {
    std::vector<int> frames;
    try {
      frames = noise_frames(source, cfg.head_ms, cfg.tail_ms);
    } catch (const EstimationError& e) {
      throw EstimationError(detail::with_iteration(it, e));
    }
    parallel_for(bins, cfg.jobs, [&](std::size_t fi) {
      const int f = static_cast<int>(fi);
      try {
        const BinSteering s =
            estimate_steering_bin(spatial_covariance(source.bin(f)),
                                  covariance_over_frames(source.bin(f), frames), cfg.reference,
                                  cfg.loading);
        snap.steering.v.row(f) = s.v.transpose();
        snap.steering.low_confidence[f] = s.low_confidence;
      } catch (const Error&) {
        snap.steering.v.row(f) = Eigen::VectorXcd::Unit(m, cfg.reference).transpose();
        snap.steering.low_confidence[f] = true;
        snap.failed[f] = true;
      }
    });
  };

  if (cfg.iterations == 0) {
    update_steering(spec, 0);
    return snap;
  }

  for (int it = 1; it <= cfg.iterations; ++it) {
    MultichannelSpectrogram derev = spec;
    parallel_for(bins, cfg.jobs, [&](std::size_t fi) {
      const int f = static_cast<int>(fi);
      if (detail::silent(spec.bin(f))) return;
      try {
        const WpeFilter w =
            estimate_wpe_filter(spec.bin(f), snap.power.sigma2.col(f), delay, orders[f], cfg.loading);
        derev.bin(f) = apply_wpe(spec.bin(f), w);
      } catch (const Error&) {
        snap.failed[f] = true;
      }
    });
    update_steering(derev, it);
    Eigen::MatrixXcd d_hat(spec.frames(), bins);
    parallel_for(bins, cfg.jobs, [&](std::size_t fi) {
      const int f = static_cast<int>(fi);
      const Eigen::VectorXcd v = snap.steering.at(f);
      Eigen::VectorXcd w0 = detail::trivial_beamformer(v);
      if (!detail::silent(derev.bin(f))) {
        try {
          w0 = estimate_mpdr(derev.bin(f), v, std::nullopt, cfg.loading);
        } catch (const Error&) {
          snap.failed[f] = true;
          w0 = Eigen::VectorXcd::Unit(m, cfg.reference);
        }
      }
      d_hat.col(f) = apply_instantaneous(derev.bin(f), w0);
    });
    snap.power = update_power_from_estimate(d_hat);
  }
  return snap;
}

struct MethodOutput {
  Eigen::MatrixXcd output;  // frames x bins, single channel
  Eigen::MatrixXcd probe_output;  // the same filters applied to the probe, if one was given
  Diagnostics diagnostics;
};

inline double condition_estimate(const HermitianMatrix& a, double loading) {
  try {
    return LoadedCholesky(a, loading).condition();
  } catch (const SingularMatrixError& e) {
    return e.condition();
  }
}

// Final filtering of one method with a fixed (sigma^2, v) snapshot. When a
// probe spectrogram is given (same bins and channels, e.g. the analysed
// impulse responses), every per-bin filter is also applied to it.
inline MethodOutput filter_with_snapshot(const MultichannelSpectrogram& spec,
                                         const ParameterSnapshot& snap, Method method,
                                         const PipelineConfig& cfg,
                                         const MultichannelSpectrogram* probe = nullptr) {
  if (probe && (probe->bins() != spec.bins() || probe->channels() != spec.channels()))
    throw SizeError("probe spectrogram shape differs from the input");
  const int bins = spec.bins();
  const int q = cfg.reference;
  const int delay = cfg.schedule.delay;
  const std::vector<int> orders = orders_for_bins(cfg.schedule, spec.config());

  MethodOutput out;
  out.output.resize(spec.frames(), bins);
  if (probe) out.probe_output.resize(probe->frames(), bins);
  out.diagnostics.method = method;
  out.diagnostics.bins.assign(bins, BinDiagnostics{});

  parallel_for(bins, cfg.jobs, [&](std::size_t fi) {
    const int f = static_cast<int>(fi);
    const auto x = spec.bin(f);
    const Eigen::VectorXd sigma2 = snap.power.sigma2.col(f);
    const Eigen::VectorXcd v = snap.steering.at(f);
    BinDiagnostics& diag = out.diagnostics.bins[f];
    Eigen::VectorXcd y, yp;
    const auto pass = [&](Eigen::Ref<const Eigen::MatrixXcd> z) -> Eigen::VectorXcd {
      return z.row(q).transpose();
    };
    try {
      if (detail::silent(x)) {
        y = Eigen::VectorXcd::Zero(spec.frames());
        if (probe) yp = Eigen::VectorXcd::Zero(probe->frames());
      } else {
        switch (method) {
          case Method::kWpe: {
            const WpeFilter w = estimate_wpe_filter(x, sigma2, delay, orders[f], cfg.loading);
            y = pass(apply_wpe(x, w));
            if (probe) yp = pass(apply_wpe(probe->bin(f), w));
            break;
          }
          case Method::kMpdr: {
            const Eigen::VectorXcd w0 = estimate_mpdr(x, v, std::nullopt, cfg.loading);
            diag.constraint_residual = distortion_residual(w0, v);
            diag.condition = condition_estimate(HermitianMatrix(x * x.adjoint()), cfg.loading);
            y = apply_instantaneous(x, w0);
            if (probe) yp = apply_instantaneous(probe->bin(f), w0);
            break;
          }
          case Method::kCascade: {
            const WpeFilter w = estimate_wpe_filter(x, sigma2, delay, orders[f], cfg.loading);
            const Eigen::MatrixXcd derev = apply_wpe(x, w);
            const Eigen::VectorXcd w0 = estimate_mpdr(derev, v, std::nullopt, cfg.loading);
            diag.constraint_residual = distortion_residual(compose_cascade(w, w0), v);
            diag.condition =
                condition_estimate(HermitianMatrix(derev * derev.adjoint()), cfg.loading);
            y = apply_instantaneous(derev, w0);
            if (probe) yp = apply_instantaneous(apply_wpe(probe->bin(f), w), w0);
            break;
          }
          case Method::kWpd: {
            const HermitianMatrix r = assemble_R(x, sigma2, delay, orders[f]);
            const ConvolutionalFilter w = solve_wpd(r, v, delay, orders[f], cfg.loading);
            diag.constraint_residual = distortion_residual(w, v);
            diag.condition = condition_estimate(r, cfg.loading);
            y = apply_wpd(x, w);
            if (probe) yp = apply_wpd(probe->bin(f), w);
            break;
          }
        }
      }
    } catch (const Error& e) {
      diag.failed = true;
      diag.message = e.what();
      y = pass(x);
      if (probe) yp = pass(probe->bin(f));
    }
    if (snap.failed[f] && !diag.failed) {
      diag.failed = true;
      diag.message = "parameter estimation failed";
    }
    out.output.col(f) = y;
    if (probe) out.probe_output.col(f) = yp;
    diag.weighted_power = (y.cwiseAbs2().array() / sigma2.array()).sum();
  });
  return out;
}

struct EnhanceResult {
  AudioBuffer audio;  // single channel, same length as the input
  Diagnostics diagnostics;
};

inline EnhanceResult enhance(const AudioBuffer& buf, const PipelineConfig& cfg) {
  cfg.validate();
  buf.validate();
  if (cfg.reference >= buf.channels())
    throw UsageError("reference channel " + std::to_string(cfg.reference) +
                     " exceeds channel count " + std::to_string(buf.channels()));
  StftConfig stft = cfg.stft;
  if (buf.sample_rate != stft.sample_rate)
    throw UsageError("input sample rate " + std::to_string(buf.sample_rate) +
                     " differs from configured " + std::to_string(stft.sample_rate));

  const MultichannelSpectrogram spec = analyze_padded(buf, stft);
  const ParameterSnapshot snap = estimate_parameters(spec, cfg);
  MethodOutput result = filter_with_snapshot(spec, snap, cfg.method, cfg);
  if (buf.channels() == 1 && cfg.method != Method::kWpe)
    result.diagnostics.warnings.push_back(
        "single-channel input: beamforming reduces to the identity");

  const int failed = result.diagnostics.failed_bins();
  if (failed > kMaxFailedBinFraction * spec.bins())
    throw PipelineFailure(std::to_string(failed) + " of " + std::to_string(spec.bins()) +
                          " frequency bins failed");
  if (failed > 0)
    result.diagnostics.warnings.push_back(std::to_string(failed) +
                                          " bins passed through unfiltered");

  EnhanceResult out;
  out.audio = synthesize(single_channel(result.output, spec));
  out.diagnostics = std::move(result.diagnostics);
  return out;
}

}  // namespace convbf
