// Estimation of the time-varying desired-signal power and of the
// relative-transfer-function steering vector.
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "convbf/error.hpp"
#include "convbf/numerics.hpp"
#include "convbf/stft.hpp"

namespace convbf {

inline constexpr double kPowerFloorEps = 1e-6;
// Floor used when an entire bin carries no energy.
inline constexpr double kAbsolutePowerFloor = 1e-30;

struct PowerEstimate {
  Eigen::MatrixXd sigma2;  // frames x bins, strictly positive
  double floor_eps = kPowerFloorEps;

  int frames() const { return static_cast<int>(sigma2.rows()); }
  int bins() const { return static_cast<int>(sigma2.cols()); }
};

// Applies sigma2[t,f] >= floor_eps * mean_t(raw[t,f]) per bin.
inline PowerEstimate floor_power(Eigen::MatrixXd raw, double floor_eps = kPowerFloorEps) {
  for (Eigen::Index f = 0; f < raw.cols(); ++f) {
    const double mean = raw.col(f).mean();
    const double floor = std::max(floor_eps * mean, kAbsolutePowerFloor);
    raw.col(f) = raw.col(f).cwiseMax(floor);
  }
  return PowerEstimate{std::move(raw), floor_eps};
}

inline PowerEstimate initial_power(const MultichannelSpectrogram& spec,
                                   double floor_eps = kPowerFloorEps) {
  Eigen::MatrixXd raw(spec.frames(), spec.bins());
  for (int f = 0; f < spec.bins(); ++f)
    raw.col(f) = spec.bin(f).cwiseAbs2().colwise().mean().transpose();
  return floor_power(std::move(raw), floor_eps);
}

// d_hat is frames x bins.
inline PowerEstimate update_power_from_estimate(const Eigen::MatrixXcd& d_hat,
                                                double floor_eps = kPowerFloorEps) {
  return floor_power(d_hat.cwiseAbs2(), floor_eps);
}

struct SteeringVector {
  Eigen::MatrixXcd v;             // bins x channels, v(f, q) == 1
  int reference = 0;
  std::vector<char> low_confidence;  // per bin, nonzero when flagged

  int bins() const { return static_cast<int>(v.rows()); }
  int channels() const { return static_cast<int>(v.cols()); }
  Eigen::VectorXcd at(int f) const { return v.row(f).transpose(); }
};

struct NoiseInterval {
  int first_frame = 0;
  int last_frame = -1;  // inclusive
  bool empty() const { return last_frame < first_frame; }
};

// Frames whose sample span lies entirely inside [0, head] or [N - tail, N].
inline std::vector<int> noise_frames(const MultichannelSpectrogram& spec, double head_ms,
                                     double tail_ms) {
  const auto& cfg = spec.config();
  const Eigen::Index n = spec.signal_length() > 0
                             ? spec.signal_length()
                             : spec.frame_start(spec.frames() - 1) + cfg.frame_len;
  const auto head = static_cast<Eigen::Index>(std::lround(head_ms * cfg.sample_rate / 1000.0));
  const auto tail = static_cast<Eigen::Index>(std::lround(tail_ms * cfg.sample_rate / 1000.0));

  std::vector<int> head_frames, tail_frames;
  for (int t = 0; t < spec.frames(); ++t) {
    const Eigen::Index s = spec.frame_start(t);
    const Eigen::Index e = s + cfg.frame_len;
    if (s >= 0 && e <= head)
      head_frames.push_back(t);
    else if (s >= n - tail && e <= n)
      tail_frames.push_back(t);
  }
  if (head_ms > 0 && head_frames.empty())
    throw EstimationError("no frame fits inside the leading noise-only interval of " +
                          std::to_string(head_ms) + " ms");
  if (tail_ms > 0 && tail_frames.empty())
    throw EstimationError("no frame fits inside the trailing noise-only interval of " +
                          std::to_string(tail_ms) + " ms");
  if (head_frames.empty() && tail_frames.empty())
    throw EstimationError("noise-only intervals are both empty");
  head_frames.insert(head_frames.end(), tail_frames.begin(), tail_frames.end());
  return head_frames;
}

inline HermitianMatrix covariance_over_frames(Eigen::Ref<const Eigen::MatrixXcd> x,
                                              const std::vector<int>& frames) {
  Eigen::MatrixXcd phi = Eigen::MatrixXcd::Zero(x.rows(), x.rows());
  for (int t : frames) phi.noalias() += x.col(t) * x.col(t).adjoint();
  if (!frames.empty()) phi /= static_cast<double>(frames.size());
  return HermitianMatrix(phi);
}

inline HermitianMatrix spatial_covariance(Eigen::Ref<const Eigen::MatrixXcd> x) {
  Eigen::MatrixXcd phi = x * x.adjoint();
  if (x.cols() > 0) phi /= static_cast<double>(x.cols());
  return HermitianMatrix(phi);
}

// Per-bin noise covariance from the noise-only utterance edges.
inline std::vector<HermitianMatrix> noise_covariance_from_edges(
    const MultichannelSpectrogram& spec, double head_ms, double tail_ms) {
  const std::vector<int> frames = noise_frames(spec, head_ms, tail_ms);
  std::vector<HermitianMatrix> out;
  out.reserve(spec.bins());
  for (int f = 0; f < spec.bins(); ++f) out.push_back(covariance_over_frames(spec.bin(f), frames));
  return out;
}

struct BinSteering {
  Eigen::VectorXcd v;
  bool low_confidence = false;
};

// Noise covariances with (relatively) no energy cannot whiten; a scaled
// identity is substituted and the bin flagged low-confidence.
inline BinSteering estimate_steering_bin(const HermitianMatrix& phi_x, const HermitianMatrix& phi_n,
                                         int reference, double loading = kDefaultLoading) {
  const Eigen::Index m = phi_x.dim();
  if (reference < 0 || reference >= m)
    throw UsageError("reference channel " + std::to_string(reference) + " out of range");
  BinSteering out;
  const double tx = phi_x.trace();
  if (!(tx > 0.0)) {
    out.v = Eigen::VectorXcd::Unit(m, reference);
    out.low_confidence = true;
    return out;
  }
  const bool noise_usable = phi_n.trace() > 1e-12 * tx;
  const HermitianMatrix whitening =
      noise_usable ? phi_n
                   : HermitianMatrix(Eigen::MatrixXcd::Identity(m, m) * (tx / static_cast<double>(m)));
  const GeneralizedEigenvector g = whitened_gevd(phi_x, whitening, loading);
  const cdouble ref = g.vector(reference);
  if (!(std::abs(ref) >= 1e-12 * g.vector.norm()))
    throw EstimationError("steering vector has a vanishing reference-channel entry");
  out.v = g.vector / ref;
  out.v(reference) = 1.0;
  out.low_confidence = !noise_usable || g.value <= 1.0 + 1e-6;
  return out;
}

inline SteeringVector estimate_steering(const MultichannelSpectrogram& spec,
                                        const std::vector<HermitianMatrix>& phi_n, int reference,
                                        double loading = kDefaultLoading) {
  if (static_cast<int>(phi_n.size()) != spec.bins())
    throw SizeError("noise covariance count does not match bin count");
  SteeringVector out;
  out.reference = reference;
  out.v.resize(spec.bins(), spec.channels());
  out.low_confidence.assign(spec.bins(), false);
  for (int f = 0; f < spec.bins(); ++f) {
    const BinSteering b =
        estimate_steering_bin(spatial_covariance(spec.bin(f)), phi_n[f], reference, loading);
    out.v.row(f) = b.v.transpose();
    out.low_confidence[f] = b.low_confidence;
  }
  return out;
}

}  // namespace convbf
