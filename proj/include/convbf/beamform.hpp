// MPDR beamforming, the WPD convolutional beamformer, and composition of a
// WPE + MPDR cascade into a single convolutional filter.
//
// A convolutional filter for one bin stacks an instantaneous tap w_0 with the
// delayed taps w_b ... w_L:
//   w = [w_0; w_b; ...; w_L],  x_t = [x_t; x_{t-b}; ...; x_{t-L}],
// D = M (L - b + 2). Its output is w^H x_t and its distortionless constraint
// is w_0^H v = 1.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "convbf/error.hpp"
#include "convbf/estimation.hpp"
#include "convbf/numerics.hpp"
#include "convbf/stft.hpp"
#include "convbf/wpe.hpp"

namespace convbf {

struct ConvolutionalFilter {
  int channels = 0;
  int delay = 4;
  int order = 12;          // order == delay - 1 means no convolutional taps
  Eigen::VectorXcd taps;   // D = M (order - delay + 2)

  int num_conv_taps() const { return order - delay + 1; }
  Eigen::Index dim() const { return taps.size(); }
  auto instantaneous() const { return taps.head(channels); }
};

inline void check_wpd_geometry(int delay, int order) {
  if (delay < 1 || order < delay - 1)
    throw UsageError("prediction delay b=" + std::to_string(delay) + " and order L_w=" +
                     std::to_string(order) + " must satisfy 1 <= b <= L_w");
}

inline Eigen::Index wpd_dim(Eigen::Index channels, int delay, int order) {
  return channels * (order - delay + 2);
}

// [v; 0 ... 0] of length d.
inline Eigen::VectorXcd extended_steering(const Eigen::VectorXcd& v, Eigen::Index d) {
  Eigen::VectorXcd out = Eigen::VectorXcd::Zero(d);
  out.head(v.size()) = v;
  return out;
}

// ---- MPDR ------------------------------------------------------------------

// w = R^-1 v / (v^H R^-1 v)
inline Eigen::VectorXcd mpdr_from_covariance(const HermitianMatrix& r, const Eigen::VectorXcd& v,
                                             double loading = kDefaultLoading) {
  const Eigen::VectorXcd y = solve_hermitian(r, v, loading);
  const cdouble denom = v.dot(y);
  if (!(std::abs(denom) > 0.0) || !std::isfinite(std::abs(denom)))
    throw SingularMatrixError("MPDR normalization v^H R^-1 v vanished", 0.0);
  return y / denom;
}

// Unweighted when sigma2 is empty, otherwise R = sum_t x_t x_t^H / sigma_t^2.
inline Eigen::VectorXcd estimate_mpdr(Eigen::Ref<const Eigen::MatrixXcd> x,
                                      const Eigen::VectorXcd& v,
                                      std::optional<Eigen::VectorXd> sigma2 = std::nullopt,
                                      double loading = kDefaultLoading) {
  if (v.size() != x.rows()) throw SizeError("steering vector length does not match channels");
  Eigen::MatrixXcd r;
  if (sigma2) {
    if (sigma2->size() != x.cols()) throw SizeError("power estimate length does not match frames");
    r = x * sigma2->cwiseInverse().asDiagonal() * x.adjoint();
  } else {
    r = x * x.adjoint();
  }
  r = 0.5 * (r + r.adjoint()).eval();
  return mpdr_from_covariance(HermitianMatrix(r), v, loading);
}

// d_t = w_0^H x_t, returned as a length-T column.
inline Eigen::VectorXcd apply_instantaneous(Eigen::Ref<const Eigen::MatrixXcd> x,
                                            const Eigen::VectorXcd& w0) {
  if (w0.size() != x.rows()) throw SizeError("beamformer length does not match channels");
  return (w0.adjoint() * x).transpose();
}

// ---- WPD -------------------------------------------------------------------

inline Eigen::VectorXcd build_wpd_stack(Eigen::Ref<const Eigen::MatrixXcd> x, int t, int delay,
                                        int order) {
  check_wpd_geometry(delay, order);
  const Eigen::Index m = x.rows();
  Eigen::VectorXcd stack(wpd_dim(m, delay, order));
  stack.head(m) = x.col(t);
  if (order >= delay) stack.tail(stack.size() - m) = build_delayed_stack(x, t, delay, order);
  return stack;
}

// All WPD stacks of a bin as columns: D x T.
inline Eigen::MatrixXcd wpd_stack_matrix(Eigen::Ref<const Eigen::MatrixXcd> x, int delay,
                                         int order) {
  check_wpd_geometry(delay, order);
  const Eigen::Index m = x.rows();
  Eigen::MatrixXcd out(wpd_dim(m, delay, order), x.cols());
  out.topRows(m) = x;
  if (order >= delay) out.bottomRows(out.rows() - m) = delayed_stack_matrix(x, delay, order);
  return out;
}

// R = sum_t x_t x_t^H / sigma_t^2 over WPD stacks.
inline HermitianMatrix assemble_R(Eigen::Ref<const Eigen::MatrixXcd> x,
                                  Eigen::Ref<const Eigen::VectorXd> sigma2, int delay, int order) {
  if (sigma2.size() != x.cols()) throw SizeError("power estimate length does not match frames");
  const Eigen::MatrixXcd stacked = wpd_stack_matrix(x, delay, order);
  const Eigen::VectorXd scale = sigma2.cwiseInverse().cwiseSqrt();
  const Eigen::MatrixXcd scaled = stacked * scale.asDiagonal();
  Eigen::MatrixXcd r = scaled * scaled.adjoint();
  r = 0.5 * (r + r.adjoint()).eval();
  return HermitianMatrix(r);
}

// w = R^-1 v~ / (v~^H R^-1 v~) with v~ = [v; 0 ... 0].
inline ConvolutionalFilter solve_wpd(const HermitianMatrix& r, const Eigen::VectorXcd& v, int delay,
                                     int order, double loading = kDefaultLoading) {
  check_wpd_geometry(delay, order);
  const Eigen::Index d = wpd_dim(v.size(), delay, order);
  if (r.dim() != d)
    throw SizeError("covariance dimension " + std::to_string(r.dim()) +
                    " does not match stacked dimension " + std::to_string(d));
  ConvolutionalFilter out;
  out.channels = static_cast<int>(v.size());
  out.delay = delay;
  out.order = order;
  out.taps = mpdr_from_covariance(r, extended_steering(v, d), loading);
  return out;
}

inline Eigen::VectorXcd apply_wpd(Eigen::Ref<const Eigen::MatrixXcd> x,
                                  const ConvolutionalFilter& filter) {
  if (filter.channels != x.rows() ||
      filter.dim() != wpd_dim(x.rows(), filter.delay, filter.order))
    throw SizeError("convolutional filter dimensions do not match the observation");
  return (filter.taps.adjoint() * wpd_stack_matrix(x, filter.delay, filter.order)).transpose();
}

// w = [w_0; -W_b w_0; ...; -W_L w_0]
inline ConvolutionalFilter compose_cascade(const WpeFilter& wpe, const Eigen::VectorXcd& w0) {
  if (wpe.channels() != w0.size())
    throw SizeError("WPE filter and beamformer disagree on channel count");
  ConvolutionalFilter out;
  out.channels = static_cast<int>(w0.size());
  out.delay = wpe.delay;
  out.order = wpe.order;
  out.taps.resize(wpd_dim(w0.size(), wpe.delay, wpe.order));
  out.taps.head(w0.size()) = w0;
  out.taps.tail(out.taps.size() - w0.size()) = -wpe.taps * w0;
  return out;
}

// Instantaneous beamformer as a convolutional filter with zero delayed taps.
inline ConvolutionalFilter embed_instantaneous(const Eigen::VectorXcd& w0, int delay, int order) {
  check_wpd_geometry(delay, order);
  ConvolutionalFilter out;
  out.channels = static_cast<int>(w0.size());
  out.delay = delay;
  out.order = order;
  out.taps = extended_steering(w0, wpd_dim(w0.size(), delay, order));
  return out;
}

// sum_t |w^H x_t|^2 / sigma_t^2 = w^H R w
inline double weighted_output_power(const ConvolutionalFilter& filter, const HermitianMatrix& r) {
  return filter.taps.dot(r.matrix() * filter.taps).real();
}

// |w_0^H v - 1|
inline double distortion_residual(const ConvolutionalFilter& filter, const Eigen::VectorXcd& v) {
  return std::abs(filter.instantaneous().dot(v) - 1.0);
}

inline double distortion_residual(const Eigen::VectorXcd& w0, const Eigen::VectorXcd& v) {
  return std::abs(w0.dot(v) - 1.0);
}

// ---- whole-spectrogram helpers ---------------------------------------------

inline std::vector<Eigen::VectorXcd> estimate_mpdr(const MultichannelSpectrogram& spec,
                                                   const SteeringVector& steering,
                                                   const PowerEstimate* weights = nullptr,
                                                   double loading = kDefaultLoading) {
  std::vector<Eigen::VectorXcd> out;
  out.reserve(spec.bins());
  for (int f = 0; f < spec.bins(); ++f) {
    std::optional<Eigen::VectorXd> w;
    if (weights) w = weights->sigma2.col(f);
    out.push_back(estimate_mpdr(spec.bin(f), steering.at(f), w, loading));
  }
  return out;
}

// Frames x bins output of per-bin instantaneous beamformers.
inline Eigen::MatrixXcd apply_instantaneous(const MultichannelSpectrogram& spec,
                                            const std::vector<Eigen::VectorXcd>& w0) {
  Eigen::MatrixXcd out(spec.frames(), spec.bins());
  for (int f = 0; f < spec.bins(); ++f) out.col(f) = apply_instantaneous(spec.bin(f), w0[f]);
  return out;
}

inline Eigen::MatrixXcd apply_wpd(const MultichannelSpectrogram& spec,
                                  const std::vector<ConvolutionalFilter>& filters) {
  Eigen::MatrixXcd out(spec.frames(), spec.bins());
  for (int f = 0; f < spec.bins(); ++f) out.col(f) = apply_wpd(spec.bin(f), filters[f]);
  return out;
}

}  // namespace convbf
