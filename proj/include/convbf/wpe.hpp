// Weighted prediction error dereverberation.
//
// The regressor for frame t stacks the delayed observations
//   x~_t = [x_{t-b}; x_{t-b-1}; ...; x_{t-L}]      (K = L - b + 1 blocks)
// with zero blocks before the start of the utterance. The prediction
// matrices W = [W_b; ...; W_L] (MK x M) minimize
//   sum_t || x_t - W^H x~_t ||^2 / sigma_t^2.
#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

#include "convbf/error.hpp"
#include "convbf/estimation.hpp"
#include "convbf/numerics.hpp"
#include "convbf/stft.hpp"

namespace convbf {

struct WpeFilter {
  int delay = 4;            // b
  int order = 12;           // L_w
  Eigen::MatrixXcd taps;    // (M * K) x M

  int num_taps() const { return order - delay + 1; }
  int channels() const { return static_cast<int>(taps.cols()); }
};

inline void check_delay_order(int delay, int order) {
  if (delay < 1 || order < delay)
    throw UsageError("prediction delay b=" + std::to_string(delay) + " and order L_w=" +
                     std::to_string(order) + " must satisfy 1 <= b <= L_w");
}

// Stack of x_{t-b} ... x_{t-L} for one frame of a channels x frames bin.
inline Eigen::VectorXcd build_delayed_stack(Eigen::Ref<const Eigen::MatrixXcd> x, int t, int delay,
                                            int order) {
  check_delay_order(delay, order);
  const Eigen::Index m = x.rows();
  Eigen::VectorXcd stack = Eigen::VectorXcd::Zero(m * (order - delay + 1));
  for (int tau = delay; tau <= order; ++tau) {
    const int src = t - tau;
    if (src >= 0 && src < x.cols()) stack.segment((tau - delay) * m, m) = x.col(src);
  }
  return stack;
}

// All delayed stacks of a bin as columns: (M * K) x T.
inline Eigen::MatrixXcd delayed_stack_matrix(Eigen::Ref<const Eigen::MatrixXcd> x, int delay,
                                             int order) {
  check_delay_order(delay, order);
  const Eigen::Index m = x.rows();
  const Eigen::Index frames = x.cols();
  Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(m * (order - delay + 1), frames);
  for (int tau = delay; tau <= order; ++tau) {
    if (tau >= frames) break;
    out.block((tau - delay) * m, tau, m, frames - tau) = x.leftCols(frames - tau);
  }
  return out;
}

// Weighted normal equations for one bin.
inline WpeFilter estimate_wpe_filter(Eigen::Ref<const Eigen::MatrixXcd> x,
                                     Eigen::Ref<const Eigen::VectorXd> sigma2, int delay, int order,
                                     double loading = kDefaultLoading) {
  if (sigma2.size() != x.cols()) throw SizeError("power estimate length does not match frames");
  const Eigen::MatrixXcd stacked = delayed_stack_matrix(x, delay, order);
  const Eigen::MatrixXcd weighted = stacked * sigma2.cwiseInverse().asDiagonal();
  Eigen::MatrixXcd p_mat = weighted * stacked.adjoint();
  p_mat = 0.5 * (p_mat + p_mat.adjoint()).eval();
  const Eigen::MatrixXcd p_vec = weighted * x.adjoint();
  WpeFilter out;
  out.delay = delay;
  out.order = order;
  out.taps = solve_hermitian(HermitianMatrix(p_mat), p_vec, loading);
  return out;
}

// d_t = x_t - W^H x~_t for every frame of one bin.
inline Eigen::MatrixXcd apply_wpe(Eigen::Ref<const Eigen::MatrixXcd> x, const WpeFilter& filter) {
  if (filter.taps.rows() != x.rows() * filter.num_taps() || filter.taps.cols() != x.rows())
    throw SizeError("WPE filter dimensions do not match the observation");
  return x - filter.taps.adjoint() * delayed_stack_matrix(x, filter.delay, filter.order);
}

// sum_t || x_t - W^H x~_t ||^2 / sigma_t^2
inline double wpe_objective(Eigen::Ref<const Eigen::MatrixXcd> x,
                            Eigen::Ref<const Eigen::VectorXd> sigma2, const WpeFilter& filter) {
  const Eigen::MatrixXcd d = apply_wpe(x, filter);
  return (d.cwiseAbs2().colwise().sum().transpose().array() / sigma2.array()).sum();
}

// Whole-spectrogram variants with one filter per bin; `orders` gives L_w per bin.
inline std::vector<WpeFilter> estimate_wpe_filters(const MultichannelSpectrogram& spec,
                                                   const PowerEstimate& power, int delay,
                                                   const std::vector<int>& orders,
                                                   double loading = kDefaultLoading) {
  if (static_cast<int>(orders.size()) != spec.bins())
    throw SizeError("one regression order per bin is required");
  std::vector<WpeFilter> out;
  out.reserve(spec.bins());
  for (int f = 0; f < spec.bins(); ++f)
    out.push_back(estimate_wpe_filter(spec.bin(f), power.sigma2.col(f), delay, orders[f], loading));
  return out;
}

inline MultichannelSpectrogram apply_wpe(const MultichannelSpectrogram& spec,
                                         const std::vector<WpeFilter>& filters) {
  if (static_cast<int>(filters.size()) != spec.bins())
    throw SizeError("one WPE filter per bin is required");
  MultichannelSpectrogram out = spec;
  for (int f = 0; f < spec.bins(); ++f) out.bin(f) = apply_wpe(spec.bin(f), filters[f]);
  return out;
}

}  // namespace convbf
