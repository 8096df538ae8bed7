#include <gtest/gtest.h>

#include <Eigen/LU>

#include <random>

#include "convbf/beamform.hpp"
#include "test_util.hpp"

using namespace convbf;

namespace {

Eigen::VectorXcd random_rtf(int m, std::mt19937_64& rng, int q = 0) {
  Eigen::VectorXcd v = fixtures::random_complex(m, 1, rng);
  v /= v(q);
  v(q) = 1.0;
  return v;
}

// R accumulated entry by entry from explicitly indexed frames.
Eigen::MatrixXcd naive_R(const Eigen::MatrixXcd& x, const Eigen::VectorXd& sigma2, int b, int l) {
  const Eigen::Index m = x.rows();
  const Eigen::Index d = m * (l - b + 2);
  Eigen::MatrixXcd r = Eigen::MatrixXcd::Zero(d, d);
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    Eigen::VectorXcd z = Eigen::VectorXcd::Zero(d);
    for (Eigen::Index c = 0; c < m; ++c) z(c) = x(c, t);
    for (int tau = b; tau <= l; ++tau) {
      if (t - tau < 0) continue;
      for (Eigen::Index c = 0; c < m; ++c) z(m * (tau - b + 1) + c) = x(c, t - tau);
    }
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) r(i, j) += z(i) * std::conj(z(j)) / sigma2(t);
  }
  return r;
}

// Stationarity R w = mu v~ together with v~^H w = 1, solved as one linear system.
Eigen::VectorXcd kkt_solution(const Eigen::MatrixXcd& r, const Eigen::VectorXcd& vbar) {
  const Eigen::Index d = r.rows();
  Eigen::MatrixXcd k = Eigen::MatrixXcd::Zero(d + 1, d + 1);
  k.topLeftCorner(d, d) = r;
  k.topRightCorner(d, 1) = -vbar;
  k.bottomLeftCorner(1, d) = vbar.adjoint();
  Eigen::VectorXcd rhs = Eigen::VectorXcd::Zero(d + 1);
  rhs(d) = 1.0;
  return k.fullPivLu().solve(rhs).head(d);
}

double quad(const Eigen::VectorXcd& w, const Eigen::MatrixXcd& r) { return w.dot(r * w).real(); }

}  // namespace

TEST(Mpdr, SingleChannelIsIdentity) {
  std::mt19937_64 rng(81);
  const Eigen::MatrixXcd x = fixtures::random_complex(1, 50, rng);
  const Eigen::VectorXcd w0 = estimate_mpdr(x, Eigen::VectorXcd::Ones(1));
  EXPECT_NEAR(std::abs(w0(0) - 1.0), 0.0, 1e-12);
  EXPECT_LT((apply_instantaneous(x, w0) - x.row(0).transpose()).norm(), 1e-12 * x.norm());
}

TEST(Mpdr, RankOnePlusTinyNoiseRecoversReference) {
  std::mt19937_64 rng(82);
  const Eigen::VectorXcd v = random_rtf(4, rng);
  const Eigen::MatrixXcd s = fixtures::random_complex(1, 400, rng);
  Eigen::MatrixXcd noise = 1e-4 * fixtures::random_complex(4, 400, rng);
  // Remove the sample correlation with s; otherwise it drives signal cancellation.
  noise -= (noise * s.adjoint()) * s / s.squaredNorm();
  const Eigen::MatrixXcd x = v * s + noise;
  const Eigen::VectorXcd d = apply_instantaneous(x, estimate_mpdr(x, v));
  EXPECT_LT((d - s.transpose()).norm() / s.norm(), 1e-3);
}

TEST(Mpdr, ConstraintHoldsOnRandomScenes) {
  std::mt19937_64 rng(83);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 2 + trial % 7;
    const Eigen::VectorXcd v = random_rtf(m, rng);
    const Eigen::MatrixXcd x = fixtures::random_complex(m, 30 + trial, rng);
    EXPECT_LT(distortion_residual(estimate_mpdr(x, v), v), 1e-10);
    EXPECT_LT(distortion_residual(estimate_mpdr(x, v, fixtures::random_positive(x.cols(), rng)), v),
              1e-10);
  }
}

TEST(Mpdr, SteeringLengthMismatch) {
  EXPECT_THROW(estimate_mpdr(Eigen::MatrixXcd::Ones(3, 10), Eigen::VectorXcd::Ones(2)), SizeError);
}

TEST(Instantaneous, SelectorReturnsChannel) {
  std::mt19937_64 rng(84);
  const Eigen::MatrixXcd x = fixtures::random_complex(5, 30, rng);
  EXPECT_EQ(apply_instantaneous(x, Eigen::VectorXcd::Unit(5, 3)), x.row(3).transpose());
}

TEST(Instantaneous, MatchesWpdWithZeroTaps) {
  std::mt19937_64 rng(85);
  const Eigen::MatrixXcd x = fixtures::random_complex(3, 40, rng);
  const Eigen::VectorXcd w0 = fixtures::random_complex(3, 1, rng);
  const Eigen::VectorXcd a = apply_instantaneous(x, w0);
  const Eigen::VectorXcd b = apply_wpd(x, embed_instantaneous(w0, 4, 9));
  EXPECT_LT((a - b).norm(), 1e-13 * a.norm());
}

TEST(WpdStack, Dimensions) {
  std::mt19937_64 rng(86);
  const Eigen::MatrixXcd x8 = fixtures::random_complex(8, 30, rng);
  EXPECT_EQ(build_wpd_stack(x8, 15, 4, 12).size(), 80);
  EXPECT_EQ(build_wpd_stack(x8, 15, 4, 4).size(), 16);
  EXPECT_EQ(wpd_dim(8, 4, 12), 80);
}

TEST(WpdStack, FirstFrameIsPadded) {
  std::mt19937_64 rng(87);
  const Eigen::MatrixXcd x = fixtures::random_complex(3, 10, rng);
  const Eigen::VectorXcd s = build_wpd_stack(x, 0, 2, 4);
  EXPECT_EQ(s.head(3), x.col(0));
  EXPECT_EQ(s.tail(9).cwiseAbs().maxCoeff(), 0.0);
}

TEST(WpdStack, ConcatenatesCurrentAndDelayed) {
  std::mt19937_64 rng(88);
  const Eigen::MatrixXcd x = fixtures::random_complex(2, 30, rng);
  const Eigen::MatrixXcd all = wpd_stack_matrix(x, 3, 6);
  for (int t = 0; t < 30; ++t) {
    EXPECT_EQ(all.col(t), build_wpd_stack(x, t, 3, 6));
    EXPECT_EQ(all.col(t).tail(8), build_delayed_stack(x, t, 3, 6));
  }
}

TEST(AssembleR, SingleOuterProduct) {
  Eigen::MatrixXcd x = Eigen::MatrixXcd::Zero(2, 1);
  x(0, 0) = 1.0;
  const HermitianMatrix r = assemble_R(x, Eigen::VectorXd::Ones(1), 1, 2);
  Eigen::MatrixXcd expected = Eigen::MatrixXcd::Zero(6, 6);
  expected(0, 0) = 1.0;
  EXPECT_EQ(r.matrix(), expected);
}

TEST(AssembleR, WeightingLaw) {
  std::mt19937_64 rng(89);
  const Eigen::MatrixXcd x = fixtures::random_complex(2, 2, rng);
  Eigen::VectorXd s(2);
  s << 1.0, 1.0;
  const Eigen::MatrixXcd r1 = assemble_R(x, s, 1, 1).matrix();
  s(1) = 2.0;
  const Eigen::MatrixXcd r2 = assemble_R(x, s, 1, 1).matrix();
  const Eigen::VectorXcd z1 = build_wpd_stack(x, 1, 1, 1);
  EXPECT_LT((r1 - r2 - 0.5 * z1 * z1.adjoint()).norm(), 1e-14);
}

TEST(AssembleR, MatchesNaiveAccumulation) {
  std::mt19937_64 rng(90);
  const Eigen::MatrixXcd x = fixtures::random_complex(3, 64, rng);
  const Eigen::VectorXd sigma2 = fixtures::random_positive(64, rng);
  const Eigen::MatrixXcd r = assemble_R(x, sigma2, 2, 5).matrix();
  const Eigen::MatrixXcd oracle = naive_R(x, sigma2, 2, 5);
  EXPECT_LT((r - oracle).norm() / oracle.norm(), 1e-12);
}

TEST(SolveWpd, ConstraintOnRandomPd) {
  std::mt19937_64 rng(91);
  for (int trial = 0; trial < 100; ++trial) {
    const int m = 2 + trial % 3;
    const Eigen::VectorXcd v = random_rtf(m, rng, trial % m);
    const HermitianMatrix r(fixtures::random_hpd(wpd_dim(m, 2, 4), rng));
    const ConvolutionalFilter w = solve_wpd(r, v, 2, 4);
    EXPECT_LT(distortion_residual(w, v), 1e-10);
    EXPECT_LT(std::abs(w.taps.dot(extended_steering(v, w.dim())) - 1.0), 1e-10);
  }
}

TEST(SolveWpd, MatchesKktOracle) {
  std::mt19937_64 rng(92);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXcd x = fixtures::random_complex(2, 16, rng);
    const Eigen::VectorXd sigma2 = fixtures::random_positive(16, rng);
    const Eigen::VectorXcd v = random_rtf(2, rng);
    const Eigen::MatrixXcd r = naive_R(x, sigma2, 1, 2);
    const ConvolutionalFilter w = solve_wpd(assemble_R(x, sigma2, 1, 2), v, 1, 2, 0.0);
    const Eigen::VectorXcd oracle = kkt_solution(r, extended_steering(v, 6));
    EXPECT_NEAR(quad(w.taps, r), quad(oracle, r), 1e-8 * quad(oracle, r));
    EXPECT_LT((w.taps - oracle).norm() / oracle.norm(), 1e-8);
  }
}

TEST(SolveWpd, ZeroConvTapsIsWeightedMpdr) {
  std::mt19937_64 rng(93);
  const Eigen::MatrixXcd x = fixtures::random_complex(4, 50, rng);
  const Eigen::VectorXd sigma2 = fixtures::random_positive(50, rng);
  const Eigen::VectorXcd v = random_rtf(4, rng);
  const ConvolutionalFilter w = solve_wpd(assemble_R(x, sigma2, 3, 2), v, 3, 2);
  ASSERT_EQ(w.dim(), 4);
  const Eigen::VectorXcd w0 = estimate_mpdr(x, v, sigma2);
  EXPECT_LT((w.taps - w0).norm() / w0.norm(), 1e-12);
}

TEST(SolveWpd, DimensionMismatch) {
  EXPECT_THROW(solve_wpd(HermitianMatrix::identity(5), Eigen::VectorXcd::Ones(2), 1, 2), SizeError);
}

TEST(ApplyWpd, SelectorReturnsChannel) {
  std::mt19937_64 rng(94);
  const Eigen::MatrixXcd x = fixtures::random_complex(3, 20, rng);
  const ConvolutionalFilter w = embed_instantaneous(Eigen::VectorXcd::Unit(3, 1), 2, 5);
  EXPECT_EQ(apply_wpd(x, w), x.row(1).transpose());
}

TEST(ApplyWpd, StackingIdentity) {
  std::mt19937_64 rng(95);
  const int m = 3, b = 2, l = 5;
  const Eigen::MatrixXcd x = fixtures::random_complex(m, 40, rng);
  ConvolutionalFilter w;
  w.channels = m;
  w.delay = b;
  w.order = l;
  w.taps = fixtures::random_complex(wpd_dim(m, b, l), 1, rng);
  const Eigen::VectorXcd d = apply_wpd(x, w);
  for (int t = 0; t < 40; ++t) {
    cdouble expected = w.taps.head(m).dot(x.col(t));
    for (int tau = b; tau <= l; ++tau)
      if (t - tau >= 0) expected += w.taps.segment(m * (tau - b + 1), m).dot(x.col(t - tau));
    EXPECT_LT(std::abs(d(t) - expected), 1e-12) << t;
  }
}

TEST(ApplyWpd, AnechoicNoiselessIsDistortionless) {
  std::mt19937_64 rng(96);
  const Eigen::VectorXcd v = random_rtf(4, rng);
  // Active frames are spaced beyond the filter span, so no part of s_t is
  // predictable from the delayed stack.
  Eigen::MatrixXcd s = Eigen::MatrixXcd::Zero(1, 300);
  for (int t = 0; t < 300; t += 4) s(0, t) = fixtures::random_complex(1, 1, rng)(0, 0);
  const Eigen::MatrixXcd x = v * s;
  const ConvolutionalFilter w = solve_wpd(assemble_R(x, Eigen::VectorXd::Ones(300), 1, 3), v, 1, 3);
  EXPECT_LT((apply_wpd(x, w) - s.transpose()).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ApplyWpd, LinearInInput) {
  std::mt19937_64 rng(97);
  const Eigen::MatrixXcd x = fixtures::random_complex(2, 30, rng);
  const Eigen::MatrixXcd y = fixtures::random_complex(2, 30, rng);
  ConvolutionalFilter w;
  w.channels = 2;
  w.delay = 1;
  w.order = 3;
  w.taps = fixtures::random_complex(8, 1, rng);
  const cdouble a(0.3, 1.1), b(-2.0, 0.5);
  const Eigen::VectorXcd lhs = apply_wpd(a * x + b * y, w);
  const Eigen::VectorXcd rhs = a * apply_wpd(x, w) + b * apply_wpd(y, w);
  EXPECT_LT((lhs - rhs).norm(), 1e-12 * lhs.norm());
}

TEST(Cascade, ZeroPredictionGivesInstantaneous) {
  std::mt19937_64 rng(98);
  WpeFilter wpe;
  wpe.delay = 2;
  wpe.order = 4;
  wpe.taps = Eigen::MatrixXcd::Zero(3 * 3, 3);
  const Eigen::VectorXcd w0 = fixtures::random_complex(3, 1, rng);
  const ConvolutionalFilter c = compose_cascade(wpe, w0);
  EXPECT_EQ(c.taps, extended_steering(w0, 12));
}

TEST(Cascade, ComposedEqualsSequential) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXcd x = fixtures::random_complex(3, 50, rng);
    WpeFilter wpe;
    wpe.delay = 1 + trial % 3;
    wpe.order = wpe.delay + 2;
    wpe.taps = fixtures::random_complex(3 * wpe.num_taps(), 3, rng);
    const Eigen::VectorXcd w0 = fixtures::random_complex(3, 1, rng);
    const Eigen::VectorXcd seq = apply_instantaneous(apply_wpe(x, wpe), w0);
    const Eigen::VectorXcd comp = apply_wpd(x, compose_cascade(wpe, w0));
    EXPECT_LT((seq - comp).cwiseAbs().maxCoeff(), 1e-12 * seq.cwiseAbs().maxCoeff());
  }
}

TEST(Cascade, ConstraintInherited) {
  std::mt19937_64 rng(100);
  WpeFilter wpe;
  wpe.delay = 1;
  wpe.order = 3;
  wpe.taps = fixtures::random_complex(9, 3, rng);
  const Eigen::VectorXcd w0 = fixtures::random_complex(3, 1, rng);
  const Eigen::VectorXcd v = random_rtf(3, rng);
  const ConvolutionalFilter c = compose_cascade(wpe, w0);
  EXPECT_LT(std::abs(c.taps.dot(extended_steering(v, c.dim())) - w0.dot(v)), 1e-14);
}

TEST(Cascade, ChannelMismatch) {
  WpeFilter wpe;
  wpe.taps = Eigen::MatrixXcd::Zero(18, 2);
  EXPECT_THROW(compose_cascade(wpe, Eigen::VectorXcd::Ones(3)), SizeError);
}

// The cascade and any reverse-order filter lie in the constrained set that
// the convolutional solution minimizes over.
TEST(BeamformProperties, Dominance) {
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 2 + trial % 3, b = 1 + trial % 2, l = b + 2;
    const Eigen::MatrixXcd x = fixtures::random_complex(m, 80, rng);
    const Eigen::VectorXd sigma2 = fixtures::random_positive(80, rng);
    const Eigen::VectorXcd v = random_rtf(m, rng);
    const HermitianMatrix r = assemble_R(x, sigma2, b, l);
    const ConvolutionalFilter wpd = solve_wpd(r, v, b, l, 0.0);
    const double p_wpd = weighted_output_power(wpd, r);

    const WpeFilter wpe = estimate_wpe_filter(x, sigma2, b, l, 0.0);
    const Eigen::VectorXcd w0 = estimate_mpdr(apply_wpe(x, wpe), v);
    EXPECT_LE(p_wpd, weighted_output_power(compose_cascade(wpe, w0), r) * (1 + 1e-9));

    const Eigen::MatrixXcd w_prime = fixtures::random_complex(m, m, rng);
    ConvolutionalFilter rev = embed_instantaneous(w0, b, l);
    for (int k = 0; k <= l - b; ++k)
      rev.taps.segment(m * (k + 1), m) = -w_prime * fixtures::random_complex(m, 1, rng);
    EXPECT_LT(distortion_residual(rev, v), 1e-10);
    EXPECT_LE(p_wpd, weighted_output_power(rev, r) * (1 + 1e-9));
  }
}

TEST(BeamformProperties, PowerRescaleInvariance) {
  std::mt19937_64 rng(102);
  const Eigen::MatrixXcd x = fixtures::random_complex(3, 60, rng);
  const Eigen::VectorXd sigma2 = fixtures::random_positive(60, rng);
  const Eigen::VectorXcd v = random_rtf(3, rng);
  const ConvolutionalFilter a = solve_wpd(assemble_R(x, sigma2, 1, 3), v, 1, 3);
  const ConvolutionalFilter b = solve_wpd(assemble_R(x, 37.5 * sigma2, 1, 3), v, 1, 3);
  EXPECT_LT((a.taps - b.taps).cwiseAbs().maxCoeff(), 1e-10);
}
