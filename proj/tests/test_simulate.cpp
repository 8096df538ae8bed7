#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "convbf/simulate.hpp"

using namespace convbf;

namespace {

SceneSpec quick_scene(std::uint64_t seed) {
  SceneSpec s;
  s.channels = 4;
  s.duration_s = 2.0;
  s.t60 = 0.4;
  s.seed = seed;
  return s;
}

Eigen::Index argmax_abs(const Eigen::RowVectorXd& r) {
  Eigen::Index k = 0;
  r.cwiseAbs().maxCoeff(&k);
  return k;
}

}  // namespace

// Least-squares line through the log energy envelope; 60 dB of decay must
// take t60 seconds.
TEST(Rir, EnergyDecayMatchesT60) {
  const double t60 = 0.5;
  const Eigen::MatrixXd h = generate_rir(8, t60, 0.6, 3);
  const int win = 160;
  std::vector<double> tx, ey;
  for (Eigen::Index start = 320; start + win <= 8000; start += win) {
    const double e = h.middleCols(start, win).squaredNorm();
    tx.push_back(start + 0.5 * win);
    ey.push_back(10.0 * std::log10(e));
  }
  const double n = static_cast<double>(tx.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < tx.size(); ++i) {
    sx += tx[i];
    sy += ey[i];
    sxx += tx[i] * tx[i];
    sxy += tx[i] * ey[i];
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  EXPECT_NEAR(slope * t60 * 16000.0, -60.0, 1.0);
}

TEST(Rir, ShortT60IsNearlyAnechoic) {
  const Eigen::MatrixXd h = generate_rir(4, 0.001, 0.6, 4);
  for (Eigen::Index m = 0; m < h.rows(); ++m) {
    const double peak = h.row(m).cwiseAbs2().maxCoeff();
    EXPECT_GT(peak / h.row(m).squaredNorm(), 0.99) << m;
  }
}

TEST(Rir, DirectImpulsesDominateWithinSpread) {
  const Eigen::MatrixXd h = generate_rir(8, 0.3, 0.6, 5);
  std::vector<Eigen::Index> peaks;
  for (Eigen::Index m = 0; m < h.rows(); ++m) {
    peaks.push_back(argmax_abs(h.row(m)));
    EXPECT_NEAR(h(m, peaks.back()), 1.0, 0.2);
  }
  const auto [lo, hi] = std::minmax_element(peaks.begin(), peaks.end());
  EXPECT_LE(*hi - *lo, 10);  // 0.6 ms at 16 kHz
}

TEST(Rir, Deterministic) {
  EXPECT_EQ(generate_rir(3, 0.4, 0.6, 9), generate_rir(3, 0.4, 0.6, 9));
  EXPECT_NE(generate_rir(3, 0.4, 0.6, 9), generate_rir(3, 0.4, 0.6, 10));
}

// Inside the coherent window every channel holds the same sequence, shifted
// to its own direct-path arrival.
TEST(Rir, CoherentEarlyWindowIsRankOne) {
  const Eigen::MatrixXd h = generate_rir(6, 0.5, 0.6, 11, 16000, 2.0, 50.0);
  const Eigen::Index p0 = argmax_abs(h.row(0));
  for (Eigen::Index m = 1; m < h.rows(); ++m) {
    const Eigen::Index pm = argmax_abs(h.row(m));
    EXPECT_EQ(h.row(m).segment(pm, 780), h.row(0).segment(p0, 780)) << m;
  }
  const Eigen::MatrixXd diffuse = generate_rir(6, 0.5, 0.6, 11);
  const Eigen::Index q0 = argmax_abs(diffuse.row(0));
  const Eigen::Index q1 = argmax_abs(diffuse.row(1));
  EXPECT_NE(diffuse.row(1).segment(q1, 780), diffuse.row(0).segment(q0, 780));
}

TEST(Rir, RejectsBadArguments) {
  EXPECT_THROW(generate_rir(2, 0.0, 0.6, 1), UsageError);
  EXPECT_THROW(generate_rir(2, 0.3, -1.0, 1), UsageError);
}

TEST(Source, DeterministicAndNormalized) {
  const AudioBuffer a = generate_source(32000, 12);
  EXPECT_EQ(a.samples, generate_source(32000, 12).samples);
  EXPECT_NE(a.samples, generate_source(32000, 13).samples);
  EXPECT_NEAR(std::sqrt(a.samples.squaredNorm() / 32000.0), 0.05, 1e-12);
}

TEST(Noise, PinkHasLowpassTilt) {
  const Eigen::MatrixXd pink = generate_noise(1, 64000, NoiseColor::kPink, 14);
  const Eigen::MatrixXd white = generate_noise(1, 64000, NoiseColor::kWhite, 14);
  auto diff_ratio = [](const Eigen::MatrixXd& x) {
    const Eigen::RowVectorXd d = x.row(0).tail(x.cols() - 1) - x.row(0).head(x.cols() - 1);
    return d.squaredNorm() / x.squaredNorm();
  };
  EXPECT_NEAR(diff_ratio(white), 2.0, 0.05);
  EXPECT_LT(diff_ratio(pink), 0.5);
}

TEST(Scene, SnrMatchesRequest) {
  const RoomScene s = make_scene(quick_scene(15));
  const double snr = measured_snr_db(s);
  EXPECT_GE(snr, 19.9);
  EXPECT_LE(snr, 20.1);
}

TEST(Scene, ComponentsAddExactly) {
  for (std::uint64_t seed : {16u, 17u, 18u}) {
    const RoomScene s = make_scene(quick_scene(seed));
    const Eigen::MatrixXd sum = (s.desired.samples + s.late.samples) + s.noise.samples;
    EXPECT_EQ(s.mixture.samples, sum) << seed;
    EXPECT_EQ(s.mixture.channels(), 4);
    EXPECT_EQ(s.mixture.length(), 32000);
  }
}

TEST(Scene, InfiniteSnrHasNoNoise) {
  SceneSpec spec = quick_scene(19);
  spec.snr_db = std::numeric_limits<double>::infinity();
  const RoomScene s = make_scene(spec);
  EXPECT_EQ(s.noise.samples.cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.mixture.samples, s.desired.samples + s.late.samples);
}

TEST(Scene, EarlyWindowCoveringRirLeavesNoLate) {
  SceneSpec spec = quick_scene(20);
  spec.early_ms = 2000.0;
  const RoomScene s = make_scene(spec);
  EXPECT_EQ(s.late.samples.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Scene, HeadRegionIsNoiseOnly) {
  const SceneSpec spec = quick_scene(21);
  const RoomScene s = make_scene(spec);
  const Eigen::Index head = 4800;
  EXPECT_EQ(s.clean.samples.leftCols(head).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.desired.samples.leftCols(head).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.late.samples.leftCols(head).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_EQ(s.mixture.samples.leftCols(head), s.noise.samples.leftCols(head));
  EXPECT_GT(s.noise.samples.leftCols(head).squaredNorm(), 0.0);
}

// The source is silent in the tail; only reverberation of earlier speech
// reaches it, and the desired part ends one early window in.
TEST(Scene, TailRegionHasNoDirectSpeech) {
  const SceneSpec spec = quick_scene(22);
  const RoomScene s = make_scene(spec);
  const Eigen::Index tail = 4800, n = spec.samples();
  EXPECT_EQ(s.clean.samples.rightCols(tail).cwiseAbs().maxCoeff(), 0.0);
  const Eigen::Index after = tail - spec.early_samples();
  const double peak = s.desired.samples.cwiseAbs().maxCoeff();
  EXPECT_LT(s.desired.samples.rightCols(after).cwiseAbs().maxCoeff(), 1e-12 * peak);
  const double late_tail = s.late.samples.rightCols(tail).squaredNorm() / tail;
  const double late_body = s.late.samples.middleCols(4800, n - 9600).squaredNorm() / (n - 9600);
  EXPECT_LT(late_tail, late_body);
}

TEST(Scene, Deterministic) {
  const RoomScene a = make_scene(quick_scene(23));
  const RoomScene b = make_scene(quick_scene(23));
  EXPECT_EQ(a.mixture.samples, b.mixture.samples);
  EXPECT_EQ(a.rirs, b.rirs);
  EXPECT_NE(a.mixture.samples, make_scene(quick_scene(24)).mixture.samples);
}

TEST(Scene, DesiredIsEarlyConvolution) {
  SceneSpec spec = quick_scene(25);
  spec.snr_db = std::numeric_limits<double>::infinity();
  const RoomScene s = make_scene(spec);
  const Eigen::Index early = spec.early_samples();
  for (Eigen::Index i : {6000, 12345, 20000}) {
    for (Eigen::Index m = 0; m < 4; ++m) {
      double d = 0.0, l = 0.0;
      for (Eigen::Index k = 0; k < s.rirs.cols() && k <= i; ++k)
        (k < early ? d : l) += s.rirs(m, k) * s.clean.samples(0, i - k);
      EXPECT_NEAR(s.desired.samples(m, i), d, 1e-12) << i << " " << m;
      EXPECT_NEAR(s.late.samples(m, i), l, 1e-12) << i << " " << m;
    }
  }
}

TEST(Scene, ValidationErrors) {
  SceneSpec s = quick_scene(1);
  s.head_silence_ms = 200.0;
  EXPECT_THROW(make_scene(s), UsageError);
  s = quick_scene(1);
  s.tail_silence_ms = 50.0;
  EXPECT_THROW(make_scene(s), UsageError);
  s = quick_scene(1);
  s.duration_s = 0.5;
  EXPECT_THROW(make_scene(s), UsageError);
  s = quick_scene(1);
  s.t60 = -0.1;
  EXPECT_THROW(make_scene(s), UsageError);
  s = quick_scene(1);
  EXPECT_THROW(mix_scene(s, AudioBuffer(Eigen::MatrixXd::Zero(1, 100), 16000)), SizeError);
  EXPECT_THROW(mix_scene(s, AudioBuffer(Eigen::MatrixXd::Zero(1, 32000), 8000)), SizeError);
}

TEST(EnergyRatio, HandComputed) {
  Eigen::VectorXd h(4);
  h << 1.0, 0.0, 0.5, 0.5;
  EXPECT_NEAR(energy_ratio_db(h, 1), 10.0 * std::log10(2.0), 1e-12);
  EXPECT_NEAR(energy_ratio_db(h, 3), 10.0 * std::log10(1.25 / 0.25), 1e-12);
  EXPECT_EQ(energy_ratio_db(h, 4), std::numeric_limits<double>::infinity());
  EXPECT_EQ(energy_ratio_db(h, 99), std::numeric_limits<double>::infinity());
}
