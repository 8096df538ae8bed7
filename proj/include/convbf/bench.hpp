// Seeded benchmark over synthetic scenes: every method filters each scene
// with the same parameter snapshot and is scored against the desired signal
// at the reference channel. drr_gain is the change in desired-to-late energy
// ratio of the effective impulse response at the reference channel.
#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "convbf/config.hpp"
#include "convbf/metrics.hpp"
#include "convbf/parallel.hpp"
#include "convbf/pipeline.hpp"
#include "convbf/simulate.hpp"

namespace convbf {

inline constexpr Method kAllMethods[] = {Method::kWpe, Method::kMpdr, Method::kCascade, Method::kWpd};

struct BenchRow {
  int scene = 0;
  Method method = Method::kWpd;
  std::string status = "ok";
  double t60 = 0.0;
  double cd = std::numeric_limits<double>::quiet_NaN();
  double fwssnr = std::numeric_limits<double>::quiet_NaN();
  double weighted_power = std::numeric_limits<double>::quiet_NaN();
  double drr_gain = std::numeric_limits<double>::quiet_NaN();
  double cd_in = std::numeric_limits<double>::quiet_NaN();
  double fwssnr_in = std::numeric_limits<double>::quiet_NaN();
};

// The scene's impulse responses followed by a frame of silence, so that the
// per-bin filters can be applied to them and the effective response measured.
inline AudioBuffer impulse_probe(const RoomScene& scene, const StftConfig& stft) {
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(scene.rirs.rows(), scene.rirs.cols() + stft.frame_len);
  h.leftCols(scene.rirs.cols()) = scene.rirs;
  return AudioBuffer(h, scene.mixture.sample_rate);
}

// Scores one scene with every method; rows come back in kAllMethods order.
inline std::vector<BenchRow> bench_scene(const SceneSpec& spec, int index,
                                         const PipelineConfig& base) {
  std::vector<BenchRow> rows;
  for (Method m : kAllMethods) {
    BenchRow r;
    r.scene = index;
    r.method = m;
    r.t60 = spec.t60;
    rows.push_back(r);
  }
  try {
    PipelineConfig cfg = base;
    cfg.jobs = 1;
    const RoomScene scene = make_scene(spec);
    const int q = cfg.reference;
    const AudioBuffer reference = scene.desired.channel(q);
    const AudioBuffer unprocessed = scene.mixture.channel(q);
    const MetricReport in = evaluate(reference, unprocessed);
    const Eigen::Index early = spec.early_samples();
    const double drr_in = energy_ratio_db(scene.rirs.row(q).transpose(), early);

    const MultichannelSpectrogram spec_x = analyze_padded(scene.mixture, cfg.stft);
    const MultichannelSpectrogram spec_h = analyze_padded(impulse_probe(scene, cfg.stft), cfg.stft);
    const ParameterSnapshot snap = estimate_parameters(spec_x, cfg);
    for (BenchRow& r : rows) {
      try {
        const MethodOutput out = filter_with_snapshot(spec_x, snap, r.method, cfg, &spec_h);
        const int failed = out.diagnostics.failed_bins();
        if (failed > kMaxFailedBinFraction * spec_x.bins())
          throw PipelineFailure(std::to_string(failed) + " bins failed");
        const AudioBuffer y = synthesize(single_channel(out.output, spec_x));
        const MetricReport rep = evaluate(reference, y);
        r.cd = rep.cd;
        r.fwssnr = rep.fwssnr;
        r.weighted_power = out.diagnostics.total_weighted_power();
        const AudioBuffer h = synthesize(single_channel(out.probe_output, spec_h));
        r.drr_gain = energy_ratio_db(h.samples.row(0).transpose(), early) - drr_in;
        r.cd_in = in.cd;
        r.fwssnr_in = in.fwssnr;
      } catch (const Error& e) {
        r.status = std::string("error: ") + e.what();
      }
    }
  } catch (const Error& e) {
    for (BenchRow& r : rows) r.status = std::string("error: ") + e.what();
  }
  return rows;
}

inline std::vector<BenchRow> run_bench(const BenchSpec& bench, const PipelineConfig& cfg, int jobs) {
  bench.validate();
  cfg.validate();
  std::vector<std::vector<BenchRow>> per_scene(bench.count);
  parallel_for(static_cast<std::size_t>(bench.count), jobs, [&](std::size_t i) {
    per_scene[i] = bench_scene(bench.scene_at(static_cast<int>(i)), static_cast<int>(i), cfg);
  });
  std::vector<BenchRow> rows;
  for (auto& s : per_scene) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

inline std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream os;
  os << "scene,method,status,t60,cd,fwssnr,weighted_power,drr_gain,cd_in,fwssnr_in\n";
  char buf[512];
  for (const BenchRow& r : rows) {
    std::string status = r.status;
    for (char& c : status)
      if (c == ',' || c == '\n') c = ';';
    std::snprintf(buf, sizeof buf, "%d,%s,%s,%.4f,%.6f,%.6f,%.9e,%.6f,%.6f,%.6f\n", r.scene,
                  method_name(r.method), status.c_str(), r.t60, r.cd, r.fwssnr, r.weighted_power,
                  r.drr_gain, r.cd_in, r.fwssnr_in);
    os << buf;
  }
  return os.str();
}

}  // namespace convbf
