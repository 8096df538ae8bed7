// convbf: command-line front end.
//
//   convbf enhance [flags] in.wav out.wav
//   convbf bench   [flags] spec.cfg out.csv
//   convbf metrics [--id ID] [--method NAME] reference.wav test.wav
//   convbf simulate [flags] spec.cfg out_dir
//
// Exit codes: 0 ok, 1 usage, 2 I/O, 3 numeric failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "convbf/convbf.hpp"

namespace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level() {
  const char* env = std::getenv("CONVBF_LOG");
  if (env == nullptr) return LogLevel::kWarn;
  const std::string v(env);
  if (v == "error") return LogLevel::kError;
  if (v == "info") return LogLevel::kInfo;
  if (v == "debug") return LogLevel::kDebug;
  return LogLevel::kWarn;
}

void log(LogLevel level, const std::string& msg) {
  static const LogLevel threshold = log_level();
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= threshold) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << "\n";
}

// Flags shared by enhance, bench and simulate. Values left unset keep the
// config file (or built-in default) setting.
struct Overrides {
  std::optional<std::string> config, method, schedule, noise;
  std::optional<int> delay, lw, iterations, ref_channel, jobs, count, channels;
  std::optional<double> head_ms, tail_ms, loading, t60, snr_db;
  std::optional<long long> seed;

  void attach(CLI::App* app, bool scene_flags) {
    app->add_option("--config", config, "Configuration file (key = value with [sections])");
    app->add_option("--method", method, "wpe | mpdr | cascade | wpd")
        ->check(CLI::IsMember({"wpe", "mpdr", "cascade", "wpd"}));
    app->add_option("--delay", delay, "Prediction delay b in frames");
    app->add_option("--schedule", schedule, "Band orders as hi_hz:L_w,... from 0 Hz upward");
    app->add_option("--lw", lw, "Use one regression order L_w for every band");
    app->add_option("--iterations", iterations, "Parameter-estimation iterations");
    app->add_option("--ref-channel", ref_channel, "Reference channel q");
    app->add_option("--head-ms", head_ms, "Leading noise-only duration (ms)");
    app->add_option("--tail-ms", tail_ms, "Trailing noise-only duration (ms)");
    app->add_option("--loading", loading, "Relative diagonal loading");
    app->add_option("--jobs", jobs, "Worker threads");
    app->add_option("--seed", seed, "Base scene seed");
    if (scene_flags) {
      app->add_option("--count", count, "Number of scenes");
      app->add_option("--channels", channels, "Microphones per scene");
      app->add_option("--t60", t60, "Fixed reverberation time (s)");
      app->add_option("--snr-db", snr_db, "Scene SNR in dB (inf disables noise)");
      app->add_option("--noise", noise, "white | pink");
    }
  }

  convbf::CliConfig resolve() const {
    convbf::CliConfig cfg;
    if (config) convbf::parse_config_file(cfg, *config);
    auto set = [&](const char* section, const char* key, const auto& v) {
      if (!v) return;
      std::ostringstream os;
      os.precision(17);
      os << *v;
      convbf::apply_setting(cfg, section, key, os.str());
    };
    set("pipeline", "method", method);
    set("pipeline", "delay", delay);
    set("pipeline", "schedule", schedule);
    set("pipeline", "lw", lw);
    set("pipeline", "iterations", iterations);
    set("pipeline", "ref_channel", ref_channel);
    set("pipeline", "head_ms", head_ms);
    set("pipeline", "tail_ms", tail_ms);
    set("pipeline", "loading", loading);
    set("pipeline", "jobs", jobs);
    set("scene", "seed", seed);
    set("scene", "count", count);
    set("scene", "channels", channels);
    set("scene", "t60", t60);
    set("scene", "snr_db", snr_db);
    set("scene", "noise", noise);
    cfg.resolve();
    return cfg;
  }
};

void echo_config(const convbf::CliConfig& cfg) {
  std::cerr << "# resolved configuration\n" << cfg.to_text();
}

void print_summary(const convbf::Diagnostics& diag, const convbf::PipelineConfig& cfg,
                   double seconds) {
  const auto orders = convbf::orders_for_bins(cfg.schedule, cfg.stft);
  std::cout << "method: " << convbf::method_name(diag.method) << "\n";
  for (std::size_t b = 0; b < cfg.schedule.bands.size(); ++b) {
    const auto& band = cfg.schedule.bands[b];
    double worst = 0.0;
    for (int f = 0; f < cfg.stft.num_bins(); ++f) {
      const double hz = cfg.stft.bin_frequency(f);
      const bool last = b + 1 == cfg.schedule.bands.size();
      if (hz >= band.lo_hz && (hz < band.hi_hz || last))
        worst = std::max(worst, diag.bins[f].condition);
    }
    std::printf("band %6.0f-%6.0f Hz  L_w=%2d  max condition %.3e\n", band.lo_hz, band.hi_hz,
                band.order, worst);
  }
  std::printf("max constraint residual: %.3e\n", diag.max_constraint_residual());
  std::printf("weighted output power: %.6e\n", diag.total_weighted_power());
  std::printf("failed bins: %d of %zu\n", diag.failed_bins(), diag.bins.size());
  std::printf("runtime: %.3f s\n", seconds);
}

void write_diagnostics(const std::string& path, const convbf::Diagnostics& diag) {
  std::ofstream out(path);
  if (!out) throw convbf::IoError("cannot open '" + path + "' for writing");
  out << "bin,weighted_power,constraint_residual,condition,failed,message\n";
  char buf[256];
  for (std::size_t f = 0; f < diag.bins.size(); ++f) {
    const auto& b = diag.bins[f];
    std::snprintf(buf, sizeof buf, "%zu,%.9e,%.3e,%.3e,%d,", f, b.weighted_power,
                  b.constraint_residual, b.condition, b.failed ? 1 : 0);
    out << buf << b.message << "\n";
  }
}

int run_enhance(const Overrides& ov, const std::string& in, const std::string& out,
                const std::string& encoding, const std::string& diag_path) {
  convbf::CliConfig cfg = ov.resolve();
  echo_config(cfg);
  const auto start = std::chrono::steady_clock::now();
  const convbf::AudioBuffer input = convbf::read_wav(in);
  log(LogLevel::kInfo, "read " + std::to_string(input.channels()) + " channels, " +
                           std::to_string(input.length()) + " samples");
  const convbf::EnhanceResult result = convbf::enhance(input, cfg.pipeline);
  for (const auto& w : result.diagnostics.warnings) log(LogLevel::kWarn, w);
  const std::size_t clipped = convbf::write_wav(
      out, result.audio,
      encoding == "int16" ? convbf::WavEncoding::kInt16 : convbf::WavEncoding::kFloat32);
  if (clipped > 0) log(LogLevel::kWarn, std::to_string(clipped) + " samples clipped on write");
  if (!diag_path.empty()) write_diagnostics(diag_path, result.diagnostics);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  print_summary(result.diagnostics, cfg.pipeline, secs);
  return 0;
}

int run_bench(const Overrides& ov, const std::string& spec_file, const std::string& out_csv) {
  Overrides with_file = ov;
  with_file.config = spec_file;
  const convbf::CliConfig cfg = with_file.resolve();
  echo_config(cfg);
  const auto rows = convbf::run_bench(cfg.bench, cfg.pipeline, cfg.pipeline.jobs);
  std::ofstream out(out_csv, std::ios::binary | std::ios::trunc);
  if (!out) throw convbf::IoError("cannot open '" + out_csv + "' for writing");
  out << convbf::bench_csv(rows);
  if (!out) throw convbf::IoError("write failure on '" + out_csv + "'");
  int failures = 0;
  for (const auto& r : rows) failures += r.status == "ok" ? 0 : 1;
  if (failures > 0) log(LogLevel::kWarn, std::to_string(failures) + " rows recorded failures");
  std::cout << rows.size() << " rows written to " << out_csv << "\n";
  return 0;
}

int run_metrics(const std::string& ref, const std::string& test, const std::string& id,
                const std::string& method) {
  const convbf::AudioBuffer r = convbf::read_wav(ref);
  const convbf::AudioBuffer t = convbf::read_wav(test);
  const convbf::MetricReport rep = convbf::evaluate(r.channel(0), t.channel(0));
  std::printf("utterance,method,cd,fwssnr\n%s,%s,%.6f,%.6f\n", id.c_str(), method.c_str(), rep.cd,
              rep.fwssnr);
  return 0;
}

int run_simulate(const Overrides& ov, const std::string& spec_file, const std::string& dir) {
  Overrides with_file = ov;
  with_file.config = spec_file;
  const convbf::CliConfig cfg = with_file.resolve();
  echo_config(cfg);
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw convbf::IoError("output directory '" + dir + "' does not exist");
  for (int i = 0; i < cfg.bench.count; ++i) {
    const convbf::RoomScene scene = convbf::make_scene(cfg.bench.scene_at(i));
    const std::string stem = (fs::path(dir) / ("scene" + std::to_string(i) + "_")).string();
    convbf::write_wav(stem + "mixture.wav", scene.mixture);
    convbf::write_wav(stem + "desired.wav", scene.desired);
    convbf::write_wav(stem + "late.wav", scene.late);
    convbf::write_wav(stem + "noise.wav", scene.noise);
    convbf::write_wav(stem + "clean.wav", scene.clean);
  }
  std::cout << cfg.bench.count << " scenes written to " << dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional beamforming for joint denoising and dereverberation"};
  app.require_subcommand(1);

  Overrides enhance_ov, bench_ov, sim_ov;
  std::string in_wav, out_wav, encoding = "float32", diag_path;
  auto* enhance = app.add_subcommand("enhance", "Enhance a multichannel WAV file");
  enhance_ov.attach(enhance, false);
  enhance->add_option("--encoding", encoding, "Output encoding")
      ->check(CLI::IsMember({"float32", "int16"}));
  enhance->add_option("--diagnostics", diag_path, "Write per-bin diagnostics CSV");
  enhance->add_option("input", in_wav, "Input multichannel WAV")->required();
  enhance->add_option("output", out_wav, "Output single-channel WAV")->required();

  std::string spec_file, out_csv;
  auto* bench = app.add_subcommand("bench", "Benchmark all methods on seeded synthetic scenes");
  bench_ov.attach(bench, true);
  bench->add_option("spec", spec_file, "Scene/pipeline configuration file")->required();
  bench->add_option("output", out_csv, "CSV output path")->required();

  std::string ref_wav, test_wav, utt_id = "utt", method_label = "-";
  auto* metrics = app.add_subcommand("metrics", "Cepstral distance and FWSSNR of a test signal");
  metrics->add_option("--id", utt_id, "Utterance id for the CSV row");
  metrics->add_option("--method", method_label, "Method label for the CSV row");
  metrics->add_option("reference", ref_wav, "Reference WAV (channel 0 used)")->required();
  metrics->add_option("test", test_wav, "Test WAV (channel 0 used)")->required();

  std::string sim_spec, sim_dir;
  auto* simulate = app.add_subcommand("simulate", "Write synthetic scenes as WAV sets");
  sim_ov.attach(simulate, true);
  simulate->add_option("spec", sim_spec, "Scene configuration file")->required();
  simulate->add_option("output_dir", sim_dir, "Existing output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*enhance) return run_enhance(enhance_ov, in_wav, out_wav, encoding, diag_path);
    if (*bench) return run_bench(bench_ov, spec_file, out_csv);
    if (*metrics) return run_metrics(ref_wav, test_wav, utt_id, method_label);
    if (*simulate) return run_simulate(sim_ov, sim_spec, sim_dir);
  } catch (const convbf::UsageError& e) {
    log(LogLevel::kError, std::string("usage: ") + e.what());
    return 1;
  } catch (const convbf::IoError& e) {
    log(LogLevel::kError, e.what());
    return 2;
  } catch (const convbf::FormatError& e) {
    log(LogLevel::kError, e.what());
    return 2;
  } catch (const convbf::Error& e) {
    log(LogLevel::kError, e.what());
    return 3;
  }
  return 1;
}
