// Flat "key = value" configuration with [sections], mapping onto
// PipelineConfig and the benchmark scene generator.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "convbf/error.hpp"
#include "convbf/pipeline.hpp"
#include "convbf/simulate.hpp"

namespace convbf {

struct BenchSpec {
  SceneSpec scene;  // t60 and seed are overridden per scene
  double t60_min = 0.25;
  double t60_max = 0.7;
  int count = 20;
  std::uint64_t seed = 1;

  void validate() const {
    if (count < 1) throw UsageError("bench scene count must be >= 1");
    if (!(t60_min > 0.0) || t60_max < t60_min) throw UsageError("invalid T60 range");
    SceneSpec probe = scene;
    probe.t60 = t60_min;
    probe.validate();
  }

  // Scene i: seed = seed + i, T60 drawn uniformly from [t60_min, t60_max].
  SceneSpec scene_at(int i) const {
    SceneSpec s = scene;
    s.seed = seed + static_cast<std::uint64_t>(i);
    const std::uint64_t h = sim_detail::stream_seed(s.seed, 7);
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    s.t60 = t60_min + (t60_max - t60_min) * u;
    return s;
  }
};

struct CliConfig {
  PipelineConfig pipeline;
  BenchSpec bench;
  std::string schedule_text;  // empty: default schedule
  int uniform_order = 0;      // nonzero: one L_w for every band

  // Rebuilds the schedule from the textual overrides and validates.
  void resolve() {
    const int delay = pipeline.schedule.delay;
    if (!schedule_text.empty()) {
      pipeline.schedule = parse_schedule(schedule_text, delay);
    } else {
      pipeline.schedule = default_schedule(pipeline.stft.sample_rate);
      pipeline.schedule.delay = delay;
    }
    if (uniform_order != 0)
      for (Band& b : pipeline.schedule.bands) b.order = uniform_order;
    pipeline.validate();
    bench.validate();
  }

  std::string to_text() const {
    std::ostringstream os;
    os.precision(17);
    const auto& p = pipeline;
    os << "[pipeline]\n"
       << "method = " << method_name(p.method) << "\n"
       << "delay = " << p.schedule.delay << "\n"
       << "schedule = " << p.schedule.to_string() << "\n"
       << "iterations = " << p.iterations << "\n"
       << "ref_channel = " << p.reference << "\n"
       << "head_ms = " << p.head_ms << "\n"
       << "tail_ms = " << p.tail_ms << "\n"
       << "loading = " << p.loading << "\n"
       << "frame_ms = " << 1000.0 * p.stft.frame_len / p.stft.sample_rate << "\n"
       << "hop_ms = " << 1000.0 * p.stft.hop / p.stft.sample_rate << "\n"
       << "sample_rate = " << p.stft.sample_rate << "\n"
       << "jobs = " << p.jobs << "\n";
    const auto& s = bench.scene;
    os << "[scene]\n"
       << "channels = " << s.channels << "\n"
       << "t60_min = " << bench.t60_min << "\n"
       << "t60_max = " << bench.t60_max << "\n"
       << "snr_db = " << s.snr_db << "\n"
       << "early_ms = " << s.early_ms << "\n"
       << "duration_s = " << s.duration_s << "\n"
       << "head_silence_ms = " << s.head_silence_ms << "\n"
       << "tail_silence_ms = " << s.tail_silence_ms << "\n"
       << "direct_spread_ms = " << s.direct_spread_ms << "\n"
       << "reverb_ratio = " << s.reverb_ratio << "\n"
       << "noise = " << (s.noise == NoiseColor::kWhite ? "white" : "pink") << "\n"
       << "count = " << bench.count << "\n"
       << "seed = " << bench.seed << "\n";
    return os.str();
  }
};

namespace config_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "+inf") return std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used == v.size()) return d;
  } catch (const std::exception&) {
  }
  throw UsageError("key '" + key + "' expects a number, got '" + v + "'");
}

inline long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used == v.size()) return i;
  } catch (const std::exception&) {
  }
  throw UsageError("key '" + key + "' expects an integer, got '" + v + "'");
}

}  // namespace config_detail

// Applies one setting; unknown sections or keys are rejected.
inline void apply_setting(CliConfig& cfg, const std::string& section, const std::string& key,
                          const std::string& value) {
  using config_detail::to_double;
  using config_detail::to_int;
  auto& p = cfg.pipeline;
  auto& s = cfg.bench.scene;
  if (section == "pipeline") {
    if (key == "method") p.method = parse_method(value);
    else if (key == "delay") p.schedule.delay = static_cast<int>(to_int(key, value));
    else if (key == "schedule") cfg.schedule_text = value;
    else if (key == "lw") cfg.uniform_order = static_cast<int>(to_int(key, value));
    else if (key == "iterations") p.iterations = static_cast<int>(to_int(key, value));
    else if (key == "ref_channel") p.reference = static_cast<int>(to_int(key, value));
    else if (key == "head_ms") p.head_ms = to_double(key, value);
    else if (key == "tail_ms") p.tail_ms = to_double(key, value);
    else if (key == "loading") p.loading = to_double(key, value);
    else if (key == "jobs") p.jobs = static_cast<int>(to_int(key, value));
    else if (key == "sample_rate" || key == "frame_ms" || key == "hop_ms") {
      const double frame_ms = key == "frame_ms" ? to_double(key, value)
                                                : 1000.0 * p.stft.frame_len / p.stft.sample_rate;
      const double hop_ms = key == "hop_ms" ? to_double(key, value)
                                            : 1000.0 * p.stft.hop / p.stft.sample_rate;
      const int rate = key == "sample_rate" ? static_cast<int>(to_int(key, value)) : p.stft.sample_rate;
      p.stft = StftConfig::from_durations(rate, frame_ms, hop_ms);
      s.sample_rate = rate;
    } else throw UsageError("unknown key '" + key + "' in section [pipeline]");
  } else if (section == "scene") {
    if (key == "channels") s.channels = static_cast<int>(to_int(key, value));
    else if (key == "t60") cfg.bench.t60_min = cfg.bench.t60_max = to_double(key, value);
    else if (key == "t60_min") cfg.bench.t60_min = to_double(key, value);
    else if (key == "t60_max") cfg.bench.t60_max = to_double(key, value);
    else if (key == "snr_db") s.snr_db = to_double(key, value);
    else if (key == "early_ms") s.early_ms = to_double(key, value);
    else if (key == "duration_s") s.duration_s = to_double(key, value);
    else if (key == "head_silence_ms") s.head_silence_ms = to_double(key, value);
    else if (key == "tail_silence_ms") s.tail_silence_ms = to_double(key, value);
    else if (key == "direct_spread_ms") s.direct_spread_ms = to_double(key, value);
    else if (key == "reverb_ratio") s.reverb_ratio = to_double(key, value);
    else if (key == "noise") {
      if (value == "white") s.noise = NoiseColor::kWhite;
      else if (value == "pink") s.noise = NoiseColor::kPink;
      else throw UsageError("noise must be white or pink");
    } else if (key == "count") cfg.bench.count = static_cast<int>(to_int(key, value));
    else if (key == "seed") cfg.bench.seed = static_cast<std::uint64_t>(to_int(key, value));
    else throw UsageError("unknown key '" + key + "' in section [scene]");
  } else {
    throw UsageError("unknown section [" + section + "]");
  }
}

inline void parse_config_text(CliConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::string section = "pipeline";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = config_detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw UsageError("line " + std::to_string(lineno) + ": bad section header");
      section = config_detail::trim(line.substr(1, line.size() - 2));
      if (section != "pipeline" && section != "scene")
        throw UsageError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError("line " + std::to_string(lineno) + ": expected key = value");
    apply_setting(cfg, section, config_detail::trim(line.substr(0, eq)),
                  config_detail::trim(line.substr(eq + 1)));
  }
}

inline void parse_config_file(CliConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  parse_config_text(cfg, ss.str());
}

}  // namespace convbf
