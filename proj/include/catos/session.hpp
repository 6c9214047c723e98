#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "catos/audio.hpp"
#include "catos/recorder.hpp"
#include "catos/rigsim.hpp"
#include "catos/schema.hpp"
#include "catos/util.hpp"
#include "catos/vision.hpp"

namespace catos::session {

struct CameraConfig {
  int count = 1;
  double fps = 7.5;
  int width = 96;
  int height = 72;
  int noise_amplitude = 3;
  /// Off skips writing clip frames; gating and movement records still run.
  bool record_clips = true;
};

struct AudioConfig {
  int sample_rate = audio::kDefaultSampleRate;
  std::vector<audio::StimulusSpec> stimuli = audio::default_stimuli();
  audio::ClassifyParams classify;
  int mic_noise_amplitude = 30;
  std::int64_t capture_pre_ms = 100;
  std::int64_t capture_post_ms = 200;
  double vocal_hz = 520;
};

struct RunConfig {
  std::optional<std::uint64_t> seed;
  std::int64_t duration_ms = 2 * 3600 * 1000;
  std::string session_start = "2013-03-01T09:00:00";
  fs::path output_dir = "output";
  fs::path archive_root = "archive";
  CameraConfig camera;
  vision::DetectParams vision;
  vision::GateParams gate;
  AudioConfig audio;
  schema::SchemaConfig schema;
  rig::RigConfig rig;
};

/// Parses and validates a run configuration. Unknown keys are errors; every
/// problem is reported in one Config error, one per line.
RunConfig run_config_from_json(const Json& j);
RunConfig load_run_config(const fs::path& path);
Json to_json(const RunConfig& c);

/// Throws a Config error listing every violated constraint.
void validate(const RunConfig& c);

struct RunReport {
  std::string session_id;
  std::int64_t observed_ms = 0;
  schema::SessionSummary summary;
  std::vector<std::vector<vision::ClipManifest>> clips;  // per camera
  std::vector<rig::Interval> agent_visits;
  std::uint64_t frames = 0;
  std::uint64_t dispense_commands = 0;
  std::uint64_t piezo_hits = 0;
  int hopper_left = 0;
  int hopper_initial = 0;
  std::uint64_t bus_published = 0;
};

/// Runs one simulated session into config.output_dir, which must be empty or
/// absent. Everything is driven by simulated time from the seed.
RunReport run_session(const RunConfig& config);

}  // namespace catos::session
