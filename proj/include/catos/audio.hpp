#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catos/rng.hpp"
#include "catos/util.hpp"

namespace catos::audio {

inline constexpr int kDefaultSampleRate = 16000;

struct AudioBuffer {
  int sample_rate = kDefaultSampleRate;
  std::vector<std::int16_t> samples;
  std::int64_t t_start_ms = 0;

  std::int64_t duration_ms() const {
    return static_cast<std::int64_t>(samples.size()) * 1000 / sample_rate;
  }
};

struct StimulusSpec {
  int stimulus_id = 0;
  double tone_hz = 440;
  std::int64_t duration_ms = 500;
};

/// The three default stimuli: 440, 660 and 880 Hz, 500 ms each.
std::vector<StimulusSpec> default_stimuli();

/// Throws unless ids are unique and tone frequencies distinct.
void validate_stimuli(std::span<const StimulusSpec> specs);

/// Sine at tone_hz, half full scale, 10 ms linear fades at both ends.
AudioBuffer synth_stimulus(const StimulusSpec& spec, int sample_rate = kDefaultSampleRate);

/// Adds src into dst (saturating), aligned by t_start_ms. Both must share a
/// sample rate.
void mix_into(AudioBuffer& dst, const AudioBuffer& src);

/// Uniform noise of +-amplitude on every sample (saturating).
void add_noise(AudioBuffer& buf, int amplitude, SplitMix64& rng);

double dbfs_to_amplitude(double dbfs);

// ---------------------------------------------------------------------------
// WAV: canonical RIFF/WAVE, PCM, mono, 16-bit little-endian.

std::string wav_encode(const AudioBuffer& buf);
/// Throws Error with kind MalformedHeader, NotPcm or Truncated.
AudioBuffer wav_decode(std::string_view bytes);
void wav_write(const AudioBuffer& buf, const fs::path& path);
AudioBuffer wav_read(const fs::path& path);

// ---------------------------------------------------------------------------
// Onset detection and classification

struct ClassifyParams {
  double rms_threshold_dbfs = -30.0;
  std::int64_t window_ms = 10;
  std::int64_t analysis_ms = 300;
};

struct Classification {
  int stimulus_id = 0;
  std::int64_t t_onset_ms = 0;
  double confidence = 0;
  std::vector<double> energies;  // one per template, template order
};

/// Squared magnitude of the DTFT of `samples` at `freq_hz` (Goertzel).
double goertzel_power(std::span<const std::int16_t> samples, double freq_hz, int sample_rate);

/// RMS of each consecutive window; the last partial window is dropped.
std::vector<double> window_rms(const AudioBuffer& buf, std::int64_t window_ms);

/// First window whose RMS exceeds the threshold marks the onset; the
/// following analysis_ms are scored against each template's tone.
std::optional<Classification> classify_onset(const AudioBuffer& stream,
                                             std::span<const StimulusSpec> templates,
                                             const ClassifyParams& params = {});

}  // namespace catos::audio
