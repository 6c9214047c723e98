#include "catos/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <set>

#include "catos/error.hpp"

namespace catos::audio {

std::vector<StimulusSpec> default_stimuli() {
  return {{0, 440.0, 500}, {1, 660.0, 500}, {2, 880.0, 500}};
}

void validate_stimuli(std::span<const StimulusSpec> specs) {
  if (specs.empty()) throw Error(ErrorKind::InvalidArgument, "at least one stimulus is required");
  std::set<int> ids;
  std::set<double> tones;
  for (const auto& s : specs) {
    if (!ids.insert(s.stimulus_id).second) {
      throw Error(ErrorKind::InvalidArgument, "duplicate stimulus id " + std::to_string(s.stimulus_id));
    }
    if (!tones.insert(s.tone_hz).second) {
      throw Error(ErrorKind::InvalidArgument, "stimulus tones must be distinct");
    }
  }
}

AudioBuffer synth_stimulus(const StimulusSpec& spec, int sample_rate) {
  if (sample_rate <= 0) throw Error(ErrorKind::InvalidArgument, "sample rate must be positive");
  if (spec.duration_ms <= 0) throw Error(ErrorKind::InvalidArgument, "stimulus duration must be positive");
  if (!(spec.tone_hz > 0) || spec.tone_hz >= sample_rate / 2.0) {
    throw Error(ErrorKind::InvalidArgument, "tone must lie strictly between 0 and the Nyquist frequency");
  }
  const auto n = static_cast<std::size_t>(spec.duration_ms * sample_rate / 1000);
  const double fade = 10.0 * sample_rate / 1000.0;
  const double amp = 0.5 * 32767.0;
  const double w = 2.0 * std::numbers::pi * spec.tone_hz / sample_rate;
  AudioBuffer buf{sample_rate, std::vector<std::int16_t>(n), 0};
  for (std::size_t i = 0; i < n; ++i) {
    const double in = static_cast<double>(i) / fade;
    const double out = static_cast<double>(n - 1 - i) / fade;
    const double env = std::min({1.0, in, out});
    buf.samples[i] = static_cast<std::int16_t>(std::lround(amp * env * std::sin(w * static_cast<double>(i))));
  }
  return buf;
}

namespace {

std::int16_t saturate(std::int32_t v) {
  return static_cast<std::int16_t>(std::clamp<std::int32_t>(v, -32768, 32767));
}

}  // namespace

void mix_into(AudioBuffer& dst, const AudioBuffer& src) {
  if (dst.sample_rate != src.sample_rate) throw Error(ErrorKind::InvalidArgument, "sample rates differ");
  const std::int64_t offset = (src.t_start_ms - dst.t_start_ms) * dst.sample_rate / 1000;
  for (std::size_t i = 0; i < src.samples.size(); ++i) {
    const std::int64_t j = offset + static_cast<std::int64_t>(i);
    if (j < 0 || j >= static_cast<std::int64_t>(dst.samples.size())) continue;
    auto& d = dst.samples[static_cast<std::size_t>(j)];
    d = saturate(std::int32_t{d} + src.samples[i]);
  }
}

void add_noise(AudioBuffer& buf, int amplitude, SplitMix64& rng) {
  if (amplitude <= 0) return;
  for (auto& s : buf.samples) {
    s = saturate(std::int32_t{s} + static_cast<std::int32_t>(rng.uniform_int(-amplitude, amplitude)));
  }
}

double dbfs_to_amplitude(double dbfs) { return 32767.0 * std::pow(10.0, dbfs / 20.0); }

// ---------------------------------------------------------------------------

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

std::uint32_t get_u32(std::string_view b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<std::uint8_t>(b[at + i]);
  return v;
}

std::uint16_t get_u16(std::string_view b, std::size_t at) {
  return static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[at]) |
                                    (static_cast<std::uint8_t>(b[at + 1]) << 8));
}

}  // namespace

std::string wav_encode(const AudioBuffer& buf) {
  if (buf.sample_rate <= 0) throw Error(ErrorKind::InvalidArgument, "sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(buf.samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate));
  put_u32(out, static_cast<std::uint32_t>(buf.sample_rate) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (std::int16_t s : buf.samples) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

AudioBuffer wav_decode(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
    throw Error(ErrorKind::MalformedHeader, "wav: missing RIFF/WAVE header");
  }
  std::size_t pos = 12;
  bool have_fmt = false;
  AudioBuffer buf;
  while (pos + 8 <= bytes.size()) {
    const std::string_view id = bytes.substr(pos, 4);
    const std::uint32_t size = get_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (id == "fmt ") {
      if (size < 16 || body + 16 > bytes.size()) throw Error(ErrorKind::MalformedHeader, "wav: short fmt chunk");
      const std::uint16_t format = get_u16(bytes, body);
      const std::uint16_t channels = get_u16(bytes, body + 2);
      const std::uint32_t rate = get_u32(bytes, body + 4);
      const std::uint16_t bits = get_u16(bytes, body + 14);
      if (format != 1 || channels != 1 || bits != 16) {
        throw Error(ErrorKind::NotPcm, "wav: only mono 16-bit PCM is supported");
      }
      if (rate == 0) throw Error(ErrorKind::MalformedHeader, "wav: zero sample rate");
      buf.sample_rate = static_cast<int>(rate);
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorKind::MalformedHeader, "wav: data chunk before fmt chunk");
      if (size % 2 != 0) throw Error(ErrorKind::MalformedHeader, "wav: odd data size");
      if (body + size > bytes.size()) throw Error(ErrorKind::Truncated, "wav: data chunk is truncated");
      buf.samples.resize(size / 2);
      for (std::size_t i = 0; i < buf.samples.size(); ++i) {
        buf.samples[i] = static_cast<std::int16_t>(get_u16(bytes, body + 2 * i));
      }
      return buf;
    }
    pos = body + size + (size & 1);
  }
  if (!have_fmt) throw Error(ErrorKind::MalformedHeader, "wav: missing fmt chunk");
  throw Error(ErrorKind::Truncated, "wav: missing data chunk");
}

void wav_write(const AudioBuffer& buf, const fs::path& path) { write_file(path, wav_encode(buf)); }

AudioBuffer wav_read(const fs::path& path) { return wav_decode(read_file(path)); }

// ---------------------------------------------------------------------------

double goertzel_power(std::span<const std::int16_t> samples, double freq_hz, int sample_rate) {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate;
  const double coeff = 2.0 * std::cos(w);
  double s1 = 0;
  double s2 = 0;
  for (std::int16_t x : samples) {
    const double s = static_cast<double>(x) + coeff * s1 - s2;
    s2 = s1;
    s1 = s;
  }
  return s1 * s1 + s2 * s2 - coeff * s1 * s2;
}

std::vector<double> window_rms(const AudioBuffer& buf, std::int64_t window_ms) {
  const auto win = static_cast<std::size_t>(window_ms * buf.sample_rate / 1000);
  std::vector<double> out;
  if (win == 0) return out;
  for (std::size_t start = 0; start + win <= buf.samples.size(); start += win) {
    double acc = 0;
    for (std::size_t i = start; i < start + win; ++i) {
      const double s = buf.samples[i];
      acc += s * s;
    }
    out.push_back(std::sqrt(acc / static_cast<double>(win)));
  }
  return out;
}

std::optional<Classification> classify_onset(const AudioBuffer& stream,
                                             std::span<const StimulusSpec> templates,
                                             const ClassifyParams& params) {
  validate_stimuli(templates);
  const double threshold = dbfs_to_amplitude(params.rms_threshold_dbfs);
  const auto rms = window_rms(stream, params.window_ms);
  const auto onset = std::find_if(rms.begin(), rms.end(), [&](double r) { return r > threshold; });
  if (onset == rms.end()) return std::nullopt;

  const auto window_index = static_cast<std::int64_t>(onset - rms.begin());
  const auto win = static_cast<std::size_t>(params.window_ms * stream.sample_rate / 1000);
  const std::size_t first = static_cast<std::size_t>(window_index) * win;
  const std::size_t count = std::min(stream.samples.size() - first,
                                     static_cast<std::size_t>(params.analysis_ms * stream.sample_rate / 1000));
  const std::span<const std::int16_t> segment(stream.samples.data() + first, count);

  Classification result;
  result.t_onset_ms = stream.t_start_ms + window_index * params.window_ms;
  double total = 0;
  double best = -1;
  for (const auto& tmpl : templates) {
    const double e = goertzel_power(segment, tmpl.tone_hz, stream.sample_rate);
    result.energies.push_back(e);
    total += e;
    if (e > best || (e == best && tmpl.stimulus_id < result.stimulus_id)) {
      best = e;
      result.stimulus_id = tmpl.stimulus_id;
    }
  }
  result.confidence = total > 0 ? best / total : 0.0;
  return result;
}

}  // namespace catos::audio
