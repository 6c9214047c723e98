#include "catos/session.hpp"

#include <algorithm>
#include <map>
#include <memory>

#include "catos/archive.hpp"
#include "catos/bus.hpp"
#include "catos/error.hpp"
#include "catos/recorder.hpp"

namespace catos::session {

namespace {

void read_camera(const Json& j, std::vector<std::string>& errors, CameraConfig& c) {
  JsonFields f(j, "camera", errors);
  f.read("count", c.count);
  f.read("fps", c.fps);
  f.read("width", c.width);
  f.read("height", c.height);
  f.read("noise_amplitude", c.noise_amplitude);
  f.read("record_clips", c.record_clips);
  f.finish();
}

void read_vision(const Json& j, std::vector<std::string>& errors, vision::DetectParams& d, vision::GateParams& g) {
  JsonFields f(j, "vision", errors);
  f.read("diff_threshold", d.diff_threshold);
  f.read("min_blob_area", d.min_blob_area);
  f.read("learning_rate", d.learning_rate);
  f.read("pre_roll_ms", g.pre_roll_ms);
  f.read("hangover_ms", g.hangover_ms);
  f.finish();
}

void read_audio(const Json& j, std::vector<std::string>& errors, AudioConfig& a) {
  JsonFields f(j, "audio", errors);
  f.read("sample_rate", a.sample_rate);
  f.read("rms_threshold_dbfs", a.classify.rms_threshold_dbfs);
  f.read("window_ms", a.classify.window_ms);
  f.read("analysis_ms", a.classify.analysis_ms);
  f.read("mic_noise_amplitude", a.mic_noise_amplitude);
  f.read("capture_pre_ms", a.capture_pre_ms);
  f.read("capture_post_ms", a.capture_post_ms);
  f.read("vocal_hz", a.vocal_hz);
  std::vector<Json> stimuli;
  f.read("stimuli", stimuli);
  if (f.has("stimuli")) {
    a.stimuli.clear();
    for (std::size_t i = 0; i < stimuli.size(); ++i) {
      audio::StimulusSpec s;
      JsonFields sf(stimuli[i], "audio.stimuli[" + std::to_string(i) + "]", errors);
      sf.read("id", s.stimulus_id);
      sf.read("tone_hz", s.tone_hz);
      sf.read("duration_ms", s.duration_ms);
      sf.finish();
      a.stimuli.push_back(s);
    }
  }
  f.finish();
}

std::vector<std::string> semantic_errors(const RunConfig& c) {
  std::vector<std::string> e;
  if (c.duration_ms <= 0) e.push_back("duration_ms: must be positive");
  try {
    archive::session_id_from_timestamp(c.session_start);
  } catch (const Error& err) {
    e.push_back(err.what());
  }
  if (c.output_dir.empty()) e.push_back("output_dir: must not be empty");
  if (c.camera.count < 1 || c.camera.count > 16) e.push_back("camera.count: must lie in [1, 16]");
  if (!(c.camera.fps > 0) || c.camera.fps > 1000) e.push_back("camera.fps: must lie in (0, 1000]");
  if (c.camera.width < vision::kMinFrameSide || c.camera.height < vision::kMinFrameSide) {
    e.push_back("camera: width and height must be at least 8");
  }
  if (c.camera.width > 4096 || c.camera.height > 4096) e.push_back("camera: width and height must be at most 4096");
  if (c.camera.noise_amplitude < 0 || c.camera.noise_amplitude > 127) {
    e.push_back("camera.noise_amplitude: must lie in [0, 127]");
  }
  if (c.vision.diff_threshold < 0 || c.vision.diff_threshold > 255) {
    e.push_back("vision.diff_threshold: must lie in [0, 255]");
  }
  if (c.vision.min_blob_area < 1) e.push_back("vision.min_blob_area: must be at least 1");
  if (!(c.vision.learning_rate >= 0 && c.vision.learning_rate <= 1)) {
    e.push_back("vision.learning_rate: must lie in [0, 1]");
  }
  if (c.gate.pre_roll_ms < 0 || c.gate.hangover_ms < 0) e.push_back("vision: pre_roll_ms and hangover_ms must be non-negative");
  if (c.audio.sample_rate < 1000) e.push_back("audio.sample_rate: must be at least 1000");
  if (c.audio.stimuli.size() != 3) {
    e.push_back("audio.stimuli: exactly three stimuli are required");
  } else {
    try {
      audio::validate_stimuli(c.audio.stimuli);
    } catch (const Error& err) {
      e.push_back(std::string("audio.stimuli: ") + err.what());
    }
    for (const auto& s : c.audio.stimuli) {
      if (s.stimulus_id < 0 || s.stimulus_id > 2) e.push_back("audio.stimuli: ids must be 0, 1 and 2");
      if (s.duration_ms <= 0) e.push_back("audio.stimuli: duration_ms must be positive");
      if (!(s.tone_hz > 0) || s.tone_hz >= c.audio.sample_rate / 2.0) {
        e.push_back("audio.stimuli: tone_hz must lie in (0, sample_rate/2)");
      }
    }
  }
  if (!(c.audio.vocal_hz > 0) || c.audio.vocal_hz >= c.audio.sample_rate / 2.0) {
    e.push_back("audio.vocal_hz: must lie in (0, sample_rate/2)");
  }
  if (c.audio.classify.window_ms <= 0 || c.audio.classify.analysis_ms <= 0) {
    e.push_back("audio: window_ms and analysis_ms must be positive");
  }
  if (c.audio.mic_noise_amplitude < 0 || c.audio.mic_noise_amplitude > 32767) {
    e.push_back("audio.mic_noise_amplitude: must lie in [0, 32767]");
  }
  if (c.audio.capture_pre_ms < 0 || c.audio.capture_post_ms < 0) e.push_back("audio: capture margins must be non-negative");
  for (const auto& s : c.schema.validate()) e.push_back("schema." + s);
  return e;
}

[[noreturn]] void throw_config(const std::vector<std::string>& errors) {
  std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                    (errors.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errors) msg += "\n  " + e;
  throw Error(ErrorKind::Config, msg);
}

}  // namespace

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  std::vector<std::string> errors;
  JsonFields f(j, "", errors);
  std::uint64_t seed = 0;
  if (f.has("seed")) {
    f.read("seed", seed);
    c.seed = seed;
  } else {
    f.read("seed", seed);  // marks the key as known
  }
  f.read("duration_ms", c.duration_ms);
  f.read("session_start", c.session_start);
  std::string out = c.output_dir.string();
  std::string arch = c.archive_root.string();
  f.read("output_dir", out);
  f.read("archive_root", arch);
  c.output_dir = out;
  c.archive_root = arch;
  if (const Json* s = f.object("camera")) read_camera(*s, errors, c.camera);
  if (const Json* s = f.object("vision")) read_vision(*s, errors, c.vision, c.gate);
  if (const Json* s = f.object("audio")) read_audio(*s, errors, c.audio);
  if (const Json* s = f.object("schema")) {
    std::vector<std::string> schema_errors;
    c.schema = schema::schema_config_from_json(*s, "schema", schema_errors);
    errors.insert(errors.end(), schema_errors.begin(), schema_errors.end());
  }
  if (const Json* s = f.object("rig")) c.rig = rig::rig_config_from_json(*s, "rig", errors);
  f.finish();
  // Fields that failed to parse keep their defaults, so these checks add
  // nothing spurious. Schema invariants come from the schema parser.
  for (auto& e : semantic_errors(c)) {
    if (!e.starts_with("schema.")) errors.push_back(std::move(e));
  }
  if (!errors.empty()) throw_config(errors);
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "config file not found: " + path.string());
  Json j;
  try {
    j = Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::Config, path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

Json to_json(const RunConfig& c) {
  Json stimuli = Json::array();
  for (const auto& s : c.audio.stimuli) {
    stimuli.push_back({{"id", s.stimulus_id}, {"tone_hz", s.tone_hz}, {"duration_ms", s.duration_ms}});
  }
  Json j{
      {"duration_ms", c.duration_ms},
      {"session_start", c.session_start},
      {"output_dir", c.output_dir.string()},
      {"archive_root", c.archive_root.string()},
      {"camera",
       {{"count", c.camera.count},
        {"fps", c.camera.fps},
        {"width", c.camera.width},
        {"height", c.camera.height},
        {"noise_amplitude", c.camera.noise_amplitude},
        {"record_clips", c.camera.record_clips}}},
      {"vision",
       {{"diff_threshold", c.vision.diff_threshold},
        {"min_blob_area", c.vision.min_blob_area},
        {"learning_rate", c.vision.learning_rate},
        {"pre_roll_ms", c.gate.pre_roll_ms},
        {"hangover_ms", c.gate.hangover_ms}}},
      {"audio",
       {{"sample_rate", c.audio.sample_rate},
        {"stimuli", stimuli},
        {"rms_threshold_dbfs", c.audio.classify.rms_threshold_dbfs},
        {"window_ms", c.audio.classify.window_ms},
        {"analysis_ms", c.audio.classify.analysis_ms},
        {"mic_noise_amplitude", c.audio.mic_noise_amplitude},
        {"capture_pre_ms", c.audio.capture_pre_ms},
        {"capture_post_ms", c.audio.capture_post_ms},
        {"vocal_hz", c.audio.vocal_hz}}},
      {"schema", schema::to_json(c.schema)},
      {"rig", rig::to_json(c.rig)},
  };
  if (c.seed) j["seed"] = *c.seed;
  return j;
}

void validate(const RunConfig& c) {
  std::vector<std::string> errors;
  if (!c.seed) errors.push_back("seed: required");
  for (auto& e : semantic_errors(c)) errors.push_back(std::move(e));
  if (!errors.empty()) throw_config(errors);
}

// ---------------------------------------------------------------------------

namespace {

using bus::Topic;
using hwlink::MsgType;
using hwlink::WireMessage;

std::string hex_payload(const WireMessage& m) {
  std::string out;
  char buf[4];
  for (auto b : m.payload) {
    std::snprintf(buf, sizeof buf, " %02X", b);
    out += buf;
  }
  return out;
}

std::string describe(const bus::BusMessage& m) {
  struct Visitor {
    std::string operator()(const bus::BlobsEvent& e) const {
      return "blobs camera=" + std::to_string(e.camera_id) + " n=" + std::to_string(e.blobs.size());
    }
    std::string operator()(const bus::AudioEvent& e) const {
      if (e.kind == bus::AudioEvent::Kind::PlaybackStarted) return "playback stim=" + std::to_string(e.stimulus_id);
      return "classified stim=" + std::to_string(e.stimulus_id) + " onset=" + std::to_string(e.t_onset_ms) +
             " confidence=" + format_fixed(e.confidence, 3);
    }
    std::string operator()(const bus::HwEvent& e) const {
      return std::string(hwlink::msg_type_name(e.msg.type)) + hex_payload(e.msg);
    }
    std::string operator()(const bus::SchemaEvent& e) const {
      const char* kind = e.kind == bus::SchemaEvent::Kind::PlayStimulus   ? "play"
                         : e.kind == bus::SchemaEvent::Kind::TrialStarted ? "trial_started"
                                                                          : "trial_resolved";
      return std::string(kind) + " trial=" + std::to_string(e.trial_id) + " stim=" + std::to_string(e.stimulus_id);
    }
    std::string operator()(const bus::LogLine& e) const { return e.text; }
  };
  return std::visit(Visitor{}, m.payload);
}

class Session {
 public:
  Session(const RunConfig& config)
      : cfg_(config),
        seed_(*config.seed),
        out_(config.output_dir),
        bus_(),
        rig_(config.rig, seed_, channel_, &script_, config.schema.stimulus_to_button, true),
        machine_(config.schema, seed_),
        results_(out_ / archive::kResultsFile),
        hw_pub_(bus_, "hw-reader"),
        audio_out_pub_(bus_, "audio-out"),
        audio_in_pub_(bus_, "audio-in"),
        schema_pub_(bus_, "schema"),
        rig_pub_(bus_, "rig"),
        mic_rng_(SplitMix64(seed_).fork(0xA0D10)) {
    end_ms_ = config.duration_ms;
    session_end_ms_ = config.schema.session_length_ms > 0 ? std::min(config.schema.session_length_ms, end_ms_)
                                                          : end_ms_;
    for (int k = 0; k < config.camera.count; ++k) {
      vision::SourceParams sp;
      sp.camera_id = k;
      sp.width = config.camera.width;
      sp.height = config.camera.height;
      sp.fps = config.camera.fps;
      sp.duration_ms = end_ms_;
      sp.seed = seed_;
      sp.noise_amplitude = config.camera.noise_amplitude;
      sp.mirror_x = (k % 2) == 1;
      auto cam = std::make_unique<Camera>(sp, script_, out_ / ("movement_cam" + std::to_string(k) + ".csv"), bus_);
      if (config.camera.record_clips) cam->recorder.emplace(out_, k, config.camera.fps, config.gate);
      cameras_.push_back(std::move(cam));
    }
    schema_vision_ = bus_.subscribe(Topic::Vision);
    schema_audio_ = bus_.subscribe(Topic::Audio);
    schema_hw_ = bus_.subscribe(Topic::Hw);
    audio_out_sub_ = bus_.subscribe(Topic::Schema);
    for (Topic t : {Topic::Audio, Topic::Hw, Topic::Schema, Topic::Log}) log_subs_.push_back(bus_.subscribe(t));
    log_file_ = std::fopen((out_ / archive::kLogFile).c_str(), "wb");
    if (log_file_ == nullptr) throw Error(ErrorKind::Io, "cannot create " + (out_ / archive::kLogFile).string());
  }

  ~Session() {
    if (log_file_ != nullptr) std::fclose(log_file_);
  }

  RunReport run() {
    std::int64_t t = 0;
    while (true) {
      tick(t);
      if (t >= end_ms_) break;
      t = next_time(t);
    }
    for (auto& cam : cameras_) {
      if (cam->recorder) cam->recorder->finish(end_ms_);
    }

    RunReport report;
    report.observed_ms = end_ms_;
    report.summary = summary_;
    for (auto& cam : cameras_) {
      report.clips.push_back(cam->recorder ? cam->recorder->clips() : std::vector<vision::ClipManifest>{});
    }
    if (const rig::Agent* a = rig_.agent()) report.agent_visits = a->visits(end_ms_);
    report.frames = frames_;
    report.dispense_commands = dispense_commands_;
    report.piezo_hits = rig_.piezo_hits_sent();
    report.hopper_left = rig_.state().hopper_pieces;
    report.hopper_initial = rig_.initial_hopper();
    for (Topic topic : bus::kAllTopics) report.bus_published += bus_.published(topic);
    return report;
  }

 private:
  struct Camera {
    Camera(const vision::SourceParams& sp, const vision::MotionScript& script, const fs::path& csv,
           bus::MessageBus& bus)
        : source(sp, script), writer(csv), pub(bus, "video-in-" + std::to_string(sp.camera_id)) {}

    vision::SyntheticFrameSource source;
    std::optional<vision::BackgroundModel> bg;
    vision::MovementRecordWriter writer;
    std::optional<vision::ClipRecorder> recorder;
    bus::Publisher pub;
  };

  std::uint64_t activity() const {
    std::uint64_t n = host_writes_;
    for (Topic topic : bus::kAllTopics) n += bus_.published(topic);
    return n;
  }

  void tick(std::int64_t t) {
    for (int pass = 0; pass < 32; ++pass) {
      const std::uint64_t before = activity();
      rig_.advance_to(t);
      hw_reader(t);
      if (pass == 0) {
        for (auto& cam : cameras_) video_in(*cam, t);
        script_.forget_before(t);
        rig_side_effects(t);
      }
      audio_out(t);
      audio_in(t);
      run_schema(t);
      write_log();
      if (activity() == before) return;
    }
    throw Error(ErrorKind::State, "contexts did not settle at t=" + std::to_string(t));
  }

  std::int64_t next_time(std::int64_t t) const {
    std::int64_t n = end_ms_;
    n = std::min(n, rig_.next_event_time());
    for (const auto& cam : cameras_) {
      if (cam->source.has_next()) n = std::min(n, cam->source.next_time());
    }
    if (!captures_.empty()) n = std::min(n, captures_.begin()->second);
    if (!closed_) {
      n = std::min(n, std::max(machine_.next_deadline(), t + 1));
      n = std::min(n, session_end_ms_);
      if (dispense_) n = std::min(n, dispense_->deadline_ms());
      n = std::min(n, next_query_ms_);
    }
    return std::max(n, t + 1);
  }

  void host_send(const WireMessage& msg) {
    if (!channel_.is_open()) return;
    channel_.host_write(hwlink::encode_msg(msg));
    ++host_writes_;
  }

  // --- hw reader: serial bytes -> hw topic
  void hw_reader(std::int64_t t) {
    const auto bytes = channel_.host_read();
    if (bytes.empty()) return;
    for (auto& msg : decoder_.feed(bytes)) hw_pub_.publish(Topic::Hw, t, bus::HwEvent{std::move(msg)});
  }

  // --- video-in, one per camera
  void video_in(Camera& cam, std::int64_t t) {
    if (!cam.source.has_next() || cam.source.next_time() != t) return;
    const vision::Frame frame = cam.source.next();
    ++frames_;
    if (!cam.bg) cam.bg.emplace(frame);
    std::vector<vision::Blob> blobs = vision::detect_motion_blobs(frame, *cam.bg, cfg_.vision);
    const auto rows = vision::movement_rows(t, blobs);
    try {
      cam.writer.append(rows);
    } catch (const Error& e) {
      cam.pub.log(t, e.what());
      throw;
    }
    if (cam.recorder) cam.recorder->on_frame(frame, !blobs.empty());
    cam.pub.publish(Topic::Vision, t, bus::BlobsEvent{frame.camera_id, std::move(blobs)});
  }

  // --- rig-side happenings that the host does not see directly
  void rig_side_effects(std::int64_t t) {
    for (const auto& a : rig_.take_env_actions()) {
      rig_pub_.log(t, std::string("env ") + rig::env_action_name(a.kind) + " at " + std::to_string(a.t_ms));
    }
    for (std::int64_t v : rig_.take_vocalizations()) {
      audio::StimulusSpec spec{3, cfg_.audio.vocal_hz, cfg_.rig.behavior.vocal_ms};
      audio::AudioBuffer buf = audio::synth_stimulus(spec, cfg_.audio.sample_rate);
      buf.t_start_ms = v;
      add_room_sound(std::move(buf));
    }
  }

  void add_room_sound(audio::AudioBuffer buf) {
    const std::int64_t t0 = buf.t_start_ms;
    const std::int64_t end = std::min(end_ms_, t0 + buf.duration_ms() + cfg_.audio.capture_post_ms);
    room_.push_back(std::move(buf));
    // One capture per onset time; a second sound at the same instant widens it.
    auto [it, inserted] = capture_end_.emplace(t0, end);
    if (!inserted) {
      if (end <= it->second) return;
      for (auto c = captures_.begin(); c != captures_.end(); ++c) {
        if (c->first == t0) {
          captures_.erase(c);
          break;
        }
      }
      it->second = end;
    }
    captures_.insert({t0, end});
  }

  // --- audio-out: playback requests from the schema
  void audio_out(std::int64_t t) {
    for (const auto& m : bus_.poll(audio_out_sub_, SIZE_MAX)) {
      const auto* e = std::get_if<bus::SchemaEvent>(&m.payload);
      if (e == nullptr || e->kind != bus::SchemaEvent::Kind::PlayStimulus) continue;
      const audio::StimulusSpec* spec = nullptr;
      for (const auto& s : cfg_.audio.stimuli) {
        if (s.stimulus_id == e->stimulus_id) spec = &s;
      }
      if (spec == nullptr) continue;
      audio::AudioBuffer buf = audio::synth_stimulus(*spec, cfg_.audio.sample_rate);
      buf.t_start_ms = t;
      audio::wav_write(buf, out_ / ("stim" + std::to_string(spec->stimulus_id) + "_" + std::to_string(t) + ".wav"));
      rig_.hear_stimulus(spec->stimulus_id, t);
      add_room_sound(std::move(buf));
      audio_out_pub_.publish(Topic::Audio, t,
                             bus::AudioEvent{bus::AudioEvent::Kind::PlaybackStarted, spec->stimulus_id, t, 1.0});
    }
  }

  // --- audio-in: microphone captures around each sound in the room
  void audio_in(std::int64_t t) {
    while (!captures_.empty()) {
      auto it = std::min_element(captures_.begin(), captures_.end(),
                                 [](const auto& a, const auto& b) { return a.second < b.second; });
      if (it->second > t && t < end_ms_) break;
      const std::int64_t t0 = it->first;
      const std::int64_t end = std::min(it->second, end_ms_);
      captures_.erase(it);
      capture_end_.erase(t0);

      audio::AudioBuffer cap;
      cap.sample_rate = cfg_.audio.sample_rate;
      cap.t_start_ms = std::max<std::int64_t>(0, t0 - cfg_.audio.capture_pre_ms);
      cap.samples.assign(static_cast<std::size_t>((end - cap.t_start_ms) * cap.sample_rate / 1000), 0);
      for (const auto& s : room_) audio::mix_into(cap, s);
      audio::add_noise(cap, cfg_.audio.mic_noise_amplitude, mic_rng_);
      audio::wav_write(cap, out_ / ("mic_" + std::to_string(t0) + ".wav"));
      if (auto c = audio::classify_onset(cap, cfg_.audio.stimuli, cfg_.audio.classify)) {
        audio_in_pub_.publish(Topic::Audio, t,
                              bus::AudioEvent{bus::AudioEvent::Kind::SoundClassified, c->stimulus_id, c->t_onset_ms,
                                              c->confidence});
      } else {
        audio_in_pub_.log(t, "capture at " + std::to_string(t0) + ": no onset");
      }
    }
    // Sounds that no pending capture can reach any more.
    std::int64_t keep_from = t;
    for (const auto& c : captures_) keep_from = std::min(keep_from, c.first - cfg_.audio.capture_pre_ms);
    std::erase_if(room_, [&](const audio::AudioBuffer& b) { return b.t_start_ms + b.duration_ms() < keep_from; });
  }

  // --- schema
  void run_schema(std::int64_t t) {
    std::vector<schema::Event> events;
    for (auto& m : bus_.poll(schema_vision_, SIZE_MAX)) {
      auto& e = std::get<bus::BlobsEvent>(m.payload);
      // The trigger zone is defined in camera 0's coordinates.
      if (e.camera_id == 0 && !e.blobs.empty()) events.emplace_back(schema::BlobsSeen{0, std::move(e.blobs)});
    }
    for (const auto& m : bus_.poll(schema_audio_, SIZE_MAX)) {
      const auto& e = std::get<bus::AudioEvent>(m.payload);
      if (e.kind == bus::AudioEvent::Kind::PlaybackStarted) events.emplace_back(schema::PlaybackStarted{e.stimulus_id});
    }
    std::vector<WireMessage> hw;
    for (auto& m : bus_.poll(schema_hw_, SIZE_MAX)) hw.push_back(std::move(std::get<bus::HwEvent>(m.payload).msg));
    if (closed_) return;

    for (const auto& msg : hw) {
      if (msg.is(MsgType::Button) && hwlink::is_valid(msg)) {
        events.emplace_back(schema::ButtonPressed{msg.payload[0]});
      } else if (dispense_ && (msg.is(MsgType::PiezoHit) || msg.is(MsgType::DispenseDone))) {
        dispense_->on_message(msg, t);
      }
    }
    for (const auto& ev : events) apply(machine_.step(ev, t), t);

    if (dispense_) {
      if (auto retry = dispense_->on_tick(t)) {
        host_send(*retry);
        ++dispense_commands_;
        schema_pub_.log(t, "dispense retry, attempt " + std::to_string(dispense_->outcome().attempts));
      }
      if (dispense_->done()) {
        const hwlink::DispenseOutcome outcome = dispense_->outcome();
        dispense_.reset();
        apply(machine_.step(schema::DispenseFinished{outcome}, t), t);
      }
    }
    if (t >= machine_.next_deadline()) apply(machine_.step(schema::Tick{}, t), t);

    if (t >= next_query_ms_) {
      host_send(WireMessage::query_sensors());
      next_query_ms_ += kQueryPeriodMs;
    }

    if (t >= session_end_ms_) {
      schema::CloseResult r = machine_.close(t);
      apply(r.actions, t);
      results_.write_summary(r.summary);
      summary_ = r.summary;
      closed_ = true;
      schema_pub_.log(t, format_summary_line(r.summary).substr(2));
    }
  }

  void apply(const std::vector<schema::Action>& actions, std::int64_t t) {
    for (const auto& a : actions) {
      if (const auto* p = std::get_if<schema::PlayStimulus>(&a)) {
        schema_pub_.publish(Topic::Schema, t,
                            bus::SchemaEvent{bus::SchemaEvent::Kind::TrialStarted, p->trial_id, p->stimulus_id});
        schema_pub_.publish(Topic::Schema, t,
                            bus::SchemaEvent{bus::SchemaEvent::Kind::PlayStimulus, p->trial_id, p->stimulus_id});
      } else if (std::holds_alternative<schema::StartDispense>(a)) {
        dispense_.emplace(cfg_.schema.dispense);
        host_send(dispense_->start(t));
        ++dispense_commands_;
      } else if (const auto* w = std::get_if<schema::WriteResult>(&a)) {
        results_.append(w->result, cfg_.schema.reward_mode);
        schema_pub_.publish(Topic::Schema, t,
                            bus::SchemaEvent{bus::SchemaEvent::Kind::TrialResolved, w->result.trial_id,
                                             w->result.stimulus_id});
        schema_pub_.log(t, "result " + schema::format_result_row(w->result));
      } else if (const auto* n = std::get_if<schema::Note>(&a)) {
        schema_pub_.log(t, n->text);
      }
    }
  }

  // --- message-board log
  void write_log() {
    std::vector<bus::BusMessage> all;
    for (auto id : log_subs_) {
      for (auto& m : bus_.poll(id, SIZE_MAX)) all.push_back(std::move(m));
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const bus::BusMessage& a, const bus::BusMessage& b) { return a.t_sim_ms < b.t_sim_ms; });
    for (const auto& m : all) {
      std::string line = std::to_string(m.t_sim_ms) + " " + std::string(bus::topic_name(m.topic)) + " " + m.publisher +
                         " " + describe(m) + "\n";
      if (std::fwrite(line.data(), 1, line.size(), log_file_) != line.size()) {
        throw Error(ErrorKind::Io, "write failed: " + (out_ / archive::kLogFile).string());
      }
    }
    if (!all.empty()) std::fflush(log_file_);
  }

  static constexpr std::int64_t kQueryPeriodMs = 60000;

  const RunConfig& cfg_;
  std::uint64_t seed_;
  fs::path out_;
  bus::MessageBus bus_;
  hwlink::ByteChannel channel_;
  vision::MotionScript script_;
  rig::Rig rig_;
  hwlink::FrameDecoder decoder_;
  schema::TrialStateMachine machine_;
  schema::ResultLog results_;
  bus::Publisher hw_pub_;
  bus::Publisher audio_out_pub_;
  bus::Publisher audio_in_pub_;
  bus::Publisher schema_pub_;
  bus::Publisher rig_pub_;
  SplitMix64 mic_rng_;
  std::vector<std::unique_ptr<Camera>> cameras_;
  bus::SubscriptionId schema_vision_ = 0;
  bus::SubscriptionId schema_audio_ = 0;
  bus::SubscriptionId schema_hw_ = 0;
  bus::SubscriptionId audio_out_sub_ = 0;
  std::vector<bus::SubscriptionId> log_subs_;
  std::FILE* log_file_ = nullptr;
  std::vector<audio::AudioBuffer> room_;
  std::multimap<std::int64_t, std::int64_t> captures_;  // onset -> capture end
  std::map<std::int64_t, std::int64_t> capture_end_;
  std::optional<hwlink::DispenseProcedure> dispense_;
  std::int64_t end_ms_ = 0;
  std::int64_t session_end_ms_ = 0;
  std::int64_t next_query_ms_ = kQueryPeriodMs;
  std::uint64_t host_writes_ = 0;
  std::uint64_t frames_ = 0;
  std::uint64_t dispense_commands_ = 0;
  schema::SessionSummary summary_;
  bool closed_ = false;
};

}  // namespace

RunReport run_session(const RunConfig& config) {
  validate(config);
  const fs::path& out = config.output_dir;
  std::error_code ec;
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw Error(ErrorKind::Conflict, "output path is not a directory: " + out.string());
    if (!fs::is_empty(out)) throw Error(ErrorKind::Conflict, "output folder not empty: " + out.string());
  }
  fs::create_directories(out, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create " + out.string() + ": " + ec.message());

  archive::SessionInfo info;
  info.session_id = archive::session_id_from_timestamp(config.session_start);
  info.session_start = config.session_start;
  info.seed = *config.seed;
  info.observed_ms = config.duration_ms;
  info.cameras = config.camera.count;
  info.fps = config.camera.fps;
  info.width = config.camera.width;
  info.height = config.camera.height;
  info.stimulus_to_button = config.schema.stimulus_to_button;
  info.response_window_ms = config.schema.response_window_ms;
  write_file(out / archive::kSessionFile, archive::to_json(info).dump(2) + "\n");

  RunReport report;
  {
    Session session(config);
    report = session.run();
  }
  report.session_id = info.session_id;
  return report;
}

}  // namespace catos::session
