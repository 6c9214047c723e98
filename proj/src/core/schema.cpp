#include "catos/schema.hpp"

#include <algorithm>

#include "catos/error.hpp"

namespace catos::schema {

std::vector<std::string> SchemaConfig::validate() const {
  std::vector<std::string> errors;
  std::array<int, 3> sorted = stimulus_to_button;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != std::array<int, 3>{0, 1, 2}) {
    errors.push_back("stimulus_to_button: mapping must be a bijection on {0,1,2}");
  }
  if (response_window_ms <= 0) errors.push_back("response_window_ms: must be positive");
  if (inter_trial_interval_ms < 0) errors.push_back("inter_trial_interval_ms: must be non-negative");
  if (session_length_ms < 0) errors.push_back("session_length_ms: must be non-negative");
  if (trigger_zone.min_x > trigger_zone.max_x || trigger_zone.min_y > trigger_zone.max_y) {
    errors.push_back("trigger_zone: min corner must not exceed max corner");
  }
  if (dispense.max_retries < 0) errors.push_back("dispense.max_retries: must be non-negative");
  if (dispense.confirm_window_ms <= 0) errors.push_back("dispense.confirm_window_ms: must be positive");
  return errors;
}

SchemaConfig schema_config_from_json(const Json& j, const std::string& path, std::vector<std::string>& errors) {
  SchemaConfig c;
  JsonFields f(j, path, errors);
  f.read("stimulus_to_button", c.stimulus_to_button);
  f.read("response_window_ms", c.response_window_ms);
  f.read("inter_trial_interval_ms", c.inter_trial_interval_ms);
  f.read("session_length_ms", c.session_length_ms);

  std::string order = "random_no_repeat";
  f.read("stimulus_order", order);
  if (order == "random_no_repeat") {
    c.stimulus_order = StimulusOrder::RandomNoRepeat;
  } else if (order == "fixed_cycle") {
    c.stimulus_order = StimulusOrder::FixedCycle;
  } else {
    f.error("stimulus_order: expected \"random_no_repeat\" or \"fixed_cycle\"");
  }

  std::string mode = "correct_only";
  f.read("reward_mode", mode);
  if (mode == "correct_only") {
    c.reward_mode = RewardMode::CorrectOnly;
  } else if (mode == "any_press") {
    c.reward_mode = RewardMode::AnyPress;
  } else {
    f.error("reward_mode: expected \"correct_only\" or \"any_press\"");
  }

  if (const Json* z = f.object("trigger_zone")) {
    JsonFields zf(*z, f.path().empty() ? "trigger_zone" : f.path() + ".trigger_zone", errors);
    zf.read("min_x", c.trigger_zone.min_x);
    zf.read("min_y", c.trigger_zone.min_y);
    zf.read("max_x", c.trigger_zone.max_x);
    zf.read("max_y", c.trigger_zone.max_y);
    zf.finish();
  }
  if (const Json* d = f.object("dispense")) {
    JsonFields df(*d, f.path().empty() ? "dispense" : f.path() + ".dispense", errors);
    int degrees = c.dispense.degrees;
    df.read("degrees", degrees);
    if (degrees < 0 || degrees > 255) df.error("degrees: must lie in [0, 255]");
    c.dispense.degrees = static_cast<std::uint8_t>(std::clamp(degrees, 0, 255));
    df.read("max_retries", c.dispense.max_retries);
    df.read("confirm_window_ms", c.dispense.confirm_window_ms);
    df.finish();
  }
  f.finish();
  for (const auto& e : c.validate()) f.error(e);
  return c;
}

Json to_json(const SchemaConfig& c) {
  return Json{
      {"stimulus_to_button", c.stimulus_to_button},
      {"response_window_ms", c.response_window_ms},
      {"inter_trial_interval_ms", c.inter_trial_interval_ms},
      {"stimulus_order", c.stimulus_order == StimulusOrder::FixedCycle ? "fixed_cycle" : "random_no_repeat"},
      {"trigger_zone",
       {{"min_x", c.trigger_zone.min_x},
        {"min_y", c.trigger_zone.min_y},
        {"max_x", c.trigger_zone.max_x},
        {"max_y", c.trigger_zone.max_y}}},
      {"session_length_ms", c.session_length_ms},
      {"reward_mode", c.reward_mode == RewardMode::AnyPress ? "any_press" : "correct_only"},
      {"dispense",
       {{"degrees", c.dispense.degrees},
        {"max_retries", c.dispense.max_retries},
        {"confirm_window_ms", c.dispense.confirm_window_ms}}},
  };
}

// ---------------------------------------------------------------------------

void validate_result(const TrialResult& r, RewardMode mode, const std::array<int, 3>* mapping) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorKind::InvalidArgument, "trial " + std::to_string(r.trial_id) + ": " + why);
  };
  if (r.trial_id < 1) fail("trial id must be >= 1");
  if (r.stimulus_id < 0 || r.stimulus_id > 2) fail("stimulus must be 0..2");
  if (r.response_button) {
    if (*r.response_button < 0 || *r.response_button > 2) fail("button must be 0..2");
    if (!r.latency_ms || *r.latency_ms < 0) fail("answered trial needs a non-negative latency");
    if (mapping != nullptr && r.correct != (*r.response_button == (*mapping)[static_cast<std::size_t>(r.stimulus_id)])) {
      fail("correct flag disagrees with the stimulus-to-button mapping");
    }
  } else {
    if (r.correct) fail("timeout cannot be correct");
    if (r.latency_ms) fail("timeout has no latency");
    if (r.reward_confirmed) fail("timeout cannot be rewarded");
  }
  if (r.reward_confirmed && !r.correct && mode != RewardMode::AnyPress) fail("reward requires a correct response");
}

SessionSummary summarize(std::span<const TrialResult> results) {
  SessionSummary s;
  for (const auto& r : results) {
    ++s.trials;
    if (r.correct) {
      ++s.correct;
    } else {
      ++s.incorrect;
    }
    if (r.response_button) ++s.presses[static_cast<std::size_t>(*r.response_button)];
    if (r.reward_confirmed) ++s.rewards;
  }
  return s;
}

std::string format_result_row(const TrialResult& r) {
  std::string line = std::to_string(r.trial_id) + "," + std::to_string(r.t_start_ms) + "," +
                     std::to_string(r.stimulus_id) + ",";
  line += r.response_button ? std::to_string(*r.response_button) : "NONE";
  line += r.correct ? ",1" : ",0";
  line += r.reward_confirmed ? ",1," : ",0,";
  if (r.latency_ms) line += std::to_string(*r.latency_ms);
  return line;
}

std::string format_summary_line(const SessionSummary& s) {
  return "# summary," + std::to_string(s.trials) + "," + std::to_string(s.correct) + "," +
         std::to_string(s.incorrect) + "," + std::to_string(s.presses[0]) + "," + std::to_string(s.presses[1]) +
         "," + std::to_string(s.presses[2]) + "," + std::to_string(s.rewards);
}

ResultFile parse_result_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != kResultCsvHeader) {
    throw Error(ErrorKind::Format, "result csv line 1: missing header");
  }
  ResultFile file;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where = "result csv line " + std::to_string(i + 1) + ": ";
    const std::string_view line = lines[i];
    if (file.summary) throw Error(ErrorKind::Format, where + "content after summary line");
    if (line.starts_with("# summary,")) {
      const auto f = split(line.substr(10), ',');
      if (f.size() != 7) throw Error(ErrorKind::Format, where + "summary needs 7 fields");
      std::array<int, 7> v{};
      for (std::size_t k = 0; k < 7; ++k) {
        auto n = parse_int(f[k]);
        if (!n || *n < 0) throw Error(ErrorKind::Format, where + "bad summary count");
        v[k] = static_cast<int>(*n);
      }
      file.summary = SessionSummary{v[0], v[1], v[2], {v[3], v[4], v[5]}, v[6]};
      continue;
    }
    if (line.starts_with("#")) continue;
    const auto f = split(line, ',');
    if (f.size() != 7) throw Error(ErrorKind::Format, where + "expected 7 fields");
    TrialResult r;
    auto id = parse_int(f[0]);
    auto t = parse_int(f[1]);
    auto stim = parse_int(f[2]);
    if (!id || !t || !stim) throw Error(ErrorKind::Format, where + "bad number");
    r.trial_id = static_cast<int>(*id);
    r.t_start_ms = *t;
    r.stimulus_id = static_cast<int>(*stim);
    if (f[3] != "NONE") {
      auto b = parse_int(f[3]);
      if (!b) throw Error(ErrorKind::Format, where + "bad button");
      r.response_button = static_cast<int>(*b);
    }
    if ((f[4] != "0" && f[4] != "1") || (f[5] != "0" && f[5] != "1")) {
      throw Error(ErrorKind::Format, where + "flags must be 0 or 1");
    }
    r.correct = f[4] == "1";
    r.reward_confirmed = f[5] == "1";
    if (!f[6].empty()) {
      auto lat = parse_int(f[6]);
      if (!lat) throw Error(ErrorKind::Format, where + "bad latency");
      r.latency_ms = *lat;
    }
    try {
      validate_result(r, RewardMode::AnyPress);
    } catch (const Error& e) {
      throw Error(ErrorKind::Format, where + e.what());
    }
    file.rows.push_back(r);
  }
  return file;
}

ResultLog::ResultLog(fs::path path) : path_(std::move(path)) {
  file_ = std::fopen(path_.c_str(), "wb");
  if (file_ == nullptr) throw Error(ErrorKind::Io, "cannot create " + path_.string());
  write(std::string(kResultCsvHeader));
}

ResultLog::~ResultLog() {
  if (file_ != nullptr) std::fclose(file_);
}

void ResultLog::write(const std::string& line) {
  const std::string out = line + "\n";
  if (std::fwrite(out.data(), 1, out.size(), file_) != out.size() || std::fflush(file_) != 0) {
    throw Error(ErrorKind::Io, "write failed: " + path_.string());
  }
}

void ResultLog::append(const TrialResult& r, RewardMode mode) {
  if (summary_written_) throw Error(ErrorKind::State, "result log already closed");
  validate_result(r, mode);
  write(format_result_row(r));
}

void ResultLog::write_summary(const SessionSummary& s) {
  if (summary_written_) throw Error(ErrorKind::State, "summary already written");
  write(format_summary_line(s));
  summary_written_ = true;
}

// ---------------------------------------------------------------------------

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Idle: return "IDLE";
    case Phase::Stimulus: return "STIMULUS";
    case Phase::AwaitResponse: return "AWAIT_RESPONSE";
    case Phase::Reward: return "REWARD";
    case Phase::InterTrial: return "ITI";
    case Phase::Closed: return "CLOSED";
  }
  return "?";
}

TrialStateMachine::TrialStateMachine(const SchemaConfig& config, std::uint64_t seed)
    : config_(config), rng_(SplitMix64(seed).fork(0x5C4E)) {
  const auto errors = config.validate();
  if (!errors.empty()) throw Error(ErrorKind::Config, errors.front());
}

std::int64_t TrialStateMachine::next_deadline() const {
  switch (phase_) {
    case Phase::Stimulus:
      return current_.t_start_ms + config_.response_window_ms + 1;
    case Phase::AwaitResponse:
      return onset_ + config_.response_window_ms + 1;
    case Phase::InterTrial:
      return iti_end_;
    default:
      return INT64_MAX;
  }
}

int TrialStateMachine::next_stimulus() {
  if (config_.stimulus_order == StimulusOrder::FixedCycle) return (trial_id_ - 1) % 3;
  if (!last_stimulus_) return static_cast<int>(rng_.uniform_int(0, 2));
  return (*last_stimulus_ + 1 + static_cast<int>(rng_.uniform_int(0, 1))) % 3;
}

void TrialStateMachine::start_trial(std::int64_t t_ms, std::vector<Action>& out) {
  ++trial_id_;
  const int stim = next_stimulus();
  last_stimulus_ = stim;
  current_ = TrialResult{};
  current_.trial_id = trial_id_;
  current_.t_start_ms = t_ms;
  current_.stimulus_id = stim;
  phase_ = Phase::Stimulus;
  out.push_back(PlayStimulus{trial_id_, stim});
}

void TrialStateMachine::finish_trial(std::int64_t t_ms, std::vector<Action>& out) {
  validate_result(current_, config_.reward_mode, &config_.stimulus_to_button);
  finished_.push_back(current_);
  out.push_back(WriteResult{current_});
  phase_ = Phase::InterTrial;
  iti_end_ = t_ms + config_.inter_trial_interval_ms;
}

void TrialStateMachine::expire(std::int64_t t_ms, std::vector<Action>& out) {
  if ((phase_ == Phase::AwaitResponse || phase_ == Phase::Stimulus) && t_ms >= next_deadline()) {
    // Timeout: no answer within the response window.
    finish_trial(next_deadline() - 1, out);
  }
  if (phase_ == Phase::InterTrial && t_ms >= iti_end_) phase_ = Phase::Idle;
}

std::vector<Action> TrialStateMachine::step(const Event& event, std::int64_t t_ms) {
  if (phase_ == Phase::Closed) throw Error(ErrorKind::State, "session already closed");
  if (t_ms < last_t_) throw Error(ErrorKind::InvalidArgument, "schema events must arrive in time order");
  last_t_ = t_ms;

  std::vector<Action> out;
  // A press landing exactly on the window edge still counts.
  if (!(std::holds_alternative<ButtonPressed>(event) && phase_ == Phase::AwaitResponse &&
        t_ms <= onset_ + config_.response_window_ms)) {
    expire(t_ms, out);
  }

  if (const auto* seen = std::get_if<BlobsSeen>(&event)) {
    if (phase_ == Phase::Idle) {
      const bool in_zone = std::any_of(seen->blobs.begin(), seen->blobs.end(), [&](const vision::Blob& b) {
        return config_.trigger_zone.contains(b.cx, b.cy);
      });
      if (in_zone) start_trial(t_ms, out);
    }
  } else if (const auto* play = std::get_if<PlaybackStarted>(&event)) {
    if (phase_ == Phase::Stimulus && play->stimulus_id == current_.stimulus_id) {
      phase_ = Phase::AwaitResponse;
      onset_ = t_ms;
    }
  } else if (const auto* press = std::get_if<ButtonPressed>(&event)) {
    if (phase_ != Phase::AwaitResponse) {
      out.push_back(Note{"button " + std::to_string(press->button) + " ignored in " + phase_name(phase_)});
    } else if (press->button < 0 || press->button > 2) {
      out.push_back(Note{"invalid button " + std::to_string(press->button) + " ignored"});
    } else {
      current_.response_button = press->button;
      current_.latency_ms = t_ms - onset_;
      current_.correct =
          press->button == config_.stimulus_to_button[static_cast<std::size_t>(current_.stimulus_id)];
      const bool reward = current_.correct || config_.reward_mode == RewardMode::AnyPress;
      if (reward) {
        phase_ = Phase::Reward;
        out.push_back(StartDispense{current_.trial_id});
      } else {
        finish_trial(t_ms, out);
      }
    }
  } else if (const auto* done = std::get_if<DispenseFinished>(&event)) {
    if (phase_ == Phase::Reward) {
      current_.reward_confirmed = done->outcome.confirmed;
      finish_trial(t_ms, out);
    }
  }
  return out;
}

CloseResult TrialStateMachine::close(std::int64_t t_ms) {
  if (phase_ == Phase::Closed) throw Error(ErrorKind::State, "session already closed");
  CloseResult result;
  if (t_ms >= last_t_) expire(t_ms, result.actions);
  switch (phase_) {
    case Phase::Stimulus:
    case Phase::AwaitResponse:
      finish_trial(t_ms, result.actions);
      break;
    case Phase::Reward:
      // Session ended before the feeder confirmed.
      current_.reward_confirmed = false;
      finish_trial(t_ms, result.actions);
      break;
    default:
      break;
  }
  phase_ = Phase::Closed;
  result.summary = summarize(finished_);
  return result;
}

}  // namespace catos::schema
