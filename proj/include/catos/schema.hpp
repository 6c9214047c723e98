#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "catos/hwlink.hpp"
#include "catos/rng.hpp"
#include "catos/util.hpp"
#include "catos/vision.hpp"

namespace catos::schema {

struct Rect {
  int min_x = 0;
  int min_y = 0;
  int max_x = 0;
  int max_y = 0;

  bool contains(double x, double y) const { return x >= min_x && x <= max_x && y >= min_y && y <= max_y; }
  bool operator==(const Rect&) const = default;
};

enum class StimulusOrder { RandomNoRepeat, FixedCycle };
enum class RewardMode { CorrectOnly, AnyPress };

struct SchemaConfig {
  std::array<int, 3> stimulus_to_button{0, 1, 2};
  std::int64_t response_window_ms = 5000;
  std::int64_t inter_trial_interval_ms = 10000;
  StimulusOrder stimulus_order = StimulusOrder::RandomNoRepeat;
  Rect trigger_zone{64, 20, 95, 52};
  /// 0 means "the whole run".
  std::int64_t session_length_ms = 0;
  RewardMode reward_mode = RewardMode::CorrectOnly;
  hwlink::DispenseParams dispense;

  /// Every violated invariant, one message each; empty when valid.
  std::vector<std::string> validate() const;
};

SchemaConfig schema_config_from_json(const Json& j, const std::string& path, std::vector<std::string>& errors);
Json to_json(const SchemaConfig& c);

// ---------------------------------------------------------------------------
// Results

struct TrialResult {
  int trial_id = 0;
  std::int64_t t_start_ms = 0;
  int stimulus_id = 0;
  std::optional<int> response_button;  // nullopt = timeout
  bool correct = false;
  bool reward_confirmed = false;
  std::optional<std::int64_t> latency_ms;

  bool operator==(const TrialResult&) const = default;
};

/// Throws unless the row is internally consistent. With a mapping, also checks
/// correct == (button == mapping[stimulus]).
void validate_result(const TrialResult& r, RewardMode mode = RewardMode::CorrectOnly,
                     const std::array<int, 3>* mapping = nullptr);

struct SessionSummary {
  int trials = 0;
  int correct = 0;
  int incorrect = 0;  // includes timeouts
  std::array<int, 3> presses{};  // trials answered on each button
  int rewards = 0;

  bool operator==(const SessionSummary&) const = default;
};

SessionSummary summarize(std::span<const TrialResult> results);

inline constexpr std::string_view kResultCsvHeader = "trial,t_start_ms,stim,button,correct,reward,latency_ms";

std::string format_result_row(const TrialResult& r);
std::string format_summary_line(const SessionSummary& s);

struct ResultFile {
  std::vector<TrialResult> rows;
  std::optional<SessionSummary> summary;
};

/// Parses a result CSV. Errors carry the 1-based line number.
ResultFile parse_result_csv(std::string_view text);

/// Append-only session result CSV; every write is flushed.
class ResultLog {
 public:
  explicit ResultLog(fs::path path);
  ~ResultLog();
  ResultLog(const ResultLog&) = delete;
  ResultLog& operator=(const ResultLog&) = delete;

  void append(const TrialResult& r, RewardMode mode = RewardMode::CorrectOnly);
  void write_summary(const SessionSummary& s);

 private:
  void write(const std::string& line);

  fs::path path_;
  std::FILE* file_ = nullptr;
  bool summary_written_ = false;
};

// ---------------------------------------------------------------------------
// Trial state machine

enum class Phase { Idle, Stimulus, AwaitResponse, Reward, InterTrial, Closed };

const char* phase_name(Phase p);

struct BlobsSeen {
  int camera_id = 0;
  std::vector<vision::Blob> blobs;
};
struct ButtonPressed {
  int button = 0;
};
struct PlaybackStarted {
  int stimulus_id = 0;
};
struct DispenseFinished {
  hwlink::DispenseOutcome outcome;
};
struct Tick {};

using Event = std::variant<BlobsSeen, ButtonPressed, PlaybackStarted, DispenseFinished, Tick>;

struct PlayStimulus {
  int trial_id = 0;
  int stimulus_id = 0;
};
struct StartDispense {
  int trial_id = 0;
};
struct WriteResult {
  TrialResult result;
};
struct Note {
  std::string text;
};

using Action = std::variant<PlayStimulus, StartDispense, WriteResult, Note>;

struct CloseResult {
  std::vector<Action> actions;
  SessionSummary summary;
};

/// One trial at a time:
///
///   IDLE --blob in trigger zone, ITI over--> STIMULUS --playback--> AWAIT_RESPONSE
///   AWAIT_RESPONSE --button--> reward due ? REWARD --dispense done--> ITI : ITI
///   AWAIT_RESPONSE --window elapsed--> ITI (timeout, button NONE)
class TrialStateMachine {
 public:
  TrialStateMachine(const SchemaConfig& config, std::uint64_t seed);

  /// Events must arrive in non-decreasing time.
  std::vector<Action> step(const Event& event, std::int64_t t_ms);
  /// Finalizes any open trial and returns the session totals. A second call
  /// throws.
  CloseResult close(std::int64_t t_ms);

  Phase phase() const { return phase_; }
  int trials_started() const { return trial_id_; }
  const SchemaConfig& config() const { return config_; }
  /// Earliest time at which a Tick could change state.
  std::int64_t next_deadline() const;

 private:
  void expire(std::int64_t t_ms, std::vector<Action>& out);
  int next_stimulus();
  void start_trial(std::int64_t t_ms, std::vector<Action>& out);
  void finish_trial(std::int64_t t_ms, std::vector<Action>& out);

  SchemaConfig config_;
  SplitMix64 rng_;
  Phase phase_ = Phase::Idle;
  std::int64_t last_t_ = INT64_MIN;
  std::int64_t iti_end_ = INT64_MIN;
  std::int64_t onset_ = 0;
  int trial_id_ = 0;
  std::optional<int> last_stimulus_;
  TrialResult current_;
  std::vector<TrialResult> finished_;
};

}  // namespace catos::schema
