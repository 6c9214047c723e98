#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "catos/hwlink.hpp"
#include "catos/rng.hpp"
#include "catos/util.hpp"
#include "catos/vision.hpp"

namespace catos::rig {

/// Ambient light over the session: piecewise linear through (t_ms, level)
/// knots, held constant outside them.
struct DayCurve {
  std::vector<std::pair<std::int64_t, double>> knots;

  double at(std::int64_t t_ms) const;
};

struct EnvParams {
  double initial_temp_c = 26.0;
  double ambient_c = 24.0;
  double heat_load_c = 8.0;
  double fan_cooling_c = 10.0;
  double tau_ms = 600000.0;
  double temp_hi_c = 30.0;
  double fan_band_c = 2.0;
  int light_lo = 200;
  int light_band = 50;
  std::int64_t step_ms = 1000;
};

struct FeederParams {
  double p_dispense = 0.8;
  std::int64_t piezo_delay_ms = 150;
  std::int64_t rotation_ms = 400;
  int hopper_pieces = 500;
};

struct AgentPolicy {
  double accuracy = 0.7;
  std::int64_t approach_latency_ms = 1200;
  double trial_appetite = 10.0;  // visits per hour
};

/// How the simulated animal moves through the camera view (camera-0
/// coordinates) and how long it stays.
struct AgentBehavior {
  double zone_x = 80;
  double zone_y = 36;
  double entry_x = 4;
  double entry_y_min = 12;
  double entry_y_max = 60;
  double radius = 6;
  int intensity = 230;
  std::int64_t walk_ms = 3000;
  std::int64_t wander_ms = 500;
  double wander_px = 14;
  std::int64_t linger_ms = 12000;
  std::int64_t reward_wait_ms = 1500;
  std::int64_t eat_ms = 5000;
  double vocal_rate_per_hour = 0;
  std::int64_t vocal_ms = 300;
};

struct RigConfig {
  EnvParams env;
  FeederParams feeder;
  DayCurve day_curve;
  AgentPolicy agent;
  AgentBehavior behavior;
};

RigConfig rig_config_from_json(const Json& j, const std::string& path, std::vector<std::string>& errors);
Json to_json(const RigConfig& c);

struct RigState {
  double temp_c = 26.0;
  int photo_level = 512;
  bool fans_on = false;
  bool light_on = false;
  bool fans_override = false;   // set by SET_FANS; suspends the fan rule
  bool light_override = false;  // set by SET_LIGHT; suspends the light rule
  double screw_position_deg = 0;
  int hopper_pieces = 0;
  SplitMix64 rng;
  std::uint64_t unknown_msgs = 0;
};

RigState initial_state(const RigConfig& config, std::uint64_t seed);

/// Microcontroller response to one host command. Replies carry the time at
/// which the board emits them. Unknown or malformed commands are counted in
/// state.unknown_msgs and otherwise ignored.
std::vector<hwlink::TimedMessage> handle_host_msg(RigState& state, const hwlink::WireMessage& msg,
                                                  std::int64_t t_ms, const FeederParams& feeder);

enum class EnvActionKind { FansOn, FansOff, LightOn, LightOff };

struct EnvAction {
  std::int64_t t_ms;
  EnvActionKind kind;
};

const char* env_action_name(EnvActionKind kind);

/// Advances temperature and light by dt_ms ending at t_ms, then applies the
/// fan and light rules with hysteresis. Each device toggles at most once.
std::vector<EnvAction> step_env(RigState& state, std::int64_t t_ms, std::int64_t dt_ms,
                                const EnvParams& env, const DayCurve& day_curve);

// ---------------------------------------------------------------------------
// Agent

/// Button pressed for a stimulus whose correct button is `correct_button`:
/// correct with probability `accuracy`, otherwise one of the two others
/// with equal probability.
int choose_button(const AgentPolicy& policy, int correct_button, SplitMix64& rng);

struct Interval {
  std::int64_t begin_ms = 0;
  std::int64_t end_ms = 0;

  bool operator==(const Interval&) const = default;
};

struct AgentOutput {
  std::optional<int> button;
  std::vector<vision::PathEntry> paths;
  bool vocalize = false;
};

/// Scripted animal. Visits arrive as a Poisson process at trial_appetite per
/// hour; each visit walks to the trigger zone, keeps moving there, answers a
/// stimulus after approach_latency_ms, eats if food drops, and walks out.
class Agent {
 public:
  static constexpr int kBlobId = 1;

  Agent(const AgentPolicy& policy, const AgentBehavior& behavior, std::array<int, 3> learned_mapping,
        SplitMix64 rng);

  AgentOutput step(std::int64_t t_ms);
  void hear_stimulus(int stimulus_id, std::int64_t t_ms);
  void see_food(std::int64_t t_ms);

  std::int64_t next_wakeup() const;
  bool in_view() const { return phase_ != Phase::Away; }
  /// Closed in-view intervals so far, plus the open one if `until_ms` is given.
  std::vector<Interval> visits(std::optional<std::int64_t> until_ms = std::nullopt) const;
  std::uint64_t presses() const { return presses_; }

 private:
  enum class Phase { Away, Approaching, InZone, Responding, AwaitReward, Eating, Leaving };

  void schedule_next_visit(std::int64_t from_ms);
  vision::PathEntry move_to(std::int64_t t_ms, std::int64_t dur_ms, double x, double y);

  AgentPolicy policy_;
  AgentBehavior behavior_;
  std::array<int, 3> mapping_;
  SplitMix64 rng_;
  Phase phase_ = Phase::Away;
  double x_ = 0;
  double y_ = 0;
  std::int64_t segment_end_ = 0;
  std::int64_t next_visit_ = INT64_MAX;
  std::int64_t linger_deadline_ = 0;
  std::int64_t press_at_ = INT64_MAX;
  std::int64_t phase_deadline_ = 0;
  std::int64_t next_vocal_ = INT64_MAX;
  std::optional<int> heard_;
  std::vector<Interval> visits_;
  std::int64_t visit_begin_ = 0;
  std::uint64_t presses_ = 0;
};

// ---------------------------------------------------------------------------
// Board

/// The simulated microcontroller board with feeder, environment and animal.
/// Talks to the host only through the byte channel.
class Rig {
 public:
  Rig(const RigConfig& config, std::uint64_t seed, hwlink::ByteChannel& channel,
      vision::MotionScript* script = nullptr, std::array<int, 3> learned_mapping = {0, 1, 2},
      bool with_agent = true);

  /// Processes host bytes received so far and everything due at or before t_ms.
  void advance_to(std::int64_t t_ms);
  std::int64_t next_event_time() const;

  /// Playback reached the room's loudspeaker.
  void hear_stimulus(int stimulus_id, std::int64_t t_ms);

  const RigState& state() const { return state_; }
  const RigConfig& config() const { return config_; }
  const Agent* agent() const { return agent_ ? &*agent_ : nullptr; }
  std::uint64_t piezo_hits_sent() const { return piezo_hits_sent_; }
  int initial_hopper() const { return config_.feeder.hopper_pieces; }

  std::vector<EnvAction> take_env_actions();
  std::vector<std::int64_t> take_vocalizations();

 private:
  RigConfig config_;
  RigState state_;
  hwlink::ByteChannel& channel_;
  hwlink::FrameDecoder decoder_;
  vision::MotionScript* script_;
  std::optional<Agent> agent_;
  std::multimap<std::int64_t, hwlink::WireMessage> outbox_;
  std::int64_t next_env_ms_;
  std::int64_t now_ms_ = 0;
  std::uint64_t piezo_hits_sent_ = 0;
  std::vector<EnvAction> env_actions_;
  std::vector<std::int64_t> vocalizations_;
};

/// HostLink over an in-process Rig, with its own simulated clock. Time only
/// moves inside receive_until.
class RigLink : public hwlink::HostLink {
 public:
  RigLink(Rig& rig, hwlink::ByteChannel& channel, std::int64_t t0_ms = 0);

  void send(const hwlink::WireMessage& msg) override;
  std::optional<hwlink::TimedMessage> receive_until(std::int64_t deadline_ms) override;
  std::int64_t now_ms() const override { return now_ms_; }
  bool is_open() const override { return channel_.is_open(); }

  /// Every device message received so far, in arrival order.
  const std::vector<hwlink::TimedMessage>& received() const { return log_; }

 private:
  Rig& rig_;
  hwlink::ByteChannel& channel_;
  hwlink::FrameDecoder decoder_;
  std::vector<hwlink::TimedMessage> pending_;
  std::vector<hwlink::TimedMessage> log_;
  std::int64_t now_ms_;
};

}  // namespace catos::rig
