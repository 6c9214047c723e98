#include "catos/rigsim.hpp"

#include <algorithm>
#include <cmath>

#include "catos/error.hpp"

namespace catos::rig {

using hwlink::MsgType;
using hwlink::TimedMessage;
using hwlink::WireMessage;

double DayCurve::at(std::int64_t t_ms) const {
  if (knots.empty()) return 600.0;
  if (t_ms <= knots.front().first) return knots.front().second;
  if (t_ms >= knots.back().first) return knots.back().second;
  auto hi = std::upper_bound(knots.begin(), knots.end(), t_ms,
                             [](std::int64_t t, const auto& k) { return t < k.first; });
  auto lo = hi - 1;
  const double f = static_cast<double>(t_ms - lo->first) / static_cast<double>(hi->first - lo->first);
  return lo->second + (hi->second - lo->second) * f;
}

namespace {

void read_env(const Json& j, const std::string& path, std::vector<std::string>& errors, EnvParams& e) {
  JsonFields f(j, path, errors);
  f.read("initial_temp_c", e.initial_temp_c);
  f.read("ambient_c", e.ambient_c);
  f.read("heat_load_c", e.heat_load_c);
  f.read("fan_cooling_c", e.fan_cooling_c);
  f.read("tau_ms", e.tau_ms);
  f.read("temp_hi_c", e.temp_hi_c);
  f.read("fan_band_c", e.fan_band_c);
  f.read("light_lo", e.light_lo);
  f.read("light_band", e.light_band);
  f.read("step_ms", e.step_ms);
  f.finish();
  if (!(e.tau_ms > 0)) f.error("tau_ms: must be positive");
  if (e.step_ms <= 0) f.error("step_ms: must be positive");
  if (e.fan_band_c < 0 || e.light_band < 0) f.error("hysteresis bands must be non-negative");
}

void read_feeder(const Json& j, const std::string& path, std::vector<std::string>& errors, FeederParams& p) {
  JsonFields f(j, path, errors);
  f.read("p_dispense", p.p_dispense);
  f.read("piezo_delay_ms", p.piezo_delay_ms);
  f.read("rotation_ms", p.rotation_ms);
  f.read("hopper_pieces", p.hopper_pieces);
  f.finish();
  if (p.p_dispense < 0 || p.p_dispense > 1) f.error("p_dispense: must lie in [0, 1]");
  if (p.hopper_pieces < 0) f.error("hopper_pieces: must be non-negative");
  if (p.piezo_delay_ms < 0 || p.rotation_ms < 0) f.error("delays must be non-negative");
}

void read_agent(const Json& j, const std::string& path, std::vector<std::string>& errors, AgentPolicy& a) {
  JsonFields f(j, path, errors);
  f.read("accuracy", a.accuracy);
  f.read("approach_latency_ms", a.approach_latency_ms);
  f.read("trial_appetite", a.trial_appetite);
  f.finish();
  if (a.accuracy < 0 || a.accuracy > 1) f.error("accuracy: must lie in [0, 1]");
  if (a.approach_latency_ms < 0) f.error("approach_latency_ms: must be non-negative");
  if (a.trial_appetite < 0) f.error("trial_appetite: must be non-negative");
}

void read_behavior(const Json& j, const std::string& path, std::vector<std::string>& errors,
                   AgentBehavior& b) {
  JsonFields f(j, path, errors);
  f.read("zone_x", b.zone_x);
  f.read("zone_y", b.zone_y);
  f.read("entry_x", b.entry_x);
  f.read("entry_y_min", b.entry_y_min);
  f.read("entry_y_max", b.entry_y_max);
  f.read("radius", b.radius);
  f.read("intensity", b.intensity);
  f.read("walk_ms", b.walk_ms);
  f.read("wander_ms", b.wander_ms);
  f.read("wander_px", b.wander_px);
  f.read("linger_ms", b.linger_ms);
  f.read("reward_wait_ms", b.reward_wait_ms);
  f.read("eat_ms", b.eat_ms);
  f.read("vocal_rate_per_hour", b.vocal_rate_per_hour);
  f.read("vocal_ms", b.vocal_ms);
  f.finish();
  if (b.walk_ms <= 0 || b.wander_ms <= 0) f.error("walk_ms and wander_ms must be positive");
  if (b.intensity < 0 || b.intensity > 255) f.error("intensity: must lie in [0, 255]");
  if (!(b.radius > 0)) f.error("radius: must be positive");
  if (b.vocal_rate_per_hour < 0) f.error("vocal_rate_per_hour: must be non-negative");
  if (b.vocal_ms <= 0) f.error("vocal_ms: must be positive");
}

}  // namespace

RigConfig rig_config_from_json(const Json& j, const std::string& path, std::vector<std::string>& errors) {
  RigConfig c;
  JsonFields f(j, path, errors);
  if (const Json* e = f.object("env")) read_env(*e, path + ".env", errors, c.env);
  if (const Json* e = f.object("feeder")) read_feeder(*e, path + ".feeder", errors, c.feeder);
  if (const Json* e = f.object("agent")) read_agent(*e, path + ".agent", errors, c.agent);
  if (const Json* e = f.object("behavior")) read_behavior(*e, path + ".behavior", errors, c.behavior);
  f.read("day_curve", c.day_curve.knots);
  f.finish();
  for (std::size_t i = 1; i < c.day_curve.knots.size(); ++i) {
    if (c.day_curve.knots[i].first <= c.day_curve.knots[i - 1].first) {
      f.error("day_curve: knot times must strictly increase");
      break;
    }
  }
  return c;
}

Json to_json(const RigConfig& c) {
  const auto& e = c.env;
  const auto& p = c.feeder;
  const auto& a = c.agent;
  const auto& b = c.behavior;
  return Json{
      {"env",
       {{"initial_temp_c", e.initial_temp_c}, {"ambient_c", e.ambient_c}, {"heat_load_c", e.heat_load_c},
        {"fan_cooling_c", e.fan_cooling_c}, {"tau_ms", e.tau_ms}, {"temp_hi_c", e.temp_hi_c},
        {"fan_band_c", e.fan_band_c}, {"light_lo", e.light_lo}, {"light_band", e.light_band},
        {"step_ms", e.step_ms}}},
      {"feeder",
       {{"p_dispense", p.p_dispense}, {"piezo_delay_ms", p.piezo_delay_ms}, {"rotation_ms", p.rotation_ms},
        {"hopper_pieces", p.hopper_pieces}}},
      {"agent",
       {{"accuracy", a.accuracy}, {"approach_latency_ms", a.approach_latency_ms},
        {"trial_appetite", a.trial_appetite}}},
      {"behavior",
       {{"zone_x", b.zone_x}, {"zone_y", b.zone_y}, {"entry_x", b.entry_x}, {"entry_y_min", b.entry_y_min},
        {"entry_y_max", b.entry_y_max}, {"radius", b.radius}, {"intensity", b.intensity},
        {"walk_ms", b.walk_ms}, {"wander_ms", b.wander_ms}, {"wander_px", b.wander_px},
        {"linger_ms", b.linger_ms}, {"reward_wait_ms", b.reward_wait_ms}, {"eat_ms", b.eat_ms},
        {"vocal_rate_per_hour", b.vocal_rate_per_hour}, {"vocal_ms", b.vocal_ms}}},
      {"day_curve", c.day_curve.knots},
  };
}

RigState initial_state(const RigConfig& config, std::uint64_t seed) {
  RigState s;
  s.temp_c = config.env.initial_temp_c;
  s.photo_level = static_cast<int>(std::clamp(std::lround(config.day_curve.at(0)), 0L, 1023L));
  s.hopper_pieces = config.feeder.hopper_pieces;
  s.rng = SplitMix64(seed).fork(0xFEED);
  return s;
}

std::vector<TimedMessage> handle_host_msg(RigState& state, const WireMessage& msg, std::int64_t t_ms,
                                          const FeederParams& feeder) {
  std::vector<TimedMessage> replies;
  if (!hwlink::is_valid(msg)) {
    ++state.unknown_msgs;
    return replies;
  }
  switch (msg.kind()) {
    case MsgType::Dispense:
      // The screw turns forward and back; only the net position is tracked.
      state.screw_position_deg = std::fmod(state.screw_position_deg + msg.payload[0], 360.0);
      if (state.hopper_pieces > 0 && state.rng.bernoulli(feeder.p_dispense)) {
        --state.hopper_pieces;
        replies.push_back({t_ms + feeder.piezo_delay_ms, WireMessage::piezo_hit()});
      }
      replies.push_back({t_ms + feeder.rotation_ms, WireMessage::dispense_done()});
      break;
    case MsgType::QuerySensors: {
      const auto centi = static_cast<std::int16_t>(std::clamp(std::lround(state.temp_c * 100.0), -32768L, 32767L));
      replies.push_back({t_ms, WireMessage::sensors({centi, static_cast<std::uint16_t>(state.photo_level)})});
      break;
    }
    case MsgType::SetLight:
      state.light_on = msg.payload[0] != 0;
      state.light_override = true;
      break;
    case MsgType::SetFans:
      state.fans_on = msg.payload[0] != 0;
      state.fans_override = true;
      break;
    default:
      // Device-to-host event types are not commands.
      ++state.unknown_msgs;
      break;
  }
  return replies;
}

const char* env_action_name(EnvActionKind kind) {
  switch (kind) {
    case EnvActionKind::FansOn: return "fans on";
    case EnvActionKind::FansOff: return "fans off";
    case EnvActionKind::LightOn: return "light on";
    case EnvActionKind::LightOff: return "light off";
  }
  return "?";
}

std::vector<EnvAction> step_env(RigState& state, std::int64_t t_ms, std::int64_t dt_ms, const EnvParams& env,
                                const DayCurve& day_curve) {
  if (dt_ms <= 0) throw Error(ErrorKind::InvalidArgument, "dt_ms must be positive");
  const double target = env.ambient_c + env.heat_load_c - (state.fans_on ? env.fan_cooling_c : 0.0);
  state.temp_c = target + (state.temp_c - target) * std::exp(-static_cast<double>(dt_ms) / env.tau_ms);
  state.photo_level = static_cast<int>(std::clamp(std::lround(day_curve.at(t_ms)), 0L, 1023L));

  std::vector<EnvAction> actions;
  if (!state.fans_override) {
    if (!state.fans_on && state.temp_c >= env.temp_hi_c) {
      state.fans_on = true;
      actions.push_back({t_ms, EnvActionKind::FansOn});
    } else if (state.fans_on && state.temp_c <= env.temp_hi_c - env.fan_band_c) {
      state.fans_on = false;
      actions.push_back({t_ms, EnvActionKind::FansOff});
    }
  }
  if (!state.light_override) {
    if (!state.light_on && state.photo_level < env.light_lo) {
      state.light_on = true;
      actions.push_back({t_ms, EnvActionKind::LightOn});
    } else if (state.light_on && state.photo_level >= env.light_lo + env.light_band) {
      state.light_on = false;
      actions.push_back({t_ms, EnvActionKind::LightOff});
    }
  }
  return actions;
}

// ---------------------------------------------------------------------------

int choose_button(const AgentPolicy& policy, int correct_button, SplitMix64& rng) {
  if (correct_button < 0 || correct_button > 2) throw Error(ErrorKind::InvalidArgument, "button must be 0..2");
  if (rng.uniform() < policy.accuracy) return correct_button;
  const int offset = rng.uniform() < 0.5 ? 1 : 2;
  return (correct_button + offset) % 3;
}

Agent::Agent(const AgentPolicy& policy, const AgentBehavior& behavior, std::array<int, 3> learned_mapping,
             SplitMix64 rng)
    : policy_(policy), behavior_(behavior), mapping_(learned_mapping), rng_(rng) {
  x_ = behavior.entry_x;
  y_ = behavior.entry_y_min;
  schedule_next_visit(0);
  if (behavior_.vocal_rate_per_hour > 0) {
    next_vocal_ = std::llround(rng_.exponential(3.6e6 / behavior_.vocal_rate_per_hour));
  }
}

void Agent::schedule_next_visit(std::int64_t from_ms) {
  if (policy_.trial_appetite <= 0) {
    next_visit_ = INT64_MAX;
    return;
  }
  next_visit_ = from_ms + 1 + std::llround(rng_.exponential(3.6e6 / policy_.trial_appetite));
}

vision::PathEntry Agent::move_to(std::int64_t t_ms, std::int64_t dur_ms, double x, double y) {
  vision::PathEntry e;
  e.blob_id = kBlobId;
  e.t_begin_ms = t_ms;
  e.t_end_ms = t_ms + dur_ms;
  e.x0 = x_;
  e.y0 = y_;
  e.x1 = x;
  e.y1 = y;
  e.radius = behavior_.radius;
  e.intensity = static_cast<std::uint8_t>(behavior_.intensity);
  x_ = x;
  y_ = y;
  segment_end_ = e.t_end_ms;
  return e;
}

std::int64_t Agent::next_wakeup() const {
  const std::int64_t own = phase_ == Phase::Away ? next_visit_ : std::min(segment_end_, press_at_);
  return std::min(own, next_vocal_);
}

std::vector<Interval> Agent::visits(std::optional<std::int64_t> until_ms) const {
  std::vector<Interval> out = visits_;
  if (until_ms && phase_ != Phase::Away) out.push_back({visit_begin_, std::min(*until_ms, segment_end_)});
  return out;
}

void Agent::hear_stimulus(int stimulus_id, std::int64_t t_ms) {
  // A stimulus triggered while still walking in is answered as well.
  if (phase_ != Phase::InZone && phase_ != Phase::Approaching) return;
  if (stimulus_id < 0 || stimulus_id > 2) return;
  heard_ = stimulus_id;
  press_at_ = t_ms + policy_.approach_latency_ms;
  phase_ = Phase::Responding;
}

void Agent::see_food(std::int64_t t_ms) {
  if (phase_ != Phase::AwaitReward) return;
  phase_ = Phase::Eating;
  phase_deadline_ = t_ms + behavior_.eat_ms;
}

AgentOutput Agent::step(std::int64_t t_ms) {
  AgentOutput out;
  if (t_ms >= next_vocal_) {
    out.vocalize = true;
    next_vocal_ = t_ms + 1 + std::llround(rng_.exponential(3.6e6 / behavior_.vocal_rate_per_hour));
  }
  auto wander = [&] {
    const double tx = behavior_.zone_x + rng_.uniform(-behavior_.wander_px, behavior_.wander_px);
    const double ty = behavior_.zone_y + rng_.uniform(-behavior_.wander_px, behavior_.wander_px);
    out.paths.push_back(move_to(t_ms, behavior_.wander_ms, tx, ty));
  };

  switch (phase_) {
    case Phase::Away:
      if (t_ms >= next_visit_) {
        x_ = behavior_.entry_x;
        y_ = rng_.uniform(behavior_.entry_y_min, behavior_.entry_y_max);
        visit_begin_ = t_ms;
        phase_ = Phase::Approaching;
        out.paths.push_back(move_to(t_ms, behavior_.walk_ms, behavior_.zone_x, behavior_.zone_y));
      }
      break;
    case Phase::Approaching:
      if (t_ms >= segment_end_) {
        phase_ = Phase::InZone;
        linger_deadline_ = t_ms + behavior_.linger_ms;
        wander();
      }
      break;
    case Phase::InZone:
    case Phase::Responding:
    case Phase::AwaitReward:
    case Phase::Eating: {
      if (phase_ == Phase::Responding && t_ms >= press_at_) {
        out.button = choose_button(policy_, mapping_[static_cast<std::size_t>(*heard_)], rng_);
        ++presses_;
        press_at_ = INT64_MAX;
        phase_ = Phase::AwaitReward;
        phase_deadline_ = t_ms + behavior_.reward_wait_ms;
      }
      if (t_ms >= segment_end_) {
        const bool leave = (phase_ == Phase::InZone && t_ms >= linger_deadline_) ||
                           ((phase_ == Phase::AwaitReward || phase_ == Phase::Eating) && t_ms >= phase_deadline_);
        if (leave) {
          phase_ = Phase::Leaving;
          heard_.reset();
          const double ty = rng_.uniform(behavior_.entry_y_min, behavior_.entry_y_max);
          out.paths.push_back(move_to(t_ms, behavior_.walk_ms, behavior_.entry_x, ty));
        } else {
          wander();
        }
      }
      break;
    }
    case Phase::Leaving:
      if (t_ms >= segment_end_) {
        visits_.push_back({visit_begin_, segment_end_});
        phase_ = Phase::Away;
        schedule_next_visit(t_ms);
      }
      break;
  }
  return out;
}

// ---------------------------------------------------------------------------

Rig::Rig(const RigConfig& config, std::uint64_t seed, hwlink::ByteChannel& channel, vision::MotionScript* script,
         std::array<int, 3> learned_mapping, bool with_agent)
    : config_(config),
      state_(initial_state(config, seed)),
      channel_(channel),
      script_(script),
      next_env_ms_(config.env.step_ms) {
  if (with_agent) {
    agent_.emplace(config.agent, config.behavior, learned_mapping, SplitMix64(seed).fork(0xA6E));
  }
}

void Rig::advance_to(std::int64_t t_ms) {
  now_ms_ = t_ms;
  const auto bytes = channel_.device_read();
  if (!bytes.empty()) {
    for (const WireMessage& msg : decoder_.feed(bytes)) {
      for (auto& reply : handle_host_msg(state_, msg, t_ms, config_.feeder)) {
        outbox_.emplace(reply.t_ms, std::move(reply.msg));
      }
    }
  }

  if (agent_) {
    while (agent_->next_wakeup() <= t_ms) {
      const std::int64_t w = agent_->next_wakeup();
      AgentOutput out = agent_->step(w);
      if (out.button) outbox_.emplace(w, WireMessage::button(static_cast<std::uint8_t>(*out.button)));
      if (script_ != nullptr) {
        for (const auto& p : out.paths) script_->add(p);
      }
      if (out.vocalize) vocalizations_.push_back(w);
    }
  }

  while (!outbox_.empty() && outbox_.begin()->first <= t_ms) {
    auto node = outbox_.extract(outbox_.begin());
    if (!channel_.is_open()) continue;
    channel_.device_write(hwlink::encode_msg(node.mapped()));
    if (node.mapped().is(MsgType::PiezoHit)) {
      ++piezo_hits_sent_;
      if (agent_) agent_->see_food(node.key());
    }
  }

  while (next_env_ms_ <= t_ms) {
    for (const auto& a : step_env(state_, next_env_ms_, config_.env.step_ms, config_.env, config_.day_curve)) {
      env_actions_.push_back(a);
    }
    next_env_ms_ += config_.env.step_ms;
  }
}

std::int64_t Rig::next_event_time() const {
  std::int64_t t = next_env_ms_;
  if (!outbox_.empty()) t = std::min(t, outbox_.begin()->first);
  if (agent_) t = std::min(t, agent_->next_wakeup());
  return t;
}

void Rig::hear_stimulus(int stimulus_id, std::int64_t t_ms) {
  if (agent_) agent_->hear_stimulus(stimulus_id, t_ms);
}

std::vector<EnvAction> Rig::take_env_actions() { return std::exchange(env_actions_, {}); }

std::vector<std::int64_t> Rig::take_vocalizations() { return std::exchange(vocalizations_, {}); }

// ---------------------------------------------------------------------------

RigLink::RigLink(Rig& rig, hwlink::ByteChannel& channel, std::int64_t t0_ms)
    : rig_(rig), channel_(channel), now_ms_(t0_ms) {}

void RigLink::send(const WireMessage& msg) { channel_.host_write(hwlink::encode_msg(msg)); }

std::optional<TimedMessage> RigLink::receive_until(std::int64_t deadline_ms) {
  while (true) {
    if (!pending_.empty()) {
      TimedMessage m = std::move(pending_.front());
      pending_.erase(pending_.begin());
      return m;
    }
    if (!channel_.is_open()) return std::nullopt;
    rig_.advance_to(now_ms_);
    for (auto& msg : decoder_.feed(channel_.host_read())) {
      pending_.push_back({now_ms_, msg});
      log_.push_back({now_ms_, std::move(msg)});
    }
    if (!pending_.empty()) continue;
    if (now_ms_ >= deadline_ms) return std::nullopt;
    now_ms_ = std::max(now_ms_ + 1, std::min(rig_.next_event_time(), deadline_ms));
  }
}

}  // namespace catos::rig
