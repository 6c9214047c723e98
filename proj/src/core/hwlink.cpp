#include "catos/hwlink.hpp"

namespace catos::hwlink {

const char* msg_type_name(std::uint8_t type) {
  switch (type) {
    case 0x01: return "DISPENSE";
    case 0x02: return "SET_LIGHT";
    case 0x03: return "SET_FANS";
    case 0x04: return "QUERY_SENSORS";
    case 0x81: return "BUTTON";
    case 0x82: return "PIEZO_HIT";
    case 0x83: return "SENSORS";
    case 0x84: return "DISPENSE_DONE";
    default: return "UNKNOWN";
  }
}

bool is_known_type(std::uint8_t type) { return expected_payload_size(type).has_value(); }

std::optional<std::size_t> expected_payload_size(std::uint8_t type) {
  switch (type) {
    case 0x01: return 1;
    case 0x02: return 1;
    case 0x03: return 1;
    case 0x04: return 0;
    case 0x81: return 1;
    case 0x82: return 0;
    case 0x83: return 4;
    case 0x84: return 0;
    default: return std::nullopt;
  }
}

WireMessage WireMessage::dispense(std::uint8_t degrees) { return {0x01, {degrees}}; }
WireMessage WireMessage::set_light(bool on) { return {0x02, {static_cast<std::uint8_t>(on ? 1 : 0)}}; }
WireMessage WireMessage::set_fans(bool on) { return {0x03, {static_cast<std::uint8_t>(on ? 1 : 0)}}; }
WireMessage WireMessage::query_sensors() { return {0x04, {}}; }
WireMessage WireMessage::button(std::uint8_t id) { return {0x81, {id}}; }
WireMessage WireMessage::piezo_hit() { return {0x82, {}}; }
WireMessage WireMessage::dispense_done() { return {0x84, {}}; }

WireMessage WireMessage::sensors(const SensorReading& r) {
  const auto t = static_cast<std::uint16_t>(r.temp_centi_c);
  return {0x83,
          {static_cast<std::uint8_t>(t >> 8), static_cast<std::uint8_t>(t & 0xFF),
           static_cast<std::uint8_t>(r.photo >> 8), static_cast<std::uint8_t>(r.photo & 0xFF)}};
}

void validate(const WireMessage& msg) {
  const auto expected = expected_payload_size(msg.type);
  if (!expected) throw Error(ErrorKind::InvalidArgument, "unknown message type " + std::to_string(msg.type));
  if (msg.payload.size() != *expected) {
    throw Error(ErrorKind::InvalidArgument,
                std::string(msg_type_name(msg.type)) + ": payload must be " + std::to_string(*expected) +
                    " byte(s)");
  }
  switch (msg.kind()) {
    case MsgType::Button:
      if (msg.payload[0] > 2) throw Error(ErrorKind::InvalidArgument, "BUTTON: id must be 0..2");
      break;
    case MsgType::SetLight:
    case MsgType::SetFans:
      if (msg.payload[0] > 1) throw Error(ErrorKind::InvalidArgument, "SET_*: flag must be 0 or 1");
      break;
    default:
      break;
  }
}

bool is_valid(const WireMessage& msg) {
  try {
    validate(msg);
    return true;
  } catch (const Error&) {
    return false;
  }
}

SensorReading decode_sensors(const WireMessage& msg) {
  if (!msg.is(MsgType::Sensors) || msg.payload.size() != 4) {
    throw Error(ErrorKind::InvalidArgument, "not a SENSORS message");
  }
  const auto& p = msg.payload;
  return {static_cast<std::int16_t>(static_cast<std::uint16_t>((p[0] << 8) | p[1])),
          static_cast<std::uint16_t>((p[2] << 8) | p[3])};
}

std::uint8_t checksum(std::uint8_t type, std::span<const std::uint8_t> payload) {
  std::uint8_t x = type ^ static_cast<std::uint8_t>(payload.size());
  for (std::uint8_t b : payload) x ^= b;
  return x;
}

void encode_into(const WireMessage& msg, std::vector<std::uint8_t>& out) {
  if (msg.payload.size() > 255) throw Error(ErrorKind::InvalidArgument, "payload exceeds 255 bytes");
  out.push_back(kSync);
  out.push_back(msg.type);
  out.push_back(static_cast<std::uint8_t>(msg.payload.size()));
  out.insert(out.end(), msg.payload.begin(), msg.payload.end());
  out.push_back(checksum(msg.type, msg.payload));
}

std::vector<std::uint8_t> encode_msg(const WireMessage& msg) {
  std::vector<std::uint8_t> out;
  out.reserve(msg.payload.size() + 4);
  encode_into(msg, out);
  return out;
}

// ---------------------------------------------------------------------------

std::vector<WireMessage> FrameDecoder::feed(std::span<const std::uint8_t> bytes) {
  std::vector<WireMessage> out;
  feed(bytes, out);
  return out;
}

void FrameDecoder::feed(std::span<const std::uint8_t> bytes, std::vector<WireMessage>& out) {
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
  while (true) {
    while (pos_ < buf_.size() && buf_[pos_] != kSync) {
      if (!skipping_) {
        skipping_ = true;
        ++stats_.resync_count;
      }
      ++pos_;
    }
    if (pos_ >= buf_.size()) break;
    skipping_ = false;
    if (buf_.size() - pos_ < 3) break;
    const std::size_t len = buf_[pos_ + 2];
    if (buf_.size() - pos_ < len + 4) break;

    const std::uint8_t type = buf_[pos_ + 1];
    const std::span<const std::uint8_t> payload(buf_.data() + pos_ + 3, len);
    if (checksum(type, payload) != buf_[pos_ + 3 + len]) {
      ++stats_.bad_checksum;
      ++pos_;
      continue;
    }
    WireMessage msg{type, {payload.begin(), payload.end()}};
    pos_ += len + 4;
    if (is_known_type(type) && !is_valid(msg)) {
      ++stats_.malformed;
      continue;
    }
    ++stats_.frames;
    out.push_back(std::move(msg));
  }
  if (pos_ == buf_.size()) {
    buf_.clear();
    pos_ = 0;
  } else if (pos_ > 4096) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
}

// ---------------------------------------------------------------------------

void ByteChannel::host_write(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  if (!open_) throw Error(ErrorKind::LinkClosed, "serial link is closed");
  to_device_.insert(to_device_.end(), bytes.begin(), bytes.end());
}

void ByteChannel::device_write(std::span<const std::uint8_t> bytes) {
  std::lock_guard lock(mu_);
  if (!open_) throw Error(ErrorKind::LinkClosed, "serial link is closed");
  to_host_.insert(to_host_.end(), bytes.begin(), bytes.end());
}

std::vector<std::uint8_t> ByteChannel::host_read() {
  std::lock_guard lock(mu_);
  std::vector<std::uint8_t> out(to_host_.begin(), to_host_.end());
  to_host_.clear();
  return out;
}

std::vector<std::uint8_t> ByteChannel::device_read() {
  std::lock_guard lock(mu_);
  std::vector<std::uint8_t> out(to_device_.begin(), to_device_.end());
  to_device_.clear();
  return out;
}

void ByteChannel::close() {
  std::lock_guard lock(mu_);
  open_ = false;
}

bool ByteChannel::is_open() const {
  std::lock_guard lock(mu_);
  return open_;
}

// ---------------------------------------------------------------------------

DispenseProcedure::DispenseProcedure(const DispenseParams& params) : params_(params) {
  if (params.max_retries < 0) throw Error(ErrorKind::InvalidArgument, "max_retries must be >= 0");
  if (params.confirm_window_ms <= 0) throw Error(ErrorKind::InvalidArgument, "confirm window must be positive");
}

WireMessage DispenseProcedure::start(std::int64_t t_ms) {
  if (started_) throw Error(ErrorKind::State, "dispense procedure already started");
  started_ = true;
  outcome_.attempts = 1;
  attempt_deadline_ = t_ms + params_.confirm_window_ms;
  return WireMessage::dispense(params_.degrees);
}

bool DispenseProcedure::on_message(const WireMessage& msg, std::int64_t t_ms) {
  if (done_ || !started_) return done_;
  if (msg.is(MsgType::PiezoHit) && t_ms <= attempt_deadline_) {
    outcome_.confirmed = true;
    outcome_.t_confirm_ms = t_ms;
    done_ = true;
  }
  return done_;
}

std::optional<WireMessage> DispenseProcedure::on_tick(std::int64_t t_ms) {
  if (done_ || !started_ || t_ms < attempt_deadline_) return std::nullopt;
  if (outcome_.attempts > params_.max_retries) {
    done_ = true;
    return std::nullopt;
  }
  ++outcome_.attempts;
  attempt_deadline_ = t_ms + params_.confirm_window_ms;
  return WireMessage::dispense(params_.degrees);
}

DispenseOutcome dispense_confirmed(HostLink& link, const DispenseParams& params) {
  DispenseProcedure proc(params);
  if (!link.is_open()) throw LinkClosedError(0);
  link.send(proc.start(link.now_ms()));
  while (!proc.done()) {
    if (!link.is_open()) throw LinkClosedError(proc.outcome().attempts);
    if (auto m = link.receive_until(proc.deadline_ms())) {
      proc.on_message(m->msg, m->t_ms);
      continue;
    }
    if (!link.is_open()) throw LinkClosedError(proc.outcome().attempts);
    if (auto retry = proc.on_tick(link.now_ms())) link.send(*retry);
  }
  return proc.outcome();
}

}  // namespace catos::hwlink
