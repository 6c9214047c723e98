#pragma once

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "catos/error.hpp"

namespace catos::hwlink {

/// Frame layout on the wire:
///
///   0xAA | type | len | payload[len] | xor(type, len, payload...)
inline constexpr std::uint8_t kSync = 0xAA;

enum class MsgType : std::uint8_t {
  Dispense = 0x01,
  SetLight = 0x02,
  SetFans = 0x03,
  QuerySensors = 0x04,
  Button = 0x81,
  PiezoHit = 0x82,
  Sensors = 0x83,
  DispenseDone = 0x84,
};

const char* msg_type_name(std::uint8_t type);
bool is_known_type(std::uint8_t type);
/// Payload length the type requires; nullopt for unknown types.
std::optional<std::size_t> expected_payload_size(std::uint8_t type);

struct SensorReading {
  std::int16_t temp_centi_c = 0;
  std::uint16_t photo = 0;

  bool operator==(const SensorReading&) const = default;
};

struct WireMessage {
  std::uint8_t type = 0;
  std::vector<std::uint8_t> payload;

  bool operator==(const WireMessage&) const = default;

  MsgType kind() const { return static_cast<MsgType>(type); }
  bool is(MsgType t) const { return type == static_cast<std::uint8_t>(t); }

  static WireMessage dispense(std::uint8_t degrees);
  static WireMessage set_light(bool on);
  static WireMessage set_fans(bool on);
  static WireMessage query_sensors();
  static WireMessage button(std::uint8_t id);
  static WireMessage piezo_hit();
  static WireMessage sensors(const SensorReading& reading);
  static WireMessage dispense_done();
};

/// Throws unless the type is known, the payload length matches the type's
/// schema, and per-field constraints hold (button id <= 2, flags 0/1).
void validate(const WireMessage& msg);
bool is_valid(const WireMessage& msg);

SensorReading decode_sensors(const WireMessage& msg);

std::uint8_t checksum(std::uint8_t type, std::span<const std::uint8_t> payload);
std::vector<std::uint8_t> encode_msg(const WireMessage& msg);
void encode_into(const WireMessage& msg, std::vector<std::uint8_t>& out);

struct DecoderStats {
  std::uint64_t frames = 0;
  std::uint64_t bad_checksum = 0;
  std::uint64_t resync_count = 0;  // runs of non-sync bytes skipped
  std::uint64_t malformed = 0;     // known type, wrong payload schema

  bool operator==(const DecoderStats&) const = default;
};

/// Incremental frame parser. Accepts arbitrary chunk boundaries and never
/// throws on line noise; problems show up in stats(). A frame that fails its
/// checksum is dropped and scanning resumes at the byte after its sync byte.
/// Frames of unknown type are passed through for the consumer to judge.
class FrameDecoder {
 public:
  std::vector<WireMessage> feed(std::span<const std::uint8_t> bytes);
  void feed(std::span<const std::uint8_t> bytes, std::vector<WireMessage>& out);

  const DecoderStats& stats() const { return stats_; }
  std::size_t buffered() const { return buf_.size() - pos_; }

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
  bool skipping_ = false;
  DecoderStats stats_;
};

// ---------------------------------------------------------------------------
// Byte transport and the dispense procedure

/// In-memory full-duplex byte pipe standing in for the USB serial cable.
class ByteChannel {
 public:
  void host_write(std::span<const std::uint8_t> bytes);
  void device_write(std::span<const std::uint8_t> bytes);
  std::vector<std::uint8_t> host_read();
  std::vector<std::uint8_t> device_read();

  void close();
  bool is_open() const;

 private:
  mutable std::mutex mu_;
  std::deque<std::uint8_t> to_device_;
  std::deque<std::uint8_t> to_host_;
  bool open_ = true;
};

struct TimedMessage {
  std::int64_t t_ms = 0;
  WireMessage msg;
};

/// Host end of the serial link as the dispense procedure sees it.
class HostLink {
 public:
  virtual ~HostLink() = default;
  virtual void send(const WireMessage& msg) = 0;
  /// Returns the next device message, advancing link time no further than
  /// deadline_ms; nullopt if none arrived by then.
  virtual std::optional<TimedMessage> receive_until(std::int64_t deadline_ms) = 0;
  virtual std::int64_t now_ms() const = 0;
  virtual bool is_open() const = 0;
};

struct DispenseParams {
  std::uint8_t degrees = 45;
  int max_retries = 3;
  std::int64_t confirm_window_ms = 500;
};

struct DispenseOutcome {
  bool confirmed = false;
  int attempts = 0;
  std::optional<std::int64_t> t_confirm_ms;

  bool operator==(const DispenseOutcome&) const = default;
};

/// Non-blocking form of the dispense-with-confirmation procedure, for callers
/// that interleave it with other work. Each attempt sends DISPENSE and waits
/// confirm_window_ms for PIEZO_HIT.
class DispenseProcedure {
 public:
  explicit DispenseProcedure(const DispenseParams& params);

  /// The first DISPENSE command.
  WireMessage start(std::int64_t t_ms);
  /// Feeds a device message; returns true once the procedure is done.
  bool on_message(const WireMessage& msg, std::int64_t t_ms);
  /// Advances time; returns a DISPENSE to send if a retry is due.
  std::optional<WireMessage> on_tick(std::int64_t t_ms);
  /// Time at which the current attempt's window closes.
  std::int64_t deadline_ms() const { return attempt_deadline_; }

  bool started() const { return started_; }
  bool done() const { return done_; }
  const DispenseOutcome& outcome() const { return outcome_; }

 private:
  DispenseParams params_;
  DispenseOutcome outcome_;
  std::int64_t attempt_deadline_ = 0;
  bool started_ = false;
  bool done_ = false;
};

class LinkClosedError : public Error {
 public:
  explicit LinkClosedError(int attempts)
      : Error(ErrorKind::LinkClosed,
              "link closed during dispense after " + std::to_string(attempts) + " attempt(s)"),
        attempts_(attempts) {}

  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

/// Blocking procedure over a HostLink. Throws LinkClosedError (carrying the
/// attempts made so far) if the link closes mid-procedure.
DispenseOutcome dispense_confirmed(HostLink& link, const DispenseParams& params);

}  // namespace catos::hwlink
