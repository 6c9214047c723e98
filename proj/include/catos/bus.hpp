#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "catos/hwlink.hpp"
#include "catos/vision.hpp"

namespace catos::bus {

/// Closed set of topics, fixed at build time.
enum class Topic : std::uint8_t { Vision, Audio, Hw, Schema, Log };

inline constexpr std::array<Topic, 5> kAllTopics = {Topic::Vision, Topic::Audio, Topic::Hw, Topic::Schema,
                                                    Topic::Log};

std::string_view topic_name(Topic topic);
/// nullopt for names outside the closed set.
std::optional<Topic> topic_from_name(std::string_view name);
bool is_registered(Topic topic);

struct BlobsEvent {
  int camera_id = 0;
  std::vector<vision::Blob> blobs;
};

struct AudioEvent {
  enum class Kind { PlaybackStarted, SoundClassified };
  Kind kind = Kind::PlaybackStarted;
  int stimulus_id = 0;
  std::int64_t t_onset_ms = 0;
  double confidence = 0;
};

struct HwEvent {
  hwlink::WireMessage msg;
};

struct SchemaEvent {
  enum class Kind { PlayStimulus, TrialStarted, TrialResolved };
  Kind kind = Kind::TrialStarted;
  int trial_id = 0;
  int stimulus_id = 0;
};

struct LogLine {
  std::string text;
};

using Payload = std::variant<BlobsEvent, AudioEvent, HwEvent, SchemaEvent, LogLine>;

struct BusMessage {
  Topic topic = Topic::Log;
  std::string publisher;
  std::uint64_t seq = 0;
  std::int64_t t_sim_ms = 0;
  Payload payload;
};

using SubscriptionId = std::uint64_t;

struct SubscriptionStats {
  std::uint64_t enqueued = 0;   // messages published while subscribed
  std::uint64_t delivered = 0;  // handed out by poll
  std::uint64_t dropped = 0;    // evicted by overflow
  std::size_t pending = 0;
};

/// In-process message board. Publishing never blocks on consumers: each
/// subscription has a bounded FIFO and overflow evicts the oldest message.
/// Evictions are counted and announced on the log topic (from publisher
/// "bus") the next time the overflowing subscription polls.
///
/// Thread-safe. A subscription must be polled from one context only.
class MessageBus {
 public:
  static constexpr std::size_t kDefaultCapacity = 4096;
  static constexpr std::string_view kBusPublisher = "bus";

  explicit MessageBus(std::size_t capacity = kDefaultCapacity);

  SubscriptionId subscribe(Topic topic);
  void unsubscribe(SubscriptionId id);

  /// Rejects unknown topics, a seq that does not increase per
  /// (publisher, topic), and a timestamp older than the publisher's previous
  /// one.
  void publish(BusMessage msg);

  /// Up to max_n pending messages in delivery order. Throws for a closed or
  /// unknown subscription.
  std::vector<BusMessage> poll(SubscriptionId id, std::size_t max_n);

  SubscriptionStats stats(SubscriptionId id) const;
  std::uint64_t published(Topic topic) const;

 private:
  struct Subscription {
    Topic topic;
    std::vector<BusMessage> ring;  // circular buffer of size capacity_
    std::size_t head = 0;
    std::size_t size = 0;
    SubscriptionStats stats;
    std::uint64_t unreported_drops = 0;
  };

  void publish_locked(BusMessage msg);
  void enqueue_locked(Subscription& sub, const BusMessage& msg);

  std::size_t capacity_;
  mutable std::mutex mu_;
  std::map<SubscriptionId, Subscription> subs_;
  SubscriptionId next_id_ = 1;
  std::map<std::pair<std::string, Topic>, std::uint64_t> last_seq_;
  std::map<std::string, std::int64_t> last_t_;
  std::array<std::uint64_t, kAllTopics.size()> published_{};
  std::array<std::int64_t, kAllTopics.size()> max_t_{};
  std::uint64_t bus_seq_ = 0;
};

/// Stamps messages from one named publisher with increasing seq numbers.
class Publisher {
 public:
  Publisher(MessageBus& bus, std::string name) : bus_(bus), name_(std::move(name)) {}

  void publish(Topic topic, std::int64_t t_sim_ms, Payload payload);
  void log(std::int64_t t_sim_ms, std::string text) { publish(Topic::Log, t_sim_ms, LogLine{std::move(text)}); }

 private:
  MessageBus& bus_;
  std::string name_;
  std::array<std::uint64_t, kAllTopics.size()> seq_{};
};

}  // namespace catos::bus
