#include "catos/bus.hpp"

#include <algorithm>

#include "catos/error.hpp"

namespace catos::bus {

std::string_view topic_name(Topic topic) {
  switch (topic) {
    case Topic::Vision: return "vision";
    case Topic::Audio: return "audio";
    case Topic::Hw: return "hw";
    case Topic::Schema: return "schema";
    case Topic::Log: return "log";
  }
  return "?";
}

std::optional<Topic> topic_from_name(std::string_view name) {
  for (Topic t : kAllTopics) {
    if (topic_name(t) == name) return t;
  }
  return std::nullopt;
}

bool is_registered(Topic topic) { return static_cast<std::size_t>(topic) < kAllTopics.size(); }

MessageBus::MessageBus(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw Error(ErrorKind::InvalidArgument, "bus capacity must be positive");
}

SubscriptionId MessageBus::subscribe(Topic topic) {
  if (!is_registered(topic)) throw Error(ErrorKind::InvalidArgument, "unknown topic");
  std::lock_guard lock(mu_);
  const SubscriptionId id = next_id_++;
  Subscription sub{topic, {}, 0, 0, {}, 0};
  sub.ring.resize(capacity_);
  subs_.emplace(id, std::move(sub));
  return id;
}

void MessageBus::unsubscribe(SubscriptionId id) {
  std::lock_guard lock(mu_);
  subs_.erase(id);
}

void MessageBus::publish(BusMessage msg) {
  if (!is_registered(msg.topic)) throw Error(ErrorKind::InvalidArgument, "unknown topic");
  std::lock_guard lock(mu_);
  const auto key = std::make_pair(msg.publisher, msg.topic);
  if (auto it = last_seq_.find(key); it != last_seq_.end() && msg.seq <= it->second) {
    throw Error(ErrorKind::InvalidArgument, "seq must increase per publisher and topic (" + msg.publisher + " " +
                                                std::string(topic_name(msg.topic)) + ": " +
                                                std::to_string(it->second) + " then " + std::to_string(msg.seq) + ")");
  }
  if (auto it = last_t_.find(msg.publisher); it != last_t_.end() && msg.t_sim_ms < it->second) {
    throw Error(ErrorKind::InvalidArgument, "timestamps from " + msg.publisher + " must not go backwards");
  }
  last_seq_[key] = msg.seq;
  last_t_[msg.publisher] = msg.t_sim_ms;
  publish_locked(std::move(msg));
}

void MessageBus::publish_locked(BusMessage msg) {
  const auto slot = static_cast<std::size_t>(msg.topic);
  ++published_[slot];
  max_t_[slot] = std::max(max_t_[slot], msg.t_sim_ms);
  for (auto& [id, sub] : subs_) {
    if (sub.topic == msg.topic) enqueue_locked(sub, msg);
  }
}

void MessageBus::enqueue_locked(Subscription& sub, const BusMessage& msg) {
  ++sub.stats.enqueued;
  if (sub.size == capacity_) {
    sub.head = (sub.head + 1) % capacity_;
    --sub.size;
    ++sub.stats.dropped;
    ++sub.unreported_drops;
  }
  sub.ring[(sub.head + sub.size) % capacity_] = msg;
  ++sub.size;
}

std::vector<BusMessage> MessageBus::poll(SubscriptionId id, std::size_t max_n) {
  std::lock_guard lock(mu_);
  auto it = subs_.find(id);
  if (it == subs_.end()) throw Error(ErrorKind::State, "poll on a closed or unknown subscription");
  Subscription& sub = it->second;

  std::vector<BusMessage> out;
  const std::size_t n = std::min(max_n, sub.size);
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(std::move(sub.ring[sub.head]));
    sub.head = (sub.head + 1) % capacity_;
  }
  sub.size -= n;
  sub.stats.delivered += n;

  if (sub.unreported_drops > 0) {
    const std::uint64_t k = std::exchange(sub.unreported_drops, 0);
    BusMessage notice;
    notice.topic = Topic::Log;
    notice.publisher = std::string(kBusPublisher);
    notice.seq = ++bus_seq_;
    notice.t_sim_ms = std::max(max_t_[static_cast<std::size_t>(Topic::Log)],
                               max_t_[static_cast<std::size_t>(sub.topic)]);
    notice.payload = LogLine{"dropped " + std::to_string(k) + " message(s) on topic " +
                             std::string(topic_name(sub.topic)) + " for subscription " + std::to_string(id)};
    publish_locked(std::move(notice));
  }
  return out;
}

SubscriptionStats MessageBus::stats(SubscriptionId id) const {
  std::lock_guard lock(mu_);
  auto it = subs_.find(id);
  if (it == subs_.end()) throw Error(ErrorKind::State, "unknown subscription");
  SubscriptionStats s = it->second.stats;
  s.pending = it->second.size;
  return s;
}

std::uint64_t MessageBus::published(Topic topic) const {
  std::lock_guard lock(mu_);
  return published_[static_cast<std::size_t>(topic)];
}

void Publisher::publish(Topic topic, std::int64_t t_sim_ms, Payload payload) {
  if (!is_registered(topic)) throw Error(ErrorKind::InvalidArgument, "unknown topic");
  BusMessage msg;
  msg.topic = topic;
  msg.publisher = name_;
  msg.seq = ++seq_[static_cast<std::size_t>(topic)];
  msg.t_sim_ms = t_sim_ms;
  msg.payload = std::move(payload);
  bus_.publish(std::move(msg));
}

}  // namespace catos::bus
