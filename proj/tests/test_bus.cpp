#include <thread>

#include "catos/bus.hpp"
#include "catos/error.hpp"
#include "doctest.h"

using namespace catos;
using namespace catos::bus;

namespace {

BusMessage text(Topic topic, const std::string& publisher, std::uint64_t seq, std::int64_t t, std::string body = "") {
  return BusMessage{topic, publisher, seq, t, LogLine{std::move(body)}};
}

std::string body(const BusMessage& m) { return std::get<LogLine>(m.payload).text; }

}  // namespace

TEST_CASE("topic names form a closed set") {
  for (Topic t : kAllTopics) CHECK(topic_from_name(topic_name(t)) == t);
  CHECK_FALSE(topic_from_name("video").has_value());
  CHECK_FALSE(is_registered(static_cast<Topic>(9)));
}

TEST_CASE("three messages come back in publication order") {
  MessageBus bus;
  const auto sub = bus.subscribe(Topic::Vision);
  for (std::uint64_t i = 1; i <= 3; ++i) bus.publish(text(Topic::Vision, "cam", i, 10 * i, std::to_string(i)));
  const auto got = bus.poll(sub, 10);
  REQUIRE(got.size() == 3);
  CHECK(body(got[0]) == "1");
  CHECK(body(got[1]) == "2");
  CHECK(body(got[2]) == "3");
}

TEST_CASE("seq going backwards is rejected") {
  MessageBus bus;
  bus.publish(text(Topic::Vision, "cam", 5, 0));
  CHECK_THROWS_AS(bus.publish(text(Topic::Vision, "cam", 4, 1)), Error);
  CHECK_THROWS_AS(bus.publish(text(Topic::Vision, "cam", 5, 1)), Error);
  // Another topic keeps its own sequence.
  CHECK_NOTHROW(bus.publish(text(Topic::Log, "cam", 1, 1)));
}

TEST_CASE("time going backwards for a publisher is rejected") {
  MessageBus bus;
  bus.publish(text(Topic::Hw, "rig", 1, 100));
  CHECK_THROWS_AS(bus.publish(text(Topic::Hw, "rig", 2, 99)), Error);
  CHECK_NOTHROW(bus.publish(text(Topic::Hw, "rig", 2, 100)));
}

TEST_CASE("unknown topic is rejected") {
  MessageBus bus;
  CHECK_THROWS_AS(bus.publish(text(static_cast<Topic>(42), "x", 1, 0)), Error);
  CHECK_THROWS_AS(bus.subscribe(static_cast<Topic>(42)), Error);
}

TEST_CASE("two subscribers each get one copy") {
  MessageBus bus;
  const auto a = bus.subscribe(Topic::Hw);
  const auto b = bus.subscribe(Topic::Hw);
  const auto other = bus.subscribe(Topic::Audio);
  bus.publish(text(Topic::Hw, "rig", 1, 0, "x"));
  CHECK(bus.poll(a, 10).size() == 1);
  CHECK(bus.poll(b, 10).size() == 1);
  CHECK(bus.poll(a, 10).empty());
  CHECK(bus.poll(other, 10).empty());
}

TEST_CASE("poll respects max_n and continues where it stopped") {
  MessageBus bus;
  const auto sub = bus.subscribe(Topic::Schema);
  CHECK(bus.poll(sub, 2).empty());
  for (std::uint64_t i = 1; i <= 5; ++i) bus.publish(text(Topic::Schema, "s", i, 0, std::to_string(i)));
  auto first = bus.poll(sub, 2);
  auto second = bus.poll(sub, 2);
  auto third = bus.poll(sub, 2);
  REQUIRE(first.size() == 2);
  REQUIRE(second.size() == 2);
  REQUIRE(third.size() == 1);
  CHECK(body(first[0]) == "1");
  CHECK(body(second[0]) == "3");
  CHECK(body(third[0]) == "5");
}

TEST_CASE("closed subscription cannot be polled") {
  MessageBus bus;
  const auto sub = bus.subscribe(Topic::Log);
  bus.unsubscribe(sub);
  CHECK_THROWS_AS(bus.poll(sub, 1), Error);
  CHECK_THROWS_AS(bus.poll(12345, 1), Error);
}

TEST_CASE("overflow drops the oldest and reports the count on the log topic") {
  MessageBus bus(8);
  const auto sub = bus.subscribe(Topic::Vision);
  const auto log = bus.subscribe(Topic::Log);
  const std::uint64_t published = 20;
  for (std::uint64_t i = 1; i <= published; ++i) bus.publish(text(Topic::Vision, "cam", i, i, std::to_string(i)));

  const auto got = bus.poll(sub, 100);
  REQUIRE(got.size() == 8);
  CHECK(body(got.front()) == "13");
  CHECK(body(got.back()) == "20");

  const auto notices = bus.poll(log, 100);
  REQUIRE(notices.size() == 1);
  CHECK(notices[0].publisher == "bus");
  CHECK(body(notices[0]).find("dropped 12 message(s) on topic vision") != std::string::npos);

  const auto s = bus.stats(sub);
  CHECK(s.delivered + s.dropped == published);
  CHECK(s.pending == 0);
}

TEST_CASE("flood test: delivered plus reported drops equals published") {
  MessageBus bus(64);
  const auto sub = bus.subscribe(Topic::Hw);
  const auto log = bus.subscribe(Topic::Log);
  std::uint64_t delivered = 0;
  std::uint64_t reported = 0;
  std::uint64_t seq = 0;
  for (int round = 0; round < 50; ++round) {
    const int burst = 10 + (round * 37) % 150;
    for (int i = 0; i < burst; ++i) bus.publish(text(Topic::Hw, "rig", ++seq, round));
    delivered += bus.poll(sub, 30).size();
  }
  delivered += bus.poll(sub, 100000).size();
  for (const auto& m : bus.poll(log, 100000)) {
    const std::string s = body(m);
    reported += std::stoull(s.substr(std::string("dropped ").size()));
  }
  CHECK(delivered + reported == seq);
  CHECK(bus.published(Topic::Hw) == seq);
}

TEST_CASE("log notices keep a subscriber's timestamps monotone") {
  MessageBus bus(2);
  const auto sub = bus.subscribe(Topic::Vision);
  const auto log = bus.subscribe(Topic::Log);
  bus.publish(text(Topic::Log, "x", 1, 500));
  for (std::uint64_t i = 1; i <= 5; ++i) bus.publish(text(Topic::Vision, "cam", i, 100 * i));
  bus.poll(sub, 10);
  const auto got = bus.poll(log, 10);
  REQUIRE(got.size() == 2);
  CHECK(got[1].t_sim_ms >= got[0].t_sim_ms);
}

TEST_CASE("concurrent publishers keep per-publisher FIFO order") {
  MessageBus bus(100000);
  const auto sub = bus.subscribe(Topic::Audio);
  constexpr int kPerThread = 5000;
  std::vector<std::thread> threads;
  for (int p = 0; p < 4; ++p) {
    threads.emplace_back([&bus, p] {
      Publisher pub(bus, "p" + std::to_string(p));
      for (int i = 0; i < kPerThread; ++i) pub.publish(Topic::Audio, i, LogLine{std::to_string(i)});
    });
  }
  for (auto& t : threads) t.join();

  std::map<std::string, std::uint64_t> last;
  std::size_t n = 0;
  for (const auto& m : bus.poll(sub, 1000000)) {
    CHECK(m.seq > last[m.publisher]);
    last[m.publisher] = m.seq;
    ++n;
  }
  CHECK(n == 4 * kPerThread);
}

TEST_CASE("publisher helper stamps increasing seq per topic") {
  MessageBus bus;
  const auto sub = bus.subscribe(Topic::Log);
  Publisher pub(bus, "schema");
  pub.log(1, "a");
  pub.log(2, "b");
  const auto got = bus.poll(sub, 10);
  REQUIRE(got.size() == 2);
  CHECK(got[0].seq == 1);
  CHECK(got[1].seq == 2);
}
