#include "catos/error.hpp"
#include "catos/schema.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace catos;
using namespace catos::schema;

namespace {

BlobsSeen blob_at(double x, double y) {
  vision::Blob b;
  b.cx = x;
  b.cy = y;
  b.area = 100;
  return BlobsSeen{0, {b}};
}

BlobsSeen in_zone() { return blob_at(80, 36); }

template <typename T>
std::vector<T> only(const std::vector<Action>& actions) {
  std::vector<T> out;
  for (const auto& a : actions) {
    if (const auto* x = std::get_if<T>(&a)) out.push_back(*x);
  }
  return out;
}

SchemaConfig fixed_config() {
  SchemaConfig c;
  c.stimulus_order = StimulusOrder::FixedCycle;
  return c;
}

/// Drives the machine into AWAIT_RESPONSE at t and returns the stimulus.
int open_trial(TrialStateMachine& m, std::int64_t t) {
  const auto acts = m.step(in_zone(), t);
  const auto play = only<PlayStimulus>(acts);
  REQUIRE(play.size() == 1);
  m.step(PlaybackStarted{play[0].stimulus_id}, t + 20);
  REQUIRE(m.phase() == Phase::AwaitResponse);
  return play[0].stimulus_id;
}

hwlink::DispenseOutcome confirmed_at(std::int64_t t) { return {true, 1, t}; }

}  // namespace

TEST_CASE("config validation") {
  SchemaConfig c;
  CHECK(c.validate().empty());
  c.stimulus_to_button = {0, 0, 2};
  c.response_window_ms = 0;
  CHECK(c.validate().size() == 2);
  c = SchemaConfig{};
  c.trigger_zone = {10, 10, 5, 20};
  CHECK_FALSE(c.validate().empty());
  c = SchemaConfig{};
  c.inter_trial_interval_ms = -1;
  CHECK_FALSE(c.validate().empty());
  CHECK_THROWS_AS(TrialStateMachine(c, 1), Error);
}

TEST_CASE("config json round trip and error collection") {
  std::vector<std::string> errors;
  SchemaConfig c;
  c.stimulus_to_button = {2, 0, 1};
  c.reward_mode = RewardMode::AnyPress;
  c.stimulus_order = StimulusOrder::FixedCycle;
  c.dispense.degrees = 90;
  const SchemaConfig back = schema_config_from_json(to_json(c), "schema", errors);
  CHECK(errors.empty());
  CHECK(to_json(back) == to_json(c));

  errors.clear();
  schema_config_from_json(Json::parse(R"({"response_window_ms":-5,"stimulus_order":"shuffle","colour":1})"),
                          "schema", errors);
  CHECK(errors.size() == 3);
}

TEST_CASE("stimulus 1 answered on button 1 after 1200 ms is correct and rewarded") {
  TrialStateMachine m(fixed_config(), 1);
  m.step(in_zone(), 1000);  // trial 1 plays stimulus 0 under the fixed cycle
  m.step(PlaybackStarted{0}, 1000);
  m.step(ButtonPressed{0}, 2000);
  m.step(DispenseFinished{confirmed_at(2200)}, 2400);

  // Trial 2: stimulus 1.
  auto acts = m.step(in_zone(), 20000);
  REQUIRE(only<PlayStimulus>(acts).size() == 1);
  CHECK(only<PlayStimulus>(acts)[0].stimulus_id == 1);
  CHECK(m.phase() == Phase::Stimulus);
  m.step(PlaybackStarted{1}, 20050);
  acts = m.step(ButtonPressed{1}, 21250);
  CHECK(m.phase() == Phase::Reward);
  CHECK(only<StartDispense>(acts).size() == 1);
  acts = m.step(DispenseFinished{confirmed_at(21400)}, 21650);
  const auto written = only<WriteResult>(acts);
  REQUIRE(written.size() == 1);
  const TrialResult& r = written[0].result;
  CHECK(r == TrialResult{2, 20000, 1, 1, true, true, 1200});
  CHECK(m.phase() == Phase::InterTrial);
}

TEST_CASE("no button within the window records a timeout") {
  SchemaConfig c = fixed_config();
  TrialStateMachine m(c, 1);
  for (int k = 0; k < 2; ++k) {
    // Run the cycle forward to stimulus 2.
    open_trial(m, 1000 + k * 30000);
    m.step(ButtonPressed{(k + 1) % 3}, 2000 + k * 30000);  // wrong button
  }
  const std::int64_t t0 = 70000;
  CHECK(open_trial(m, t0) == 2);
  CHECK(m.next_deadline() == t0 + 20 + c.response_window_ms + 1);
  auto acts = m.step(Tick{}, m.next_deadline());
  const auto written = only<WriteResult>(acts);
  REQUIRE(written.size() == 1);
  CHECK(written[0].result == TrialResult{3, t0, 2, std::nullopt, false, false, std::nullopt});
  CHECK(only<StartDispense>(acts).empty());
  CHECK(m.phase() == Phase::InterTrial);
}

TEST_CASE("a press exactly at the window edge counts; one millisecond later does not") {
  SchemaConfig c;
  {
    TrialStateMachine m(c, 4);
    const int stim = open_trial(m, 1000);
    m.step(ButtonPressed{stim}, 1020 + c.response_window_ms);
    CHECK(m.phase() == Phase::Reward);
  }
  {
    TrialStateMachine m(c, 4);
    const int stim = open_trial(m, 1000);
    const auto acts = m.step(ButtonPressed{stim}, 1021 + c.response_window_ms);
    CHECK(only<WriteResult>(acts).size() == 1);
    CHECK_FALSE(only<WriteResult>(acts)[0].result.response_button.has_value());
    CHECK(only<Note>(acts).size() == 1);
  }
}

TEST_CASE("wrong press: no dispense, straight to ITI") {
  SchemaConfig c;
  c.stimulus_to_button = {1, 2, 0};
  TrialStateMachine m(c, 8);
  const int stim = open_trial(m, 500);
  const auto acts = m.step(ButtonPressed{stim}, 900);  // identity answer is wrong here
  CHECK(only<StartDispense>(acts).empty());
  REQUIRE(only<WriteResult>(acts).size() == 1);
  const auto r = only<WriteResult>(acts)[0].result;
  CHECK_FALSE(r.correct);
  CHECK(r.latency_ms == 380);
  CHECK(m.phase() == Phase::InterTrial);
}

TEST_CASE("any-press mode rewards wrong answers too") {
  SchemaConfig c;
  c.reward_mode = RewardMode::AnyPress;
  TrialStateMachine m(c, 8);
  const int stim = open_trial(m, 500);
  const auto acts = m.step(ButtonPressed{(stim + 1) % 3}, 900);
  CHECK(only<StartDispense>(acts).size() == 1);
  const auto done = m.step(DispenseFinished{confirmed_at(1000)}, 1300);
  const auto r = only<WriteResult>(done).at(0).result;
  CHECK_FALSE(r.correct);
  CHECK(r.reward_confirmed);
}

TEST_CASE("unconfirmed dispense is recorded as correct without reward") {
  TrialStateMachine m(SchemaConfig{}, 2);
  const int stim = open_trial(m, 500);
  m.step(ButtonPressed{stim}, 900);
  const auto acts = m.step(DispenseFinished{{false, 4, std::nullopt}}, 3000);
  const auto r = only<WriteResult>(acts).at(0).result;
  CHECK(r.correct);
  CHECK_FALSE(r.reward_confirmed);
}

TEST_CASE("blob entering the zone during ITI starts no trial") {
  SchemaConfig c;
  TrialStateMachine m(c, 3);
  const int stim = open_trial(m, 1000);
  m.step(ButtonPressed{(stim + 1) % 3}, 1500);
  REQUIRE(m.phase() == Phase::InterTrial);
  CHECK(only<PlayStimulus>(m.step(in_zone(), 1500 + c.inter_trial_interval_ms - 1)).empty());
  CHECK(m.phase() == Phase::InterTrial);
  CHECK(only<PlayStimulus>(m.step(in_zone(), 1500 + c.inter_trial_interval_ms)).size() == 1);
  CHECK(m.trials_started() == 2);
}

TEST_CASE("blobs outside the trigger zone start nothing") {
  TrialStateMachine m(SchemaConfig{}, 3);
  CHECK(m.step(blob_at(10, 10), 0).empty());
  CHECK(m.step(BlobsSeen{}, 10).empty());
  CHECK(m.phase() == Phase::Idle);
  // Zone edges are inclusive.
  CHECK(only<PlayStimulus>(m.step(blob_at(64, 52), 20)).size() == 1);
}

TEST_CASE("button while idle is ignored with a note") {
  TrialStateMachine m(SchemaConfig{}, 3);
  const auto acts = m.step(ButtonPressed{1}, 100);
  REQUIRE(acts.size() == 1);
  CHECK(only<Note>(acts).size() == 1);
  CHECK(m.phase() == Phase::Idle);
  CHECK(m.trials_started() == 0);
}

TEST_CASE("playback of a different stimulus does not open the window") {
  SchemaConfig c = fixed_config();
  TrialStateMachine m(c, 3);
  m.step(in_zone(), 0);  // stimulus 0
  m.step(PlaybackStarted{2}, 10);
  CHECK(m.phase() == Phase::Stimulus);
}

TEST_CASE("events out of time order are rejected") {
  TrialStateMachine m(SchemaConfig{}, 3);
  m.step(Tick{}, 100);
  CHECK_THROWS_AS(m.step(Tick{}, 99), Error);
}

TEST_CASE("random order never repeats a stimulus back to back and uses all three") {
  SchemaConfig c;
  c.inter_trial_interval_ms = 0;
  TrialStateMachine m(c, 12345);
  std::array<int, 3> seen{};
  int prev = -1;
  std::int64_t t = 0;
  for (int i = 0; i < 3000; ++i) {
    const int stim = open_trial(m, t);
    CHECK(stim != prev);
    prev = stim;
    ++seen[static_cast<std::size_t>(stim)];
    m.step(ButtonPressed{(stim + 1) % 3}, t + 100);
    t += 200;
  }
  for (int n : seen) CHECK(n > 800);
}

TEST_CASE("fixed cycle plays 0, 1, 2, 0, ...") {
  SchemaConfig c = fixed_config();
  c.inter_trial_interval_ms = 0;
  TrialStateMachine m(c, 1);
  for (int i = 0; i < 9; ++i) {
    CHECK(open_trial(m, i * 1000) == i % 3);
    m.step(ButtonPressed{(i + 1) % 3}, i * 1000 + 100);
  }
}

TEST_CASE("trial ids are dense; one trial at a time") {
  SchemaConfig c;
  c.inter_trial_interval_ms = 100;
  TrialStateMachine m(c, 77);
  SplitMix64 rng(77);
  std::vector<TrialResult> results;
  std::int64_t t = 0;
  for (int i = 0; i < 20000; ++i) {
    t += rng.uniform_int(0, 400);
    Event e;
    switch (rng.uniform_int(0, 4)) {
      case 0: e = in_zone(); break;
      case 1: e = ButtonPressed{static_cast<int>(rng.uniform_int(0, 2))}; break;
      case 2: e = PlaybackStarted{static_cast<int>(rng.uniform_int(0, 2))}; break;
      case 3: e = DispenseFinished{{rng.bernoulli(0.9), 1, t}}; break;
      default: e = Tick{}; break;
    }
    const int before = m.trials_started();
    const auto acts = m.step(e, t);
    CHECK(m.trials_started() - before <= 1);
    CHECK(only<PlayStimulus>(acts).size() <= 1);
    for (const auto& w : only<WriteResult>(acts)) results.push_back(w.result);
  }
  for (const auto& a : m.close(t).actions) {
    if (const auto* w = std::get_if<WriteResult>(&a)) results.push_back(w->result);
  }
  REQUIRE(results.size() == static_cast<std::size_t>(m.trials_started()));
  for (std::size_t i = 0; i < results.size(); ++i) {
    CHECK(results[i].trial_id == static_cast<int>(i) + 1);
    CHECK_NOTHROW(validate_result(results[i], RewardMode::CorrectOnly, &c.stimulus_to_button));
  }
}

TEST_CASE("close finalizes an open trial and a second close throws") {
  TrialStateMachine m(SchemaConfig{}, 9);
  open_trial(m, 1000);
  auto res = m.close(2000);
  const auto w = only<WriteResult>(res.actions);
  REQUIRE(w.size() == 1);
  CHECK_FALSE(w[0].result.response_button.has_value());
  CHECK(res.summary == SessionSummary{1, 0, 1, {0, 0, 0}, 0});
  CHECK(m.phase() == Phase::Closed);
  CHECK_THROWS_AS(m.close(3000), Error);
  CHECK_THROWS_AS(m.step(Tick{}, 3000), Error);
}

TEST_CASE("close with zero trials gives an all-zero summary") {
  TrialStateMachine m(SchemaConfig{}, 9);
  const auto res = m.close(0);
  CHECK(res.actions.empty());
  CHECK(res.summary == SessionSummary{});
  CHECK(format_summary_line(res.summary) == "# summary,0,0,0,0,0,0,0");
}

TEST_CASE("result row format") {
  CHECK(format_result_row({1, 3000, 0, 0, true, true, 850}) == "1,3000,0,0,1,1,850");
  CHECK(format_result_row({2, 41000, 2, std::nullopt, false, false, std::nullopt}) == "2,41000,2,NONE,0,0,");
  const std::string text = std::string(kResultCsvHeader) + "\n1,3000,0,0,1,1,850\n2,41000,2,NONE,0,0,\n";
  const auto parsed = parse_result_csv(text);
  REQUIRE(parsed.rows.size() == 2);
  CHECK(parsed.rows[0] == TrialResult{1, 3000, 0, 0, true, true, 850});
  CHECK(parsed.rows[1] == TrialResult{2, 41000, 2, std::nullopt, false, false, std::nullopt});
  CHECK_FALSE(parsed.summary.has_value());
}

TEST_CASE("invalid rows are rejected before writing") {
  CHECK_THROWS_AS(validate_result({1, 0, 0, std::nullopt, true, false, std::nullopt}), Error);  // timeout yet correct
  CHECK_THROWS_AS(validate_result({1, 0, 0, 1, false, true, 10}), Error);  // reward without correct
  CHECK_THROWS_AS(validate_result({0, 0, 0, 0, true, false, 10}), Error);  // trial ids start at 1
  CHECK_THROWS_AS(validate_result({1, 0, 3, 0, false, false, 10}), Error);
  CHECK_THROWS_AS(validate_result({1, 0, 0, 0, true, false, std::nullopt}), Error);  // press without latency
  const std::array<int, 3> mapping{1, 2, 0};
  CHECK_THROWS_AS(validate_result({1, 0, 0, 0, true, false, 10}, RewardMode::CorrectOnly, &mapping), Error);
  CHECK_NOTHROW(validate_result({1, 0, 0, 1, true, false, 10}, RewardMode::CorrectOnly, &mapping));

  const auto dir = testsupport::scratch("schema_reject");
  {
    ResultLog log(dir / "results.csv");
    CHECK_THROWS_AS(log.append({1, 0, 0, 1, false, true, 10}), Error);
  }
  CHECK(read_file(dir / "results.csv") == std::string(kResultCsvHeader) + "\n");
}

TEST_CASE("result log round trip with a summary that matches a recount") {
  const auto dir = testsupport::scratch("schema_log");
  SplitMix64 rng(6);
  std::vector<TrialResult> rows;
  for (int i = 1; i <= 200; ++i) {
    TrialResult r;
    r.trial_id = i;
    r.t_start_ms = i * 20000;
    r.stimulus_id = static_cast<int>(rng.uniform_int(0, 2));
    if (rng.bernoulli(0.9)) {
      r.response_button = static_cast<int>(rng.uniform_int(0, 2));
      r.latency_ms = rng.uniform_int(0, 5000);
      r.correct = *r.response_button == r.stimulus_id;
      r.reward_confirmed = r.correct && rng.bernoulli(0.95);
    }
    rows.push_back(r);
  }
  const SessionSummary s = summarize(rows);
  {
    ResultLog log(dir / "results.csv");
    for (const auto& r : rows) {
      log.append(r);
      // Flushed: the row is visible before the log closes.
      CHECK(parse_result_csv(read_file(dir / "results.csv")).rows.back() == r);
    }
    log.write_summary(s);
  }
  const std::string text = read_file(dir / "results.csv");
  const auto parsed = parse_result_csv(text);
  CHECK(parsed.rows == rows);
  REQUIRE(parsed.summary.has_value());
  CHECK(*parsed.summary == s);

  // Column-wise recount straight from the text.
  SessionSummary recount;
  for (auto line : split_lines(text)) {
    if (line.starts_with("trial") || line.starts_with("#")) continue;
    const auto f = split(line, ',');
    ++recount.trials;
    if (f[4] == "1") ++recount.correct;
    else ++recount.incorrect;
    if (f[3] != "NONE") ++recount.presses[static_cast<std::size_t>(*parse_int(f[3]))];
    if (f[5] == "1") ++recount.rewards;
  }
  CHECK(recount == s);
  CHECK(text.back() == '\n');
  CHECK(text.find('\r') == std::string::npos);
}

TEST_CASE("ten trials, seven correct") {
  std::vector<TrialResult> rows;
  for (int i = 1; i <= 10; ++i) {
    const bool ok = i <= 7;
    rows.push_back({i, i * 1000, 0, ok ? 0 : 1, ok, ok, 500});
  }
  const auto s = summarize(rows);
  CHECK(s.correct == 7);
  CHECK(s.incorrect == 3);
  CHECK(s.presses == std::array<int, 3>{7, 3, 0});
}

TEST_CASE("result csv errors name the line") {
  const std::string h = std::string(kResultCsvHeader) + "\n";
  auto message = [](const std::string& text) {
    try {
      parse_result_csv(text);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("nope\n").find("line 1") != std::string::npos);
  CHECK(message(h + "1,0,0,0,1,1,5\n1,2\n").find("line 3") != std::string::npos);
  CHECK(message(h + "# summary,0,0,0,0,0,0,0\n1,0,0,0,1,1,5\n").find("line 3") != std::string::npos);
  CHECK(message(h + "1,0,0,NONE,1,0,\n").find("line 2") != std::string::npos);
}
