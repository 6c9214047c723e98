#include <atomic>
#include <thread>

#include "catos/api.hpp"
#include "catos/archive.hpp"
#include "catos/session.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace catos;
using api::Service;

namespace {

/// One archived 20-minute session shared by the read-only cases.
const fs::path& archived_root() {
  static const fs::path root = [] {
    const auto dir = testsupport::scratch("api");
    session::RunConfig c;
    c.seed = 21;
    c.duration_ms = 20 * 60000;
    c.rig.agent.trial_appetite = 40;
    c.output_dir = dir / "out";
    session::run_session(c);
    archive::archive_session(c.output_dir, dir / "archive");
    return dir / "archive";
  }();
  return root;
}

Json get(Service& s, std::string_view path, std::string_view query = "", int want = 200) {
  const auto r = s.handle("GET", path, query, "");
  CHECK(r.status == want);
  return Json::parse(r.body);
}

}  // namespace

TEST_CASE("query parameters are percent-decoded") {
  CHECK(api::query_param("ids=a%2Cb&x=1", "ids") == "a,b");
  CHECK(api::query_param("x=1&ids=a+b", "ids") == "a b");
  CHECK(api::query_param("ids=%zz%4", "ids") == "%zz%4");
  CHECK(api::query_param("idsx=1", "ids").empty());
  CHECK(api::query_param("ids", "ids").empty());
}

TEST_CASE("session list and detail") {
  Service s(archived_root());
  const Json list = get(s, "/api/sessions");
  REQUIRE(list.size() == 1);
  CHECK(list[0]["session_id"] == "20130301_090000");
  CHECK(list[0]["n_trials"].get<int>() > 0);

  const Json detail = get(s, "/api/sessions/20130301_090000");
  CHECK(detail["index"] == archive::to_json(archive::read_index(archived_root() / "20130301_090000")));
  CHECK(detail["stats"] == list[0]);
  CHECK(detail["index"]["folders"].contains("clips"));

  const Json missing = get(s, "/api/sessions/20990101_000000", "", 404);
  CHECK(missing["error"].get<std::string>().find("20990101_000000") != std::string::npos);
  get(s, "/api/sessions/../etc", "", 404);
}

TEST_CASE("trials mirror the result csv") {
  Service s(archived_root());
  const Json trials = get(s, "/api/sessions/20130301_090000/trials");
  const auto file = schema::parse_result_csv(read_file(archived_root() / "20130301_090000" / "results" / "results.csv"));
  REQUIRE(trials.size() == file.rows.size());
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& r = file.rows[i];
    CHECK(trials[i]["trial"] == r.trial_id);
    CHECK(trials[i]["stim"] == r.stimulus_id);
    CHECK(trials[i]["button"].is_null() == !r.response_button.has_value());
    CHECK(trials[i]["latency_ms"].is_null() == !r.latency_ms.has_value());
    CHECK(trials[i]["correct"] == r.correct);
    CHECK(trials[i]["reward"] == r.reward_confirmed);
  }
}

TEST_CASE("movement rows for one clip stay within the clip") {
  Service s(archived_root());
  const auto index = archive::read_index(archived_root() / "20130301_090000");
  REQUIRE_FALSE(index.clips.empty());
  const auto& clip = index.clips.front();
  const Json rows = get(s, "/api/sessions/20130301_090000/movement/" + clip.id);
  CHECK(rows.size() > 0);
  for (const auto& r : rows) {
    CHECK(r["t_ms"].get<std::int64_t>() >= clip.start_ms);
    CHECK(r["t_ms"].get<std::int64_t>() <= clip.end_ms);
  }
  get(s, "/api/sessions/20130301_090000/movement/clip_cam9_0001", "", 404);
}

TEST_CASE("performance series endpoint") {
  Service s(archived_root());
  const Json series = get(s, "/api/performance", "ids=20130301_090000");
  REQUIRE(series.size() == 1);
  CHECK(series[0] == get(s, "/api/sessions")[0]);
  get(s, "/api/performance", "", 400);
  const Json missing = get(s, "/api/performance", "ids=20130301_090000,20130302_090000", 404);
  CHECK(missing["error"].get<std::string>().find("20130302_090000") != std::string::npos);
}

TEST_CASE("unknown endpoints and methods") {
  Service s(archived_root());
  CHECK(s.handle("GET", "/", "", "").status == 404);
  CHECK(s.handle("GET", "/api/nothing", "", "").status == 404);
  CHECK(s.handle("POST", "/api/sessions", "", "").status == 405);
  CHECK(s.handle("DELETE", "/api/schema-config", "", "").status == 405);
  CHECK(s.handle("GET", "/api/sessions/20130301_090000/other", "", "").status == 404);
}

TEST_CASE("schema config: defaults, validation, revisions") {
  const auto root = testsupport::scratch("api_config");
  Service s(root);
  Json cur = get(s, "/api/schema-config");
  CHECK(cur["revision"] == 0);
  CHECK(cur["config"] == schema::to_json(schema::SchemaConfig{}));

  Json cfg = cur["config"];
  cfg["response_window_ms"] = 4000;
  auto r = s.handle("PUT", "/api/schema-config", "revision=0", cfg.dump());
  CHECK(r.status == 200);
  CHECK(Json::parse(r.body)["revision"] == 1);
  cur = get(s, "/api/schema-config");
  CHECK(cur["revision"] == 1);
  CHECK(cur["config"]["response_window_ms"] == 4000);
  CHECK_FALSE(fs::exists(root / "schema-config.json.tmp"));

  // Stale revision.
  r = s.handle("PUT", "/api/schema-config", "revision=0", cfg.dump());
  CHECK(r.status == 409);
  // No revision: last write wins.
  CHECK(s.handle("PUT", "/api/schema-config", "", cfg.dump()).status == 200);
  CHECK(get(s, "/api/schema-config")["revision"] == 2);

  // Every violation comes back at once and nothing is stored.
  Json bad = cfg;
  bad["stimulus_to_button"] = {0, 0, 0};
  bad["response_window_ms"] = 0;
  bad["typo"] = true;
  r = s.handle("PUT", "/api/schema-config", "", bad.dump());
  CHECK(r.status == 400);
  CHECK(Json::parse(r.body)["errors"].size() == 3);
  CHECK(s.handle("PUT", "/api/schema-config", "", "{nope").status == 400);
  CHECK(s.handle("PUT", "/api/schema-config", "revision=x", cfg.dump()).status == 400);
  CHECK(get(s, "/api/schema-config")["revision"] == 2);
}

TEST_CASE("concurrent writers naming the same revision: exactly one wins") {
  const auto root = testsupport::scratch("api_race");
  Service s(root);
  const std::string body = schema::to_json(schema::SchemaConfig{}).dump();
  for (int rev = 0; rev < 20; ++rev) {
    std::atomic<int> ok{0};
    std::atomic<int> conflict{0};
    std::vector<std::thread> threads;
    for (int t = 0; t < 6; ++t) {
      threads.emplace_back([&] {
        const auto r = s.handle("PUT", "/api/schema-config", "revision=" + std::to_string(rev), body);
        (r.status == 200 ? ok : conflict)++;
      });
    }
    for (auto& t : threads) t.join();
    CHECK(ok == 1);
    CHECK(conflict == 5);
  }
  CHECK(get(s, "/api/schema-config")["revision"] == 20);
}
