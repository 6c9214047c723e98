#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <thread>

#include "catos/util.hpp"
#include "doctest.h"
#include "httplib.h"
#include "support.hpp"

using namespace catos;

namespace {

struct Run {
  int rc = -1;
  std::string out;
  std::string err;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

/// Runs the CLI with the given arguments from `cwd`, capturing both streams.
Run cli(const fs::path& cwd, const std::string& args) {
  const auto out = cwd / ".stdout";
  const auto err = cwd / ".stderr";
  const std::string cmd = "cd " + quote(cwd.string()) + " && " + quote(CATOS_CLI) + " " + args + " > " +
                          quote(out.string()) + " 2> " + quote(err.string());
  const int status = std::system(cmd.c_str());
  Run r;
  r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  fs::remove(out);
  fs::remove(err);
  return r;
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

void check_close(const Json& got, const Json& want, const std::string& where) {
  INFO(where);
  if (want.is_number_float()) {
    REQUIRE(got.is_number());
    const double a = got.get<double>(), b = want.get<double>();
    CHECK(std::abs(a - b) <= 1e-9 * std::max(1.0, std::abs(b)));
  } else if (want.is_object()) {
    CHECK(got.size() == want.size());
    for (auto it = want.begin(); it != want.end(); ++it) {
      REQUIRE(got.contains(it.key()));
      check_close(got[it.key()], it.value(), where + "." + it.key());
    }
  } else if (want.is_array()) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) check_close(got[i], want[i], where + "[" + std::to_string(i) + "]");
  } else {
    CHECK(got == want);
  }
}

/// Fixture session run and archived once through the CLI.
const fs::path& workdir() {
  static const fs::path dir = [] {
    const auto d = testsupport::scratch("cli");
    fs::copy_file(testsupport::data("fixtures/cli_session.json"), d / "cfg.json");
    const auto run = cli(d, "run --config cfg.json --out out");
    REQUIRE(run.rc == 0);
    REQUIRE(cli(d, "archive --from out --to arch").rc == 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST_CASE("run, archive and analyze agree with the scipy golden") {
  const auto& d = workdir();
  const auto r = cli(d, "analyze --session arch/20130301_090000 --json");
  REQUIRE(r.rc == 0);
  CHECK(r.err.empty());
  const Json want = Json::parse(read_file(testsupport::data("golden/cli_session_stats.json")));
  check_close(Json::parse(r.out), want, "stats");

  const auto text = cli(d, "analyze --session arch/20130301_090000");
  CHECK(text.rc == 0);
  CHECK(text.out.find("trials 31, correct 23, accuracy 0.742") != std::string::npos);
}

TEST_CASE("series output, json and csv") {
  const auto& d = workdir();
  const auto csv = cli(d, "analyze --series 20130301_090000 --archive arch --csv");
  REQUIRE(csv.rc == 0);
  CHECK(csv.out.starts_with("session,overall_acc,b0_acc,b1_acc,b2_acc,overall_p\n20130301_090000,0.7419,0.7778,"));
  CHECK(lines(csv.out) == 2);

  const auto json = cli(d, "analyze --series 20130301_090000,20130301_090000 --archive arch --json");
  REQUIRE(json.rc == 0);
  CHECK(Json::parse(json.out).size() == 1);
}

TEST_CASE("failures exit nonzero with one error line") {
  const auto& d = workdir();

  const auto again = cli(d, "archive --from out --to arch");
  CHECK(again.rc != 0);
  CHECK(lines(again.err) == 1);
  CHECK(again.err.starts_with("error: "));

  const auto missing = cli(d, "analyze --series 20130301_090000,20130302_090000 --archive arch");
  CHECK(missing.rc != 0);
  CHECK(missing.out.empty());
  CHECK(lines(missing.err) == 1);
  CHECK(missing.err.find("20130302_090000") != std::string::npos);

  write_file(d / "bad.json", R"({"seed": 1, "duration_ms": 0, "camera": {"fps": -2}, "bogus": 3})");
  const auto bad = cli(d, "run --config bad.json --out bad_out");
  CHECK(bad.rc != 0);
  CHECK(lines(bad.err) == 1);
  for (const char* needle : {"duration_ms", "camera.fps", "bogus"}) {
    CHECK_MESSAGE(bad.err.find(needle) != std::string::npos, needle);
  }
  CHECK_FALSE(fs::exists(d / "bad_out"));

  CHECK(cli(d, "").rc != 0);
  CHECK(cli(d, "analyze").rc != 0);
  CHECK(cli(d, "run").rc != 0);
  CHECK(cli(d, "analyze --session arch/nope --json").rc != 0);
  CHECK(cli(d, "--help").rc == 0);
}

TEST_CASE("same seed, same bytes; seed flag overrides the file") {
  const auto d = testsupport::scratch("cli_determinism");
  write_file(d / "cfg.json",
             R"({"seed": 3, "duration_ms": 600000, "camera": {"count": 2}, "rig": {"agent": {"trial_appetite": 60}}})");
  REQUIRE(cli(d, "run --config cfg.json --out a").rc == 0);
  REQUIRE(cli(d, "run --config cfg.json --out b").rc == 0);
  REQUIRE(cli(d, "run --config cfg.json --seed 4 --out c").rc == 0);
  const auto a = testsupport::tree(d / "a");
  CHECK(a.size() > 10);
  CHECK(a == testsupport::tree(d / "b"));
  CHECK(a != testsupport::tree(d / "c"));
}

TEST_CASE("serve answers the JSON API on a free port") {
  const auto& d = workdir();
  const auto log = d / "serve.log";
  const std::string cmd = "cd " + quote(d.string()) + " && (" + quote(CATOS_CLI) +
                          " serve --archive arch --port 0 > serve.log 2>&1 & echo $! > serve.pid)";
  REQUIRE(std::system(cmd.c_str()) == 0);

  int port = 0;
  for (int i = 0; i < 200 && port == 0; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    const std::string text = fs::exists(log) ? read_file(log) : "";
    const auto at = text.find("listening on http://127.0.0.1:");
    if (at != std::string::npos && text.find('\n', at) != std::string::npos) {
      port = std::atoi(text.c_str() + at + std::string("listening on http://127.0.0.1:").size());
    }
  }
  const int pid = std::atoi(read_file(d / "serve.pid").c_str());
  REQUIRE(port > 0);

  httplib::Client client("127.0.0.1", port);
  auto list = client.Get("/api/sessions");
  REQUIRE(list);
  CHECK(list->status == 200);
  CHECK(Json::parse(list->body)[0]["session_id"] == "20130301_090000");

  auto trials = client.Get("/api/sessions/20130301_090000/trials");
  REQUIRE(trials);
  CHECK(Json::parse(trials->body).size() == 31);

  auto perf = client.Get("/api/performance?ids=20130301_090000%2C20130309_090000");
  REQUIRE(perf);
  CHECK(perf->status == 404);

  auto cfg = client.Get("/api/schema-config");
  REQUIRE(cfg);
  Json current = Json::parse(cfg->body);
  CHECK(current["revision"] == 0);
  auto put = client.Put("/api/schema-config?revision=0", current["config"].dump(), "application/json");
  REQUIRE(put);
  CHECK(put->status == 200);
  auto stale = client.Put("/api/schema-config?revision=0", current["config"].dump(), "application/json");
  REQUIRE(stale);
  CHECK(stale->status == 409);

  auto post = client.Post("/api/sessions", "", "application/json");
  REQUIRE(post);
  CHECK(post->status == 405);

  REQUIRE(pid > 0);
  ::kill(pid, SIGTERM);
  bool gone = false;
  for (int i = 0; i < 200 && !gone; ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(25));
    gone = ::kill(pid, 0) != 0;
  }
  CHECK(gone);
  fs::remove(d / "arch" / "schema-config.json");
}
