// catos command-line front end. Talks to the engine only through the C API.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "catos/catos.h"
#include "httplib.h"
#include "json.hpp"

namespace {

using Json = nlohmann::json;

// Errors are always one line so scripts can parse them.
int fail(const std::string& message) {
  std::string line = message;
  for (std::size_t pos = 0; (pos = line.find("\n  ", pos)) != std::string::npos;) line.replace(pos, 3, "; ");
  for (auto& c : line) {
    if (c == '\n') c = ' ';
  }
  std::fprintf(stderr, "error: %s\n", line.c_str());
  return 1;
}

int fail_last() { return fail(catos_last_error()); }

/// Owns a string handed out by the library.
struct LibString {
  char* s = nullptr;
  ~LibString() { catos_string_free(s); }
  std::string str() const { return s != nullptr ? s : ""; }
};

std::string opt_fixed(const Json& v, int decimals) {
  if (v.is_null()) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v.get<double>());
  return buf;
}

std::string opt_p(const Json& v) {
  if (v.is_null()) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v.get<double>());
  return buf;
}

void print_stats(const Json& s) {
  std::printf("session %s\n", s["session_id"].get<std::string>().c_str());
  std::printf("  trials %d, correct %d, accuracy %s, p = %s (vs 1/3)\n", s["n_trials"].get<int>(),
              s["n_correct"].get<int>(), opt_fixed(s["overall_accuracy"], 3).c_str(),
              opt_p(s["overall_p_value"]).c_str());
  for (std::size_t b = 0; b < 3; ++b) {
    const Json& pb = s["per_button"][b];
    std::printf("  button %zu: n %d, correct %d, accuracy %s, p = %s\n", b, pb["n"].get<int>(),
                pb["n_correct"].get<int>(), opt_fixed(pb["accuracy"], 3).c_str(), opt_p(pb["p_value"]).c_str());
  }
  std::printf("  recorded %.1f s of %.1f s observed, duty cycle %.2f%%\n", s["recorded_s"].get<double>(),
              s["observed_s"].get<double>(), 100.0 * s["duty_cycle"].get<double>());
}

int cmd_run(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out) {
  LibString report;
  const std::uint64_t seed_value = seed.value_or(0);
  if (catos_run_session(config.c_str(), seed ? &seed_value : nullptr, out.empty() ? nullptr : out.c_str(),
                        &report.s) != CATOS_OK) {
    return fail_last();
  }
  const Json r = Json::parse(report.str());
  std::printf("session %s: %d trials (%d correct, %d rewarded), %zu clips -> %s\n",
              r["session_id"].get<std::string>().c_str(), r["trials"].get<int>(), r["correct"].get<int>(),
              r["rewards"].get<int>(), r["clips"].get<std::size_t>(), r["output_dir"].get<std::string>().c_str());
  return 0;
}

int cmd_archive(const std::string& from, const std::string& to) {
  LibString index;
  if (catos_archive_session(from.c_str(), to.c_str(), &index.s) != CATOS_OK) return fail_last();
  const Json j = Json::parse(index.str());
  std::printf("archived %s: %zu clips, %zu sounds -> %s/%s\n", j["session_id"].get<std::string>().c_str(),
              j["clips"].size(), j["sounds"].size(), to.c_str(), j["session_id"].get<std::string>().c_str());
  return 0;
}

int cmd_analyze(const std::string& session, const std::string& series, const std::string& archive, bool json,
                bool csv) {
  LibString out;
  if (!session.empty()) {
    if (catos_analyze_session(session.c_str(), &out.s) != CATOS_OK) return fail_last();
    if (json) {
      std::printf("%s\n", out.str().c_str());
    } else {
      print_stats(Json::parse(out.str()));
    }
    return 0;
  }
  if (catos_performance_series(archive.c_str(), series.c_str(), csv ? 1 : 0, &out.s) != CATOS_OK) return fail_last();
  if (json || csv) {
    std::printf("%s%s", out.str().c_str(), csv ? "" : "\n");
  } else {
    for (const auto& s : Json::parse(out.str())) print_stats(s);
  }
  return 0;
}

httplib::Server* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

int cmd_serve(const std::string& archive, const std::string& host, int port) {
  catos_api* api = nullptr;
  if (catos_api_open(archive.c_str(), &api) != CATOS_OK) return fail_last();

  httplib::Server server;
  auto handler = [api](const httplib::Request& req, httplib::Response& res) {
    const auto q = req.target.find('?');
    const std::string query = q == std::string::npos ? "" : req.target.substr(q + 1);
    int status = 500;
    LibString body;
    if (catos_api_handle(api, req.method.c_str(), req.path.c_str(), query.c_str(), req.body.data(), req.body.size(),
                         &status, &body.s) != CATOS_OK) {
      res.status = 500;
      res.set_content(Json{{"error", catos_last_error()}}.dump(), "application/json");
      return;
    }
    res.status = status;
    res.set_content(body.str(), "application/json");
  };
  server.Get(".*", handler);
  server.Put(".*", handler);
  server.Post(".*", handler);
  server.Delete(".*", handler);

  int bound = port;
  if (port == 0) {
    bound = server.bind_to_any_port(host);
  } else if (!server.bind_to_port(host, port)) {
    bound = -1;
  }
  if (bound < 0) {
    catos_api_close(api);
    return fail("cannot listen on " + host + ":" + std::to_string(port));
  }
  g_server = &server;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("listening on http://%s:%d\n", host.c_str(), bound);
  std::fflush(stdout);
  const bool ok = server.listen_after_bind();
  g_server = nullptr;
  catos_api_close(api);
  return ok ? 0 : fail("server stopped unexpectedly");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"catos: simulated operant-conditioning rig with motion-gated recording"};
  app.require_subcommand(1);

  std::string config, out;
  std::optional<std::uint64_t> seed;
  auto* run = app.add_subcommand("run", "run one simulated session");
  run->add_option("--config", config, "session config (JSON)")->required();
  run->add_option("--seed", seed, "overrides the config's seed");
  run->add_option("--out", out, "overrides the config's output folder");

  std::string from, to;
  auto* archive = app.add_subcommand("archive", "move a finished session into the archive");
  archive->add_option("--from", from, "output folder of the session")->required();
  archive->add_option("--to", to, "archive root")->required();

  std::string session, series, archive_root = "archive";
  bool json = false, csv = false;
  auto* analyze = app.add_subcommand("analyze", "session statistics");
  auto* session_opt = analyze->add_option("--session", session, "archived session folder");
  auto* series_opt = analyze->add_option("--series", series, "comma-separated session ids");
  session_opt->excludes(series_opt);
  analyze->add_option("--archive", archive_root, "archive root for --series")->capture_default_str();
  analyze->add_flag("--json", json, "print JSON");
  analyze->add_flag("--csv", csv, "print the series as CSV")->needs(series_opt);

  std::string serve_root, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "serve the dashboard JSON API");
  serve->add_option("--archive", serve_root, "archive root")->required();
  serve->add_option("--port", port, "TCP port; 0 picks a free one")->capture_default_str();
  serve->add_option("--host", host, "address to bind")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(e.what());
  }

  try {
    if (*run) return cmd_run(config, seed, out);
    if (*archive) return cmd_archive(from, to);
    if (*analyze) {
      if (session.empty() && series.empty()) return fail("analyze needs --session or --series");
      return cmd_analyze(session, series, archive_root, json, csv);
    }
    if (*serve) return cmd_serve(serve_root, host, port);
  } catch (const std::exception& e) {
    return fail(e.what());
  }
  return fail("no command");
}
