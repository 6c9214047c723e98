#include "catos/api.hpp"

#include <algorithm>

#include "catos/analytics.hpp"
#include "catos/archive.hpp"
#include "catos/error.hpp"
#include "catos/schema.hpp"

namespace catos::api {

namespace {

Response json(int status, const Json& body) { return {status, body.dump()}; }

Response error(int status, const std::string& message) { return json(status, Json{{"error", message}}); }

int status_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::InvalidArgument:
    case ErrorKind::Config: return 400;
    case ErrorKind::Conflict: return 409;
    default: return 500;
  }
}

std::vector<std::string_view> path_parts(std::string_view path) {
  std::vector<std::string_view> parts;
  for (auto p : split(path, '/')) {
    if (!p.empty()) parts.push_back(p);
  }
  return parts;
}

fs::path session_dir(const fs::path& root, std::string_view id) {
  if (!archive::is_session_id(id) || !fs::exists(root / id / archive::kIndexFile)) {
    throw Error(ErrorKind::NotFound, "unknown session " + std::string(id));
  }
  return root / id;
}

Json trials_json(const fs::path& dir) {
  const auto file = schema::parse_result_csv(read_file(dir / "results" / archive::kResultsFile));
  Json out = Json::array();
  for (const auto& r : file.rows) {
    out.push_back({{"trial", r.trial_id},
                   {"t_start_ms", r.t_start_ms},
                   {"stim", r.stimulus_id},
                   {"button", r.response_button ? Json(*r.response_button) : Json(nullptr)},
                   {"correct", r.correct},
                   {"reward", r.reward_confirmed},
                   {"latency_ms", r.latency_ms ? Json(*r.latency_ms) : Json(nullptr)}});
  }
  return out;
}

Json movement_json(const fs::path& dir, std::string_view clip) {
  const archive::SessionIndex index = archive::read_index(dir);
  auto it = std::find_if(index.clips.begin(), index.clips.end(),
                         [&](const archive::ClipEntry& c) { return c.id == clip; });
  if (it == index.clips.end()) throw Error(ErrorKind::NotFound, "unknown clip " + std::string(clip));
  const fs::path csv = dir / "movement" / ("movement_cam" + std::to_string(it->camera_id) + ".csv");
  if (!fs::exists(csv)) throw Error(ErrorKind::NotFound, "missing " + csv.filename().string());
  Json out = Json::array();
  for (const auto& r : vision::parse_movement_csv(read_file(csv))) {
    if (r.t_ms < it->start_ms || r.t_ms > it->end_ms) continue;
    out.push_back({{"t_ms", r.t_ms}, {"blob", r.blob}, {"cx", r.cx}, {"cy", r.cy}, {"area", r.area}});
  }
  return out;
}

char hex_value(char c) {
  if (c >= '0' && c <= '9') return static_cast<char>(c - '0');
  if (c >= 'a' && c <= 'f') return static_cast<char>(c - 'a' + 10);
  if (c >= 'A' && c <= 'F') return static_cast<char>(c - 'A' + 10);
  return -1;
}

}  // namespace

std::string query_param(std::string_view query, std::string_view key) {
  for (auto pair : split(query, '&')) {
    const auto eq = pair.find('=');
    if (pair.substr(0, eq) != key) continue;
    if (eq == std::string_view::npos) return {};
    const std::string_view raw = pair.substr(eq + 1);
    std::string out;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (raw[i] == '+') {
        out += ' ';
      } else if (raw[i] == '%' && i + 2 < raw.size() && hex_value(raw[i + 1]) >= 0 && hex_value(raw[i + 2]) >= 0) {
        out += static_cast<char>(hex_value(raw[i + 1]) * 16 + hex_value(raw[i + 2]));
        i += 2;
      } else {
        out += raw[i];
      }
    }
    return out;
  }
  return {};
}

Service::Service(fs::path archive_root) : root_(std::move(archive_root)) {}

Response Service::handle(std::string_view method, std::string_view path, std::string_view query,
                         std::string_view body) {
  try {
    const auto parts = path_parts(path);
    if (parts.size() < 2 || parts[0] != "api") return error(404, "no such endpoint");

    if (parts[1] == "schema-config" && parts.size() == 2) {
      if (method == "GET") return get_schema_config();
      if (method == "PUT") return put_schema_config(query, body);
      return error(405, "method not allowed");
    }
    if (method != "GET") return error(405, "method not allowed");

    if (parts[1] == "sessions") {
      if (parts.size() == 2) {
        Json out = Json::array();
        for (const auto& id : archive::list_sessions(root_)) {
          out.push_back(analytics::to_json(analytics::session_stats(root_ / id)));
        }
        return json(200, out);
      }
      const fs::path dir = session_dir(root_, parts[2]);
      if (parts.size() == 3) {
        return json(200, Json{{"index", archive::to_json(archive::read_index(dir))},
                              {"stats", analytics::to_json(analytics::session_stats(dir))}});
      }
      if (parts.size() == 4 && parts[3] == "trials") return json(200, trials_json(dir));
      if (parts.size() == 5 && parts[3] == "movement") return json(200, movement_json(dir, parts[4]));
      return error(404, "no such endpoint");
    }
    if (parts[1] == "performance" && parts.size() == 2) {
      const std::string ids_param = query_param(query, "ids");
      std::vector<std::string> ids;
      for (auto id : split(ids_param, ',')) {
        if (!id.empty()) ids.emplace_back(id);
      }
      if (ids.empty()) return error(400, "ids: at least one session id is required");
      return json(200, analytics::series_to_json(analytics::performance_series(root_, ids)));
    }
    return error(404, "no such endpoint");
  } catch (const Error& e) {
    return error(status_for(e), e.what());
  } catch (const std::exception& e) {
    return error(500, e.what());
  }
}

Response Service::get_schema_config() const {
  const fs::path path = root_ / kSchemaConfigFile;
  if (!fs::exists(path)) {
    return json(200, Json{{"revision", 0}, {"config", schema::to_json(schema::SchemaConfig{})}});
  }
  return json(200, Json::parse(read_file(path)));
}

Response Service::put_schema_config(std::string_view query, std::string_view body) {
  Json j;
  try {
    j = Json::parse(body);
  } catch (const nlohmann::json::parse_error& e) {
    return json(400, Json{{"errors", Json::array({std::string("malformed JSON: ") + e.what()})}});
  }
  std::vector<std::string> errors;
  const schema::SchemaConfig config = schema::schema_config_from_json(j, "", errors);
  if (!errors.empty()) return json(400, Json{{"errors", errors}});

  std::optional<std::int64_t> expected;
  const std::string rev = query_param(query, "revision");
  if (!rev.empty()) {
    expected = parse_int(rev);
    if (!expected) return json(400, Json{{"errors", Json::array({"revision: expected an integer"})}});
  }

  std::lock_guard lock(write_mu_);
  const fs::path path = root_ / kSchemaConfigFile;
  std::int64_t current = 0;
  if (fs::exists(path)) current = Json::parse(read_file(path)).at("revision").get<std::int64_t>();
  if (expected && *expected != current) {
    return error(409, "schema config changed: revision is " + std::to_string(current) + ", request named " +
                          std::to_string(*expected));
  }
  const Json stored{{"revision", current + 1}, {"config", schema::to_json(config)}};
  fs::create_directories(root_);
  const fs::path tmp = root_ / (std::string(kSchemaConfigFile) + ".tmp");
  write_file(tmp, stored.dump(2) + "\n");
  fs::rename(tmp, path);
  return json(200, stored);
}

}  // namespace catos::api
