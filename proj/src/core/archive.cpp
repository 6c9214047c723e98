#include "catos/archive.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "catos/analytics.hpp"
#include "catos/audio.hpp"
#include "catos/error.hpp"
#include "catos/recorder.hpp"
#include "catos/schema.hpp"

namespace catos::archive {

bool is_session_id(std::string_view id) {
  if (id.size() != 15 || id[8] != '_') return false;
  for (std::size_t i = 0; i < id.size(); ++i) {
    if (i != 8 && (id[i] < '0' || id[i] > '9')) return false;
  }
  return true;
}

std::string session_id_from_timestamp(std::string_view iso) {
  // YYYY-MM-DDTHH:MM:SS
  const bool shape = iso.size() == 19 && iso[4] == '-' && iso[7] == '-' && iso[10] == 'T' && iso[13] == ':' &&
                     iso[16] == ':';
  std::string id;
  if (shape) {
    for (char c : iso) {
      if (c >= '0' && c <= '9') id += c;
      if (c == 'T') id += '_';
    }
  }
  if (!is_session_id(id)) {
    throw Error(ErrorKind::InvalidArgument, "session_start: expected YYYY-MM-DDTHH:MM:SS, got \"" +
                                                std::string(iso) + "\"");
  }
  return id;
}

Json to_json(const SessionInfo& s) {
  return Json{
      {"session_id", s.session_id},
      {"session_start", s.session_start},
      {"seed", s.seed},
      {"observed_ms", s.observed_ms},
      {"cameras", s.cameras},
      {"fps", s.fps},
      {"width", s.width},
      {"height", s.height},
      {"stimulus_to_button", s.stimulus_to_button},
      {"response_window_ms", s.response_window_ms},
  };
}

SessionInfo session_info_from_json(const Json& j) {
  SessionInfo s;
  try {
    j.at("session_id").get_to(s.session_id);
    j.at("session_start").get_to(s.session_start);
    j.at("seed").get_to(s.seed);
    j.at("observed_ms").get_to(s.observed_ms);
    j.at("cameras").get_to(s.cameras);
    j.at("fps").get_to(s.fps);
    j.at("width").get_to(s.width);
    j.at("height").get_to(s.height);
    j.at("stimulus_to_button").get_to(s.stimulus_to_button);
    j.at("response_window_ms").get_to(s.response_window_ms);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("session info: ") + e.what());
  }
  return s;
}

SessionInfo read_session_info(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "missing " + path.string());
  try {
    return session_info_from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------

Json to_json(const SessionIndex& index) {
  Json clips = Json::array();
  for (const auto& c : index.clips) {
    clips.push_back({{"id", c.id},
                     {"camera", c.camera_id},
                     {"start_ms", c.start_ms},
                     {"end_ms", c.end_ms},
                     {"frame_count", c.frame_count},
                     {"fps", c.fps},
                     {"movement_image", c.movement_image}});
  }
  Json folders = Json::object();
  for (const char* f : kFolders) folders[f] = f;
  return Json{
      {"session_id", index.session_id},
      {"observed_ms", index.observed_ms},
      {"cameras", index.cameras},
      {"folders", folders},
      {"clips", clips},
      {"sounds", index.sounds},
      {"movement", index.movement},
      {"results", index.results},
      {"logs", index.logs},
      {"stats",
       {{"trials", index.stats.trials}, {"correct", index.stats.correct}, {"duty_cycle", index.stats.duty_cycle}}},
  };
}

SessionIndex session_index_from_json(const Json& j) {
  SessionIndex index;
  try {
    j.at("session_id").get_to(index.session_id);
    j.at("observed_ms").get_to(index.observed_ms);
    j.at("cameras").get_to(index.cameras);
    for (const auto& c : j.at("clips")) {
      ClipEntry e;
      c.at("id").get_to(e.id);
      c.at("camera").get_to(e.camera_id);
      c.at("start_ms").get_to(e.start_ms);
      c.at("end_ms").get_to(e.end_ms);
      c.at("frame_count").get_to(e.frame_count);
      c.at("fps").get_to(e.fps);
      c.at("movement_image").get_to(e.movement_image);
      index.clips.push_back(std::move(e));
    }
    j.at("sounds").get_to(index.sounds);
    j.at("movement").get_to(index.movement);
    j.at("results").get_to(index.results);
    j.at("logs").get_to(index.logs);
    const Json& s = j.at("stats");
    s.at("trials").get_to(index.stats.trials);
    s.at("correct").get_to(index.stats.correct);
    s.at("duty_cycle").get_to(index.stats.duty_cycle);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("session index: ") + e.what());
  }
  return index;
}

SessionIndex read_index(const fs::path& session_dir) {
  const fs::path path = session_dir / kIndexFile;
  if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "missing " + path.string());
  try {
    return session_index_from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

namespace {

std::vector<std::string> sorted_names(const fs::path& dir, bool directories) {
  std::vector<std::string> names;
  if (!fs::is_directory(dir)) throw Error(ErrorKind::NotFound, "missing " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() == directories) names.push_back(entry.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

void require_file(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw Error(ErrorKind::NotFound, "missing " + path.string());
}

}  // namespace

SessionIndex build_index(const fs::path& session_dir) {
  SessionIndex index;
  const SessionInfo info = read_session_info(session_dir / "results" / kSessionFile);
  index.session_id = info.session_id;
  index.observed_ms = info.observed_ms;
  index.cameras = info.cameras;

  double recorded_s = 0;
  for (const auto& name : sorted_names(session_dir / "clips", true)) {
    const fs::path clip_dir = session_dir / "clips" / name;
    const vision::ClipManifest m = vision::read_clip_manifest(clip_dir);
    for (std::size_t i = 1; i <= m.frame_count(); ++i) require_file(clip_dir / vision::clip_frame_name(i));
    ClipEntry e;
    e.id = name;
    e.camera_id = m.camera_id;
    e.start_ms = m.start_ms;
    e.end_ms = m.end_ms;
    e.frame_count = static_cast<std::int64_t>(m.frame_count());
    e.fps = m.fps;
    e.movement_image = "movement/" + name + ".pgm";
    require_file(session_dir / e.movement_image);
    recorded_s += analytics::frames_to_seconds(e.frame_count, e.fps);
    index.clips.push_back(std::move(e));
  }
  std::stable_sort(index.clips.begin(), index.clips.end(), [](const ClipEntry& a, const ClipEntry& b) {
    return std::tie(a.camera_id, a.start_ms) < std::tie(b.camera_id, b.start_ms);
  });

  index.sounds = sorted_names(session_dir / "sounds", false);
  for (auto& name : sorted_names(session_dir / "movement", false)) {
    if (fs::path(name).extension() == ".csv") index.movement.push_back(std::move(name));
  }
  index.results = sorted_names(session_dir / "results", false);
  index.logs = sorted_names(session_dir / "logs", false);

  const fs::path results = session_dir / "results" / kResultsFile;
  require_file(results);
  const auto parsed = schema::parse_result_csv(read_file(results));
  if (!parsed.summary) throw Error(ErrorKind::State, "session not closed: " + results.string());
  index.stats.trials = parsed.summary->trials;
  index.stats.correct = parsed.summary->correct;
  const double observed_s = static_cast<double>(info.observed_ms) / 1000.0 * info.cameras;
  index.stats.duty_cycle = observed_s > 0 ? analytics::duty_cycle(recorded_s, observed_s) : 0.0;
  return index;
}

// ---------------------------------------------------------------------------

namespace {

long round_half_up(double v) { return static_cast<long>(std::floor(v + 0.5)); }

struct Canvas {
  int width;
  int height;
  std::vector<std::uint8_t> pixels;

  void set(long x, long y, std::uint8_t v) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    pixels[static_cast<std::size_t>(y) * width + x] = v;
  }

  void disk(double cx, double cy, long r, std::uint8_t v) {
    const double r2 = static_cast<double>(r * r);
    for (long y = round_half_up(cy) - r - 1; y <= round_half_up(cy) + r + 1; ++y) {
      for (long x = round_half_up(cx) - r - 1; x <= round_half_up(cx) + r + 1; ++x) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        if (dx * dx + dy * dy <= r2) set(x, y, v);
      }
    }
  }

  void line(long x0, long y0, long x1, long y1, std::uint8_t v) {
    const long dx = std::abs(x1 - x0);
    const long dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1;
    const long sy = y0 < y1 ? 1 : -1;
    long err = dx + dy;
    while (true) {
      set(x0, y0, v);
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

}  // namespace

std::string render_movement_image(std::span<const vision::MovementRecordRow> rows, int width, int height) {
  if (rows.empty()) throw Error(ErrorKind::InvalidArgument, "movement image needs at least one row");
  if (width <= 0 || height <= 0) throw Error(ErrorKind::InvalidArgument, "movement image needs positive size");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].t_ms < rows[i - 1].t_ms) throw Error(ErrorKind::InvalidArgument, "movement rows must be sorted by time");
  }
  Canvas canvas{width, height, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height, kCanvasGray)};
  const std::int64_t t0 = rows.front().t_ms;
  const std::int64_t span = rows.back().t_ms - t0;
  auto intensity = [&](std::int64_t t) -> std::uint8_t {
    if (span == 0) return 0;
    // round(255 * (t - t0) / span), halves rounded up, in integers
    return static_cast<std::uint8_t>((510 * (t - t0) + span) / (2 * span));
  };

  std::size_t i = 0;
  while (i < rows.size()) {
    std::size_t j = i;
    while (j < rows.size() && rows[j].t_ms == rows[i].t_ms) ++j;
    const std::uint8_t v = intensity(rows[i].t_ms);
    for (std::size_t k = i; k < j; ++k) {
      const long r = std::max(2L, round_half_up(std::sqrt(rows[k].area / M_PI)));
      canvas.disk(rows[k].cx, rows[k].cy, r, v);
    }
    for (std::size_t k = i + 1; k < j; ++k) {
      canvas.line(round_half_up(rows[k - 1].cx), round_half_up(rows[k - 1].cy), round_half_up(rows[k].cx),
                  round_half_up(rows[k].cy), v);
    }
    i = j;
  }
  return vision::encode_pgm(width, height, canvas.pixels);
}

// ---------------------------------------------------------------------------

namespace {

/// Start time encoded in a sound file name: stim<k>_<t>.wav or mic_<t>.wav.
std::optional<std::int64_t> sound_time(const std::string& name) {
  const auto us = name.rfind('_');
  const auto dot = name.rfind(".wav");
  if (us == std::string::npos || dot == std::string::npos || dot <= us + 1) return std::nullopt;
  return parse_int(std::string_view(name).substr(us + 1, dot - us - 1));
}

bool is_movement_csv(const std::string& name) {
  return name.starts_with("movement_cam") && name.ends_with(".csv");
}

}  // namespace

SessionIndex archive_session(const fs::path& output_dir, const fs::path& archive_root,
                             const std::string& session_id) {
  if (!fs::is_directory(output_dir)) throw Error(ErrorKind::NotFound, "missing output folder " + output_dir.string());
  const fs::path results_path = output_dir / kResultsFile;
  require_file(results_path);
  const auto results = schema::parse_result_csv(read_file(results_path));
  if (!results.summary) throw Error(ErrorKind::State, "session not closed: no summary line in " + results_path.string());
  const SessionInfo info = read_session_info(output_dir / kSessionFile);

  const std::string id = session_id.empty() ? info.session_id : session_id;
  if (!is_session_id(id)) throw Error(ErrorKind::InvalidArgument, "bad session id \"" + id + "\"");
  if (id != info.session_id) {
    throw Error(ErrorKind::InvalidArgument, "session id " + id + " does not match session.json (" + info.session_id + ")");
  }
  const fs::path dest = archive_root / id;
  if (fs::exists(dest)) throw Error(ErrorKind::Conflict, "session " + id + " already archived in " + dest.string());

  std::error_code ec;
  for (const char* f : kFolders) {
    fs::create_directories(dest / f, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + (dest / f).string() + ": " + ec.message());
  }

  std::vector<std::string> failures;
  auto move = [&](const fs::path& from, const fs::path& to) {
    std::error_code err;
    fs::rename(from, to, err);
    if (err) failures.push_back(from.string() + " -> " + to.string() + ": " + err.message());
  };

  std::vector<fs::path> entries;
  for (const auto& e : fs::directory_iterator(output_dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());

  for (const fs::path& from : entries) {
    const std::string name = from.filename().string();
    if (fs::is_directory(from)) {
      if (name.starts_with("clip_")) {
        move(from, dest / "clips" / name);
      } else {
        failures.push_back(from.string() + ": unexpected directory");
      }
    } else if (from.extension() == ".wav") {
      std::string label = "ambient_";
      if (const auto t0 = sound_time(name)) {
        std::int64_t duration = 0;
        try {
          duration = audio::wav_read(from).duration_ms();
        } catch (const Error& e) {
          failures.push_back(from.string() + ": " + e.what());
        }
        const std::int64_t t1 = *t0 + duration;
        for (const auto& r : results.rows) {
          if (*t0 <= r.t_start_ms + info.response_window_ms && r.t_start_ms <= t1) {
            label = "t" + std::to_string(r.trial_id) + "_";
            break;
          }
        }
      }
      move(from, dest / "sounds" / (label + name));
    } else if (is_movement_csv(name)) {
      move(from, dest / "movement" / name);
    } else if (name == kResultsFile || name == kSessionFile) {
      move(from, dest / "results" / name);
    } else {
      move(from, dest / "logs" / name);
    }
  }

  // Movement images, one per clip, from that camera's records within the clip.
  std::map<int, std::vector<vision::MovementRecordRow>> rows_by_camera;
  std::error_code iter_ec;
  for (const auto& entry : fs::directory_iterator(dest / "clips", iter_ec)) {
    try {
      const vision::ClipManifest m = vision::read_clip_manifest(entry.path());
      auto it = rows_by_camera.find(m.camera_id);
      if (it == rows_by_camera.end()) {
        const fs::path csv = dest / "movement" / ("movement_cam" + std::to_string(m.camera_id) + ".csv");
        std::vector<vision::MovementRecordRow> rows;
        if (fs::exists(csv)) rows = vision::parse_movement_csv(read_file(csv));
        it = rows_by_camera.emplace(m.camera_id, std::move(rows)).first;
      }
      const auto& all = it->second;
      auto lo = std::lower_bound(all.begin(), all.end(), m.start_ms,
                                 [](const vision::MovementRecordRow& r, std::int64_t t) { return r.t_ms < t; });
      auto hi = std::upper_bound(all.begin(), all.end(), m.end_ms,
                                 [](std::int64_t t, const vision::MovementRecordRow& r) { return t < r.t_ms; });
      std::string pgm;
      if (lo == hi) {
        // No blob rows inside the clip: blank canvas.
        pgm = vision::encode_pgm(
            info.width, info.height,
            std::vector<std::uint8_t>(static_cast<std::size_t>(info.width) * info.height, kCanvasGray));
      } else {
        pgm = render_movement_image(std::span(&*lo, static_cast<std::size_t>(hi - lo)), info.width, info.height);
      }
      write_file(dest / "movement" / (entry.path().filename().string() + ".pgm"), pgm);
    } catch (const Error& e) {
      failures.push_back(e.what());
    }
  }

  if (!failures.empty()) {
    std::string msg = "archiving " + id + " incomplete:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw Error(ErrorKind::Io, msg);
  }

  SessionIndex index = build_index(dest);
  write_file(dest / kIndexFile, to_json(index).dump(2) + "\n");
  return index;
}

std::vector<std::string> list_sessions(const fs::path& archive_root) {
  std::vector<std::string> ids;
  if (!fs::is_directory(archive_root)) return ids;
  for (const auto& entry : fs::directory_iterator(archive_root)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_directory() && is_session_id(name) && fs::exists(entry.path() / kIndexFile)) ids.push_back(name);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace catos::archive
