#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "catos/util.hpp"
#include "catos/vision.hpp"

namespace catos::archive {

// Names shared by the session writer and the archiver.
inline constexpr const char* kResultsFile = "results.csv";
inline constexpr const char* kSessionFile = "session.json";
inline constexpr const char* kLogFile = "session.log";
inline constexpr const char* kIndexFile = "index.json";

inline constexpr std::array<const char*, 5> kFolders = {"clips", "sounds", "movement", "results", "logs"};

/// `YYYYMMDD_HHMMSS`.
bool is_session_id(std::string_view id);
/// "2013-03-01T09:00:00" -> "20130301_090000".
std::string session_id_from_timestamp(std::string_view iso);

/// What the session writer records about the run in session.json.
struct SessionInfo {
  std::string session_id;
  std::string session_start;
  std::uint64_t seed = 0;
  std::int64_t observed_ms = 0;
  int cameras = 1;
  double fps = 7.5;
  int width = 96;
  int height = 72;
  std::array<int, 3> stimulus_to_button{0, 1, 2};
  std::int64_t response_window_ms = 5000;

  bool operator==(const SessionInfo&) const = default;
};

Json to_json(const SessionInfo& s);
SessionInfo session_info_from_json(const Json& j);
SessionInfo read_session_info(const fs::path& path);

struct ClipEntry {
  std::string id;
  int camera_id = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  std::int64_t frame_count = 0;
  double fps = 7.5;
  std::string movement_image;  // relative to the session directory

  bool operator==(const ClipEntry&) const = default;
};

struct StatsDigest {
  int trials = 0;
  int correct = 0;
  double duty_cycle = 0;

  bool operator==(const StatsDigest&) const = default;
};

struct SessionIndex {
  std::string session_id;
  std::int64_t observed_ms = 0;
  int cameras = 1;
  std::vector<ClipEntry> clips;  // by (camera, start)
  std::vector<std::string> sounds;
  std::vector<std::string> movement;  // movement-record CSVs
  std::vector<std::string> results;
  std::vector<std::string> logs;
  StatsDigest stats;

  bool operator==(const SessionIndex&) const = default;
};

Json to_json(const SessionIndex& index);
SessionIndex session_index_from_json(const Json& j);
SessionIndex read_index(const fs::path& session_dir);

/// Rebuilds the index from the archived files alone. Throws NotFound naming
/// the first missing file.
SessionIndex build_index(const fs::path& session_dir);

/// Fig-2 style trace: one filled circle per row on a mid-gray canvas, shaded
/// from black (first timestamp) to white (last); rows sharing a timestamp
/// are joined by lines. Rows must be sorted by time. Returns PGM bytes.
std::string render_movement_image(std::span<const vision::MovementRecordRow> rows, int width, int height);

inline constexpr std::uint8_t kCanvasGray = 180;

/// Moves a closed session from output_dir into archive_root/<session_id>/,
/// renders movement images, labels sounds and writes index.json. An empty
/// session_id means "take it from session.json".
SessionIndex archive_session(const fs::path& output_dir, const fs::path& archive_root,
                             const std::string& session_id = "");

/// Sessions under archive_root that carry an index, sorted by id.
std::vector<std::string> list_sessions(const fs::path& archive_root);

}  // namespace catos::archive
