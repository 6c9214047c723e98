#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "catos/util.hpp"
#include "catos/vision.hpp"

namespace catos::vision {

/// Contents of a clip directory's manifest.json.
struct ClipManifest {
  std::string id;  // directory name, e.g. clip_cam0_0001
  int camera_id = 0;
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;
  double fps = 7.5;
  std::vector<std::int64_t> frame_t_ms;

  std::size_t frame_count() const { return frame_t_ms.size(); }
  bool operator==(const ClipManifest&) const = default;
};

Json to_json(const ClipManifest& m);
ClipManifest clip_manifest_from_json(const Json& j);
ClipManifest read_clip_manifest(const fs::path& clip_dir);
std::string clip_frame_name(std::size_t index_from_one);

/// Writes motion-gated clips for one camera: frames go to
/// `<root>/clip_cam<k>_<nnnn>/f000001.pgm ...` plus manifest.json.
///
/// Frames that might still fall into a clip's pre-roll are held in a ring of
/// pre_roll_ms; everything else is written as soon as its membership is
/// decided, so memory stays bounded by the pre-roll.
class ClipRecorder {
 public:
  ClipRecorder(fs::path root, int camera_id, double fps, const GateParams& gate);

  void on_frame(const Frame& frame, bool motion_present);
  void finish(std::int64_t stream_end_ms);

  const std::vector<ClipManifest>& clips() const { return closed_; }
  std::size_t frames_written() const { return frames_written_; }

 private:
  void open_clip(const ClipSpan& span);
  void write_frame(const Frame& frame);
  void flush_ring_from(std::int64_t start_ms);
  void close_clip(const ClipSpan& span);

  fs::path root_;
  int camera_id_;
  double fps_;
  RecordGate gate_;
  std::deque<Frame> ring_;
  std::optional<ClipManifest> open_;
  std::vector<ClipManifest> closed_;
  std::int64_t last_written_ms_ = -1;
  std::size_t frames_written_ = 0;
};

}  // namespace catos::vision
