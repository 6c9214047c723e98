#include "catos/recorder.hpp"

#include <cstdio>

#include "catos/error.hpp"

namespace catos::vision {

Json to_json(const ClipManifest& m) {
  return Json{{"id", m.id},
              {"camera", m.camera_id},
              {"start_ms", m.start_ms},
              {"end_ms", m.end_ms},
              {"fps", m.fps},
              {"count", m.frame_t_ms.size()},
              {"frame_t_ms", m.frame_t_ms}};
}

ClipManifest clip_manifest_from_json(const Json& j) {
  try {
    ClipManifest m;
    m.id = j.at("id").get<std::string>();
    m.camera_id = j.at("camera").get<int>();
    m.start_ms = j.at("start_ms").get<std::int64_t>();
    m.end_ms = j.at("end_ms").get<std::int64_t>();
    m.fps = j.at("fps").get<double>();
    m.frame_t_ms = j.at("frame_t_ms").get<std::vector<std::int64_t>>();
    if (j.at("count").get<std::size_t>() != m.frame_t_ms.size()) {
      throw Error(ErrorKind::Format, "clip manifest: count does not match frame list");
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, std::string("clip manifest: ") + e.what());
  }
}

ClipManifest read_clip_manifest(const fs::path& clip_dir) {
  const fs::path path = clip_dir / "manifest.json";
  if (!fs::exists(path)) throw Error(ErrorKind::NotFound, "missing " + path.string());
  try {
    return clip_manifest_from_json(Json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Format, path.string() + ": " + e.what());
  }
}

std::string clip_frame_name(std::size_t index_from_one) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "f%06zu.pgm", index_from_one);
  return buf;
}

ClipRecorder::ClipRecorder(fs::path root, int camera_id, double fps, const GateParams& gate)
    : root_(std::move(root)), camera_id_(camera_id), fps_(fps), gate_(gate) {}

void ClipRecorder::on_frame(const Frame& frame, bool motion_present) {
  const std::int64_t t = frame.t_ms;
  bool consumed = false;
  for (const GateEvent& ev : gate_.step(t, motion_present)) {
    switch (ev.kind) {
      case GateEventKind::Close:
        close_clip(ev.span);
        break;
      case GateEventKind::Open:
        open_clip(ev.span);
        flush_ring_from(ev.span.start_ms);
        write_frame(frame);
        consumed = true;
        break;
      case GateEventKind::Extend:
        // Frames held past the previous tail are inside this motion's pre-roll.
        flush_ring_from(ev.span.start_ms);
        write_frame(frame);
        consumed = true;
        break;
    }
  }
  if (!consumed && open_ && t <= gate_.current()->end_ms) {
    write_frame(frame);
  }

  ring_.push_back(frame);
  while (!ring_.empty() && ring_.front().t_ms < t - gate_.params().pre_roll_ms) ring_.pop_front();
}

void ClipRecorder::finish(std::int64_t stream_end_ms) {
  if (auto ev = gate_.finish(stream_end_ms)) close_clip(ev->span);
  ring_.clear();
}

void ClipRecorder::open_clip(const ClipSpan& span) {
  char name[48];
  std::snprintf(name, sizeof name, "clip_cam%d_%04zu", camera_id_, closed_.size() + 1);
  ClipManifest m;
  m.id = name;
  m.camera_id = camera_id_;
  m.start_ms = span.start_ms;
  m.end_ms = span.end_ms;
  m.fps = fps_;
  std::error_code ec;
  fs::create_directories(root_ / m.id, ec);
  if (ec) throw Error(ErrorKind::Io, "cannot create clip directory " + (root_ / m.id).string());
  open_ = std::move(m);
}

void ClipRecorder::write_frame(const Frame& frame) {
  if (!open_ || frame.t_ms <= last_written_ms_ || frame.t_ms < open_->start_ms) return;
  open_->frame_t_ms.push_back(frame.t_ms);
  write_file(root_ / open_->id / clip_frame_name(open_->frame_t_ms.size()),
             encode_pgm(frame.width, frame.height, frame.pixels));
  last_written_ms_ = frame.t_ms;
  ++frames_written_;
}

void ClipRecorder::flush_ring_from(std::int64_t start_ms) {
  for (const Frame& f : ring_) {
    if (f.t_ms >= start_ms) write_frame(f);
  }
}

void ClipRecorder::close_clip(const ClipSpan& span) {
  if (!open_) return;
  open_->end_ms = span.end_ms;
  write_file(root_ / open_->id / "manifest.json", to_json(*open_).dump(2) + "\n");
  closed_.push_back(std::move(*open_));
  open_.reset();
}

}  // namespace catos::vision
