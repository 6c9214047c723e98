#pragma once

#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "catos/rng.hpp"
#include "catos/util.hpp"

namespace catos::vision {

/// Grayscale frame, row-major, one byte per pixel.
struct Frame {
  int camera_id = 0;
  std::int64_t t_ms = 0;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Frame() = default;
  Frame(int camera, std::int64_t t, int w, int h, std::vector<std::uint8_t> data);

  std::uint8_t at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

inline constexpr int kMinFrameSide = 8;

struct BoundingBox {
  int min_x = 0;
  int min_y = 0;
  int max_x = 0;
  int max_y = 0;

  bool operator==(const BoundingBox&) const = default;
};

struct Blob {
  double cx = 0;
  double cy = 0;
  int area = 0;
  BoundingBox bbox;

  bool operator==(const Blob&) const = default;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
};

struct DetectParams {
  int diff_threshold = 30;
  int min_blob_area = 20;
  double learning_rate = 0.02;
};

/// Exponential running average of past frames.
class BackgroundModel {
 public:
  explicit BackgroundModel(const Frame& first);

  int width() const { return width_; }
  int height() const { return height_; }
  double at(int x, int y) const { return mean_[static_cast<std::size_t>(y) * width_ + x]; }
  void update(const Frame& frame, double learning_rate);

 private:
  int width_;
  int height_;
  std::vector<double> mean_;
};

BinaryMask foreground_mask(const Frame& frame, const BackgroundModel& bg, int diff_threshold);

/// 8-connected components of the mask with area >= min_area, ordered by
/// (bbox.min_x, bbox.min_y, raster index of the first pixel).
std::vector<Blob> label_blobs(const BinaryMask& mask, int min_area);

/// Thresholds the frame against the background, labels the mask, then folds
/// the frame into the background.
std::vector<Blob> detect_motion_blobs(const Frame& frame, BackgroundModel& bg,
                                      const DetectParams& params);

// ---------------------------------------------------------------------------
// Synthetic camera

/// One straight-line movement of a disk-shaped blob over [t_begin_ms, t_end_ms).
struct PathEntry {
  int blob_id = 0;
  std::int64_t t_begin_ms = 0;
  std::int64_t t_end_ms = 0;
  double x0 = 0, y0 = 0;
  double x1 = 0, y1 = 0;
  double radius = 5;
  std::uint8_t intensity = 230;

  double x_at(std::int64_t t) const;
  double y_at(std::int64_t t) const;
};

class MotionScript {
 public:
  /// Throws if the entry overlaps an existing entry for the same blob id.
  void add(const PathEntry& entry);

  const std::vector<PathEntry>& entries() const { return entries_; }
  std::vector<const PathEntry*> active_at(std::int64_t t_ms) const;

  /// Drops entries that ended before t_ms; keeps the script small during long
  /// sessions.
  void forget_before(std::int64_t t_ms);

 private:
  std::vector<PathEntry> entries_;
};

/// Timestamps t = floor(k * 1000 / fps) for k = 0, 1, ... while t <= duration.
std::vector<std::int64_t> frame_times(double fps, std::int64_t duration_ms);
std::int64_t frame_time(double fps, std::int64_t index);

struct SourceParams {
  int camera_id = 0;
  int width = 96;
  int height = 72;
  double fps = 7.5;
  std::int64_t duration_ms = 0;
  std::uint64_t seed = 0;
  int noise_amplitude = 3;
  bool mirror_x = false;
};

/// Deterministic stand-in for a camera: disks from a MotionScript drawn over a
/// static seeded texture, plus per-pixel uniform noise.
class SyntheticFrameSource {
 public:
  SyntheticFrameSource(const SourceParams& params, const MotionScript& script);

  bool has_next() const;
  std::int64_t next_time() const;
  Frame next();

  const SourceParams& params() const { return params_; }

 private:
  SourceParams params_;
  const MotionScript& script_;
  std::vector<std::uint8_t> texture_;
  std::int64_t index_ = 0;
};

// ---------------------------------------------------------------------------
// Record gate

struct GateParams {
  std::int64_t pre_roll_ms = 2000;
  std::int64_t hangover_ms = 3000;
  std::int64_t stream_start_ms = 0;
};

struct ClipSpan {
  std::int64_t start_ms = 0;
  std::int64_t end_ms = 0;

  bool operator==(const ClipSpan&) const = default;
};

enum class GateEventKind { Open, Extend, Close };

struct GateEvent {
  GateEventKind kind;
  ClipSpan span;
};

/// Motion-gated recording state machine.
///
/// A clip opens pre_roll_ms before the first motion sample and stays open
/// while motion keeps recurring; it ends hangover_ms after the last motion.
/// Closing is only decided once no later motion could pull its pre-roll back
/// into the clip (t > last + hangover + pre_roll), so consecutive clips never
/// overlap or touch.
class RecordGate {
 public:
  explicit RecordGate(const GateParams& params = {});

  std::vector<GateEvent> step(std::int64_t t_ms, bool motion_present);
  std::optional<GateEvent> finish(std::int64_t stream_end_ms);

  bool is_open() const { return open_; }
  /// The open clip's span as it stands; end = last motion + hangover.
  std::optional<ClipSpan> current() const;
  const GateParams& params() const { return params_; }

 private:
  GateParams params_;
  bool open_ = false;
  std::int64_t start_ms_ = 0;
  std::int64_t last_motion_ms_ = 0;
};

// ---------------------------------------------------------------------------
// Movement records

struct MovementRecordRow {
  std::int64_t t_ms = 0;
  int blob = 0;
  double cx = 0;
  double cy = 0;
  int area = 0;

  bool operator==(const MovementRecordRow&) const = default;
};

inline constexpr std::string_view kMovementCsvHeader = "t_ms,blob,cx,cy,area";

std::vector<MovementRecordRow> movement_rows(std::int64_t t_ms, std::span<const Blob> blobs);
std::string format_movement_row(const MovementRecordRow& row);
/// Parses a whole movement-record file, header included.
std::vector<MovementRecordRow> parse_movement_csv(std::string_view text);

/// Appends rows to a movement-record CSV, writing the header when the file is
/// new. Flushes after every call.
class MovementRecordWriter {
 public:
  explicit MovementRecordWriter(fs::path path);
  ~MovementRecordWriter();
  MovementRecordWriter(const MovementRecordWriter&) = delete;
  MovementRecordWriter& operator=(const MovementRecordWriter&) = delete;

  void append(std::span<const MovementRecordRow> rows);
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
  std::FILE* file_ = nullptr;
};

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255)

std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels);
Frame decode_pgm(std::string_view bytes);

}  // namespace catos::vision
