#include "catos/vision.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>

#include "catos/error.hpp"

namespace catos::vision {

Frame::Frame(int camera, std::int64_t t, int w, int h, std::vector<std::uint8_t> data)
    : camera_id(camera), t_ms(t), width(w), height(h), pixels(std::move(data)) {
  if (w < kMinFrameSide || h < kMinFrameSide) {
    throw Error(ErrorKind::InvalidArgument, "frame dimensions must be at least 8x8");
  }
  if (pixels.size() != static_cast<std::size_t>(w) * h) {
    throw Error(ErrorKind::InvalidArgument, "pixel count does not match width x height");
  }
}

BackgroundModel::BackgroundModel(const Frame& first)
    : width_(first.width), height_(first.height), mean_(first.pixels.begin(), first.pixels.end()) {}

void BackgroundModel::update(const Frame& frame, double learning_rate) {
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    mean_[i] += learning_rate * (static_cast<double>(frame.pixels[i]) - mean_[i]);
  }
}

BinaryMask foreground_mask(const Frame& frame, const BackgroundModel& bg, int diff_threshold) {
  if (frame.width != bg.width() || frame.height != bg.height()) {
    throw Error(ErrorKind::InvalidArgument, "frame and background dimensions differ");
  }
  BinaryMask mask{frame.width, frame.height, std::vector<std::uint8_t>(frame.pixels.size())};
  for (int y = 0; y < frame.height; ++y) {
    for (int x = 0; x < frame.width; ++x) {
      const double diff = std::abs(static_cast<double>(frame.at(x, y)) - bg.at(x, y));
      mask.bits[static_cast<std::size_t>(y) * frame.width + x] = diff > diff_threshold ? 1 : 0;
    }
  }
  return mask;
}

namespace {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (a < b) std::swap(a, b);
    parent_[a] = b;  // the smaller raster index stays root
  }

 private:
  std::vector<std::size_t> parent_;
};

struct Accumulator {
  std::size_t first = 0;
  int area = 0;
  double sum_x = 0;
  double sum_y = 0;
  BoundingBox bbox;
};

}  // namespace

std::vector<Blob> label_blobs(const BinaryMask& mask, int min_area) {
  const int w = mask.width;
  const int h = mask.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  DisjointSets sets(n);

  // First pass: union each foreground pixel with its already-visited
  // 8-neighbours (W, NW, N, NE).
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      const std::size_t here = static_cast<std::size_t>(y) * w + x;
      if (x > 0 && mask.at(x - 1, y)) sets.unite(here, here - 1);
      if (y > 0) {
        const std::size_t up = here - w;
        if (x > 0 && mask.at(x - 1, y - 1)) sets.unite(here, up - 1);
        if (mask.at(x, y - 1)) sets.unite(here, up);
        if (x + 1 < w && mask.at(x + 1, y - 1)) sets.unite(here, up + 1);
      }
    }
  }

  std::vector<Accumulator> acc;
  std::vector<std::size_t> slot(n, SIZE_MAX);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!mask.at(x, y)) continue;
      const std::size_t root = sets.find(static_cast<std::size_t>(y) * w + x);
      if (slot[root] == SIZE_MAX) {
        slot[root] = acc.size();
        acc.push_back({root, 0, 0, 0, {x, y, x, y}});
      }
      Accumulator& a = acc[slot[root]];
      ++a.area;
      a.sum_x += x;
      a.sum_y += y;
      a.bbox.min_x = std::min(a.bbox.min_x, x);
      a.bbox.min_y = std::min(a.bbox.min_y, y);
      a.bbox.max_x = std::max(a.bbox.max_x, x);
      a.bbox.max_y = std::max(a.bbox.max_y, y);
    }
  }

  std::erase_if(acc, [&](const Accumulator& a) { return a.area < min_area; });
  std::sort(acc.begin(), acc.end(), [](const Accumulator& a, const Accumulator& b) {
    if (a.bbox.min_x != b.bbox.min_x) return a.bbox.min_x < b.bbox.min_x;
    if (a.bbox.min_y != b.bbox.min_y) return a.bbox.min_y < b.bbox.min_y;
    return a.first < b.first;
  });

  std::vector<Blob> blobs;
  blobs.reserve(acc.size());
  for (const Accumulator& a : acc) {
    blobs.push_back({a.sum_x / a.area, a.sum_y / a.area, a.area, a.bbox});
  }
  return blobs;
}

std::vector<Blob> detect_motion_blobs(const Frame& frame, BackgroundModel& bg,
                                      const DetectParams& params) {
  BinaryMask mask = foreground_mask(frame, bg, params.diff_threshold);
  std::vector<Blob> blobs = label_blobs(mask, params.min_blob_area);
  bg.update(frame, params.learning_rate);
  return blobs;
}

// ---------------------------------------------------------------------------

double PathEntry::x_at(std::int64_t t) const {
  if (t_end_ms <= t_begin_ms) return x0;
  const double f = static_cast<double>(t - t_begin_ms) / static_cast<double>(t_end_ms - t_begin_ms);
  return x0 + (x1 - x0) * f;
}

double PathEntry::y_at(std::int64_t t) const {
  if (t_end_ms <= t_begin_ms) return y0;
  const double f = static_cast<double>(t - t_begin_ms) / static_cast<double>(t_end_ms - t_begin_ms);
  return y0 + (y1 - y0) * f;
}

void MotionScript::add(const PathEntry& entry) {
  if (entry.t_end_ms <= entry.t_begin_ms) {
    throw Error(ErrorKind::InvalidArgument, "path entry must have t_end_ms > t_begin_ms");
  }
  for (const PathEntry& e : entries_) {
    if (e.blob_id == entry.blob_id && entry.t_begin_ms < e.t_end_ms && e.t_begin_ms < entry.t_end_ms) {
      throw Error(ErrorKind::InvalidArgument,
                  "overlapping path entries for blob " + std::to_string(entry.blob_id));
    }
  }
  entries_.push_back(entry);
}

std::vector<const PathEntry*> MotionScript::active_at(std::int64_t t_ms) const {
  std::vector<const PathEntry*> active;
  for (const PathEntry& e : entries_) {
    if (e.t_begin_ms <= t_ms && t_ms < e.t_end_ms) active.push_back(&e);
  }
  return active;
}

void MotionScript::forget_before(std::int64_t t_ms) {
  std::erase_if(entries_, [&](const PathEntry& e) { return e.t_end_ms < t_ms; });
}

std::int64_t frame_time(double fps, std::int64_t index) {
  return static_cast<std::int64_t>(std::floor(static_cast<double>(index) * 1000.0 / fps + 1e-9));
}

std::vector<std::int64_t> frame_times(double fps, std::int64_t duration_ms) {
  if (!(fps > 0)) throw Error(ErrorKind::InvalidArgument, "fps must be positive");
  std::vector<std::int64_t> times;
  for (std::int64_t k = 0;; ++k) {
    const std::int64_t t = frame_time(fps, k);
    if (t > duration_ms) break;
    times.push_back(t);
  }
  return times;
}

SyntheticFrameSource::SyntheticFrameSource(const SourceParams& params, const MotionScript& script)
    : params_(params), script_(script) {
  if (!(params.fps > 0)) throw Error(ErrorKind::InvalidArgument, "fps must be positive");
  if (params.width < kMinFrameSide || params.height < kMinFrameSide) {
    throw Error(ErrorKind::InvalidArgument, "frame dimensions must be at least 8x8");
  }
  SplitMix64 rng = SplitMix64(params.seed).fork(0x7E47u);
  texture_.resize(static_cast<std::size_t>(params.width) * params.height);
  for (auto& px : texture_) px = static_cast<std::uint8_t>(60 + rng.uniform_int(0, 40));
}

bool SyntheticFrameSource::has_next() const {
  return frame_time(params_.fps, index_) <= params_.duration_ms;
}

std::int64_t SyntheticFrameSource::next_time() const { return frame_time(params_.fps, index_); }

Frame SyntheticFrameSource::next() {
  const std::int64_t t = next_time();
  const int w = params_.width;
  const int h = params_.height;
  std::vector<std::uint8_t> px = texture_;

  for (const PathEntry* e : script_.active_at(t)) {
    double cx = e->x_at(t);
    const double cy = e->y_at(t);
    if (params_.mirror_x) cx = (w - 1) - cx;
    const double r2 = e->radius * e->radius;
    const int x_lo = std::max(0, static_cast<int>(std::floor(cx - e->radius)));
    const int x_hi = std::min(w - 1, static_cast<int>(std::ceil(cx + e->radius)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(cy - e->radius)));
    const int y_hi = std::min(h - 1, static_cast<int>(std::ceil(cy + e->radius)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double dx = x - cx;
        const double dy = y - cy;
        if (dx * dx + dy * dy <= r2) px[static_cast<std::size_t>(y) * w + x] = e->intensity;
      }
    }
  }

  if (params_.noise_amplitude > 0) {
    SplitMix64 rng = SplitMix64(params_.seed)
                         .fork((static_cast<std::uint64_t>(params_.camera_id) << 40) ^
                               static_cast<std::uint64_t>(index_));
    const int a = params_.noise_amplitude;
    for (auto& p : px) {
      const int v = static_cast<int>(p) + static_cast<int>(rng.uniform_int(-a, a));
      p = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
  }

  ++index_;
  return Frame(params_.camera_id, t, w, h, std::move(px));
}

// ---------------------------------------------------------------------------

RecordGate::RecordGate(const GateParams& params) : params_(params) {
  if (params.pre_roll_ms < 0 || params.hangover_ms < 0) {
    throw Error(ErrorKind::InvalidArgument, "pre-roll and hangover must be non-negative");
  }
}

std::optional<ClipSpan> RecordGate::current() const {
  if (!open_) return std::nullopt;
  return ClipSpan{start_ms_, last_motion_ms_ + params_.hangover_ms};
}

std::vector<GateEvent> RecordGate::step(std::int64_t t_ms, bool motion_present) {
  std::vector<GateEvent> events;
  const std::int64_t tail_end = last_motion_ms_ + params_.hangover_ms;
  if (open_) {
    if (motion_present) {
      if (t_ms - params_.pre_roll_ms <= tail_end) {
        last_motion_ms_ = t_ms;
        events.push_back({GateEventKind::Extend, *current()});
        return events;
      }
      events.push_back({GateEventKind::Close, {start_ms_, tail_end}});
      open_ = false;
    } else if (t_ms - params_.pre_roll_ms > tail_end) {
      events.push_back({GateEventKind::Close, {start_ms_, tail_end}});
      open_ = false;
      return events;
    }
  }
  if (!open_ && motion_present) {
    open_ = true;
    start_ms_ = std::max(params_.stream_start_ms, t_ms - params_.pre_roll_ms);
    last_motion_ms_ = t_ms;
    events.push_back({GateEventKind::Open, *current()});
  }
  return events;
}

std::optional<GateEvent> RecordGate::finish(std::int64_t stream_end_ms) {
  if (!open_) return std::nullopt;
  open_ = false;
  return GateEvent{GateEventKind::Close,
                   {start_ms_, std::min(last_motion_ms_ + params_.hangover_ms, stream_end_ms)}};
}

// ---------------------------------------------------------------------------

std::vector<MovementRecordRow> movement_rows(std::int64_t t_ms, std::span<const Blob> blobs) {
  std::vector<MovementRecordRow> rows;
  rows.reserve(blobs.size());
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    rows.push_back({t_ms, static_cast<int>(i), blobs[i].cx, blobs[i].cy, blobs[i].area});
  }
  return rows;
}

std::string format_movement_row(const MovementRecordRow& row) {
  return std::to_string(row.t_ms) + "," + std::to_string(row.blob) + "," + format_fixed(row.cx, 2) +
         "," + format_fixed(row.cy, 2) + "," + std::to_string(row.area);
}

std::vector<MovementRecordRow> parse_movement_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty() || lines[0] != kMovementCsvHeader) {
    throw Error(ErrorKind::Format, "movement record: missing header");
  }
  std::vector<MovementRecordRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    const std::string where = "movement record line " + std::to_string(i + 1);
    if (fields.size() != 5) throw Error(ErrorKind::Format, where + ": expected 5 fields");
    auto t = parse_int(fields[0]);
    auto ord = parse_int(fields[1]);
    auto cx = parse_double(fields[2]);
    auto cy = parse_double(fields[3]);
    auto area = parse_int(fields[4]);
    if (!t || !ord || !cx || !cy || !area) throw Error(ErrorKind::Format, where + ": bad number");
    rows.push_back({*t, static_cast<int>(*ord), *cx, *cy, static_cast<int>(*area)});
  }
  return rows;
}

MovementRecordWriter::MovementRecordWriter(fs::path path) : path_(std::move(path)) {
  const bool fresh = !fs::exists(path_) || fs::file_size(path_) == 0;
  file_ = std::fopen(path_.c_str(), "ab");
  if (file_ == nullptr) throw Error(ErrorKind::Io, "cannot open " + path_.string());
  if (fresh) {
    std::string header(kMovementCsvHeader);
    header += '\n';
    if (std::fwrite(header.data(), 1, header.size(), file_) != header.size() || std::fflush(file_) != 0) {
      throw Error(ErrorKind::Io, "write failed: " + path_.string());
    }
  }
}

MovementRecordWriter::~MovementRecordWriter() {
  if (file_ != nullptr) std::fclose(file_);
}

void MovementRecordWriter::append(std::span<const MovementRecordRow> rows) {
  if (rows.empty()) return;
  std::string chunk;
  for (const auto& row : rows) {
    chunk += format_movement_row(row);
    chunk += '\n';
  }
  if (std::fwrite(chunk.data(), 1, chunk.size(), file_) != chunk.size() || std::fflush(file_) != 0) {
    throw Error(ErrorKind::Io, "write failed: " + path_.string());
  }
}

// ---------------------------------------------------------------------------

std::string encode_pgm(int width, int height, std::span<const std::uint8_t> pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorKind::InvalidArgument, "pgm: pixel count does not match dimensions");
  }
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(pixels.data()), pixels.size());
  return out;
}

Frame decode_pgm(std::string_view bytes) {
  std::size_t pos = 0;
  auto token = [&]() -> std::string_view {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    const std::size_t start = pos;
    while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    return bytes.substr(start, pos - start);
  };
  if (token() != "P5") throw Error(ErrorKind::Format, "pgm: not a binary P5 file");
  auto w = parse_int(token());
  auto h = parse_int(token());
  auto maxval = parse_int(token());
  if (!w || !h || !maxval || *maxval != 255) throw Error(ErrorKind::Format, "pgm: bad header");
  ++pos;  // single whitespace after maxval
  const std::size_t n = static_cast<std::size_t>(*w) * static_cast<std::size_t>(*h);
  if (bytes.size() < pos + n) throw Error(ErrorKind::Format, "pgm: truncated pixel data");
  std::vector<std::uint8_t> px(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                               bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
  return Frame(0, 0, static_cast<int>(*w), static_cast<int>(*h), std::move(px));
}

}  // namespace catos::vision
