#include "catos/catos.h"

#include <cstdlib>
#include <cstring>
#include <deque>
#include <string>

#include "catos/analytics.hpp"
#include "catos/api.hpp"
#include "catos/archive.hpp"
#include "catos/bus.hpp"
#include "catos/error.hpp"
#include "catos/hwlink.hpp"
#include "catos/session.hpp"

struct catos_api {
  explicit catos_api(catos::fs::path root) : service(std::move(root)) {}
  catos::api::Service service;
};

struct catos_decoder {
  catos::hwlink::FrameDecoder decoder;
  std::deque<catos::hwlink::WireMessage> ready;
};

struct catos_bus {
  explicit catos_bus(std::size_t capacity) : bus(capacity) {}
  catos::bus::MessageBus bus;
};

namespace {

thread_local std::string g_last_error;

catos_status status_of(catos::ErrorKind kind) {
  using catos::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return CATOS_E_INVALID_ARGUMENT;
    case ErrorKind::Config: return CATOS_E_CONFIG;
    case ErrorKind::Io: return CATOS_E_IO;
    case ErrorKind::Format: return CATOS_E_FORMAT;
    case ErrorKind::NotFound: return CATOS_E_NOT_FOUND;
    case ErrorKind::Conflict: return CATOS_E_CONFLICT;
    case ErrorKind::State: return CATOS_E_STATE;
    case ErrorKind::MalformedHeader: return CATOS_E_MALFORMED_HEADER;
    case ErrorKind::NotPcm: return CATOS_E_NOT_PCM;
    case ErrorKind::Truncated: return CATOS_E_TRUNCATED;
    case ErrorKind::LinkClosed: return CATOS_E_LINK_CLOSED;
  }
  return CATOS_E_INTERNAL;
}

catos_status fail(catos_status s, const std::string& message) {
  g_last_error = message;
  return s;
}

// Runs f, translating exceptions into status codes.
template <typename F>
catos_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return CATOS_OK;
  } catch (const catos::Error& e) {
    return fail(status_of(e.kind()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(CATOS_E_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(CATOS_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(CATOS_E_INTERNAL, e.what());
  } catch (...) {
    return fail(CATOS_E_INTERNAL, "unknown error");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void require(bool ok, const char* what) {
  if (!ok) throw catos::Error(catos::ErrorKind::InvalidArgument, what);
}

catos::Json report_json(const catos::session::RunReport& r, const catos::fs::path& out) {
  std::size_t clips = 0;
  for (const auto& per_camera : r.clips) clips += per_camera.size();
  return catos::Json{
      {"session_id", r.session_id},
      {"output_dir", out.string()},
      {"observed_ms", r.observed_ms},
      {"trials", r.summary.trials},
      {"correct", r.summary.correct},
      {"rewards", r.summary.rewards},
      {"clips", clips},
      {"frames", r.frames},
      {"dispense_commands", r.dispense_commands},
      {"piezo_hits", r.piezo_hits},
      {"hopper_left", r.hopper_left},
  };
}

void run(catos::session::RunConfig config, const uint64_t* seed, const char* output_dir, char** report) {
  if (seed != nullptr) config.seed = *seed;
  if (output_dir != nullptr) config.output_dir = output_dir;
  const auto r = catos::session::run_session(config);
  *report = dup_string(report_json(r, config.output_dir).dump());
}

}  // namespace

extern "C" {

const char* catos_last_error(void) { return g_last_error.c_str(); }

const char* catos_status_name(catos_status status) {
  switch (status) {
    case CATOS_OK: return "ok";
    case CATOS_E_INVALID_ARGUMENT: return "invalid argument";
    case CATOS_E_CONFIG: return "config";
    case CATOS_E_IO: return "io";
    case CATOS_E_FORMAT: return "format";
    case CATOS_E_NOT_FOUND: return "not found";
    case CATOS_E_CONFLICT: return "conflict";
    case CATOS_E_STATE: return "state";
    case CATOS_E_MALFORMED_HEADER: return "malformed header";
    case CATOS_E_NOT_PCM: return "not pcm";
    case CATOS_E_TRUNCATED: return "truncated";
    case CATOS_E_LINK_CLOSED: return "link closed";
    case CATOS_E_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* catos_version(void) { return "1.0.0"; }

void catos_string_free(char* s) { std::free(s); }

catos_status catos_run_session(const char* config_path, const uint64_t* seed, const char* output_dir,
                               char** report_json) {
  return guarded([&] {
    require(config_path != nullptr && report_json != nullptr, "config path and report pointer are required");
    run(catos::session::load_run_config(config_path), seed, output_dir, report_json);
  });
}

catos_status catos_run_session_json(const char* config_json, const uint64_t* seed, const char* output_dir,
                                    char** report_json) {
  return guarded([&] {
    require(config_json != nullptr && report_json != nullptr, "config text and report pointer are required");
    catos::Json j;
    try {
      j = catos::Json::parse(config_json);
    } catch (const catos::Json::parse_error& e) {
      throw catos::Error(catos::ErrorKind::Config, e.what());
    }
    run(catos::session::run_config_from_json(j), seed, output_dir, report_json);
  });
}

catos_status catos_archive_session(const char* output_dir, const char* archive_root, char** index_json) {
  return guarded([&] {
    require(output_dir != nullptr && archive_root != nullptr, "output and archive folders are required");
    const auto index = catos::archive::archive_session(output_dir, archive_root);
    if (index_json != nullptr) *index_json = dup_string(catos::archive::to_json(index).dump(2));
  });
}

catos_status catos_analyze_session(const char* session_dir, char** stats_json) {
  return guarded([&] {
    require(session_dir != nullptr && stats_json != nullptr, "session folder and output pointer are required");
    *stats_json = dup_string(catos::analytics::to_json(catos::analytics::session_stats(session_dir)).dump(2));
  });
}

catos_status catos_performance_series(const char* archive_root, const char* ids_csv, int as_csv, char** out) {
  return guarded([&] {
    require(archive_root != nullptr && ids_csv != nullptr && out != nullptr, "archive, ids and output are required");
    std::vector<std::string> ids;
    for (auto id : catos::split(ids_csv, ',')) {
      if (!id.empty()) ids.emplace_back(id);
    }
    require(!ids.empty(), "at least one session id is required");
    const auto series = catos::analytics::performance_series(archive_root, ids);
    *out = dup_string(as_csv ? catos::analytics::series_to_csv(series)
                             : catos::analytics::series_to_json(series).dump(2));
  });
}

catos_status catos_binomial_pvalue(int64_t n, int64_t k, double p0, double* out) {
  return guarded([&] {
    require(out != nullptr, "output pointer is required");
    *out = catos::analytics::binomial_pvalue(n, k, p0);
  });
}

catos_status catos_duty_cycle(double recorded_s, double observed_s, double* out) {
  return guarded([&] {
    require(out != nullptr, "output pointer is required");
    *out = catos::analytics::duty_cycle(recorded_s, observed_s);
  });
}

catos_status catos_frames_to_seconds(int64_t frame_count, double fps, double* out) {
  return guarded([&] {
    require(out != nullptr, "output pointer is required");
    *out = catos::analytics::frames_to_seconds(frame_count, fps);
  });
}

catos_status catos_api_open(const char* archive_root, catos_api** out) {
  return guarded([&] {
    require(archive_root != nullptr && out != nullptr, "archive folder and output pointer are required");
    require(catos::fs::is_directory(archive_root), "archive folder does not exist");
    *out = new catos_api(archive_root);
  });
}

catos_status catos_api_handle(catos_api* api, const char* method, const char* path, const char* query,
                              const char* body, size_t body_len, int* http_status, char** response_body) {
  return guarded([&] {
    require(api != nullptr && method != nullptr && path != nullptr && http_status != nullptr &&
                response_body != nullptr,
            "api handle, method, path and outputs are required");
    const auto r = api->service.handle(method, path, query != nullptr ? query : "",
                                       body != nullptr ? std::string_view(body, body_len) : std::string_view());
    *http_status = r.status;
    *response_body = dup_string(r.body);
  });
}

void catos_api_close(catos_api* api) { delete api; }

catos_status catos_encode_msg(uint8_t type, const uint8_t* payload, size_t payload_len, uint8_t* out, size_t cap,
                              size_t* written) {
  return guarded([&] {
    require(out != nullptr && written != nullptr, "output buffer and size pointer are required");
    require(payload != nullptr || payload_len == 0, "payload pointer is required");
    catos::hwlink::WireMessage m{type, std::vector<std::uint8_t>(payload, payload + payload_len)};
    const auto bytes = catos::hwlink::encode_msg(m);
    if (bytes.size() > cap) throw catos::Error(catos::ErrorKind::InvalidArgument, "output buffer too small");
    std::memcpy(out, bytes.data(), bytes.size());
    *written = bytes.size();
  });
}

catos_status catos_decoder_new(catos_decoder** out) {
  return guarded([&] {
    require(out != nullptr, "output pointer is required");
    *out = new catos_decoder();
  });
}

catos_status catos_decoder_feed(catos_decoder* dec, const uint8_t* bytes, size_t n, size_t* ready) {
  return guarded([&] {
    require(dec != nullptr && (bytes != nullptr || n == 0), "decoder and bytes are required");
    for (auto& m : dec->decoder.feed(std::span(bytes, n))) dec->ready.push_back(std::move(m));
    if (ready != nullptr) *ready = dec->ready.size();
  });
}

int catos_decoder_next(catos_decoder* dec, uint8_t* type, uint8_t* payload, size_t* payload_len) {
  if (dec == nullptr || dec->ready.empty() || type == nullptr || payload_len == nullptr) return 0;
  const auto& m = dec->ready.front();
  *type = m.type;
  *payload_len = m.payload.size();
  if (payload != nullptr && !m.payload.empty()) std::memcpy(payload, m.payload.data(), m.payload.size());
  dec->ready.pop_front();
  return 1;
}

catos_status catos_decoder_stats(const catos_decoder* dec, uint64_t* frames, uint64_t* bad_checksum,
                                 uint64_t* resync_count, uint64_t* malformed) {
  return guarded([&] {
    require(dec != nullptr, "decoder is required");
    const auto& s = dec->decoder.stats();
    if (frames != nullptr) *frames = s.frames;
    if (bad_checksum != nullptr) *bad_checksum = s.bad_checksum;
    if (resync_count != nullptr) *resync_count = s.resync_count;
    if (malformed != nullptr) *malformed = s.malformed;
  });
}

void catos_decoder_free(catos_decoder* dec) { delete dec; }

catos_status catos_bus_new(size_t capacity, catos_bus** out) {
  return guarded([&] {
    require(out != nullptr, "output pointer is required");
    *out = new catos_bus(capacity == 0 ? catos::bus::MessageBus::kDefaultCapacity : capacity);
  });
}

namespace {

catos::bus::Topic topic_arg(const char* topic) {
  require(topic != nullptr, "topic is required");
  auto t = catos::bus::topic_from_name(topic);
  if (!t) throw catos::Error(catos::ErrorKind::InvalidArgument, std::string("unknown topic \"") + topic + "\"");
  return *t;
}

}  // namespace

catos_status catos_bus_subscribe(catos_bus* bus, const char* topic, uint64_t* subscription) {
  return guarded([&] {
    require(bus != nullptr && subscription != nullptr, "bus and subscription pointer are required");
    *subscription = bus->bus.subscribe(topic_arg(topic));
  });
}

catos_status catos_bus_publish_text(catos_bus* bus, const char* topic, const char* publisher, uint64_t seq,
                                    int64_t t_sim_ms, const char* text) {
  return guarded([&] {
    require(bus != nullptr && publisher != nullptr && text != nullptr, "bus, publisher and text are required");
    catos::bus::BusMessage m;
    m.topic = topic_arg(topic);
    m.publisher = publisher;
    m.seq = seq;
    m.t_sim_ms = t_sim_ms;
    m.payload = catos::bus::LogLine{text};
    bus->bus.publish(std::move(m));
  });
}

catos_status catos_bus_poll(catos_bus* bus, uint64_t subscription, size_t max_n, char** messages_json) {
  return guarded([&] {
    require(bus != nullptr && messages_json != nullptr, "bus and output pointer are required");
    catos::Json out = catos::Json::array();
    for (const auto& m : bus->bus.poll(subscription, max_n)) {
      const auto* line = std::get_if<catos::bus::LogLine>(&m.payload);
      out.push_back({{"topic", std::string(catos::bus::topic_name(m.topic))},
                     {"publisher", m.publisher},
                     {"seq", m.seq},
                     {"t_sim_ms", m.t_sim_ms},
                     {"text", line != nullptr ? line->text : std::string()}});
    }
    *messages_json = dup_string(out.dump());
  });
}

void catos_bus_free(catos_bus* bus) { delete bus; }

}  // extern "C"
