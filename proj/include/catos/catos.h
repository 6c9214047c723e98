#ifndef CATOS_CATOS_H
#define CATOS_CATOS_H

#include <stddef.h>
#include <stdint.h>

#if defined(CATOS_BUILDING_LIBRARY)
#define CATOS_API __attribute__((visibility("default")))
#else
#define CATOS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum catos_status {
  CATOS_OK = 0,
  CATOS_E_INVALID_ARGUMENT = 1,
  CATOS_E_CONFIG = 2,
  CATOS_E_IO = 3,
  CATOS_E_FORMAT = 4,
  CATOS_E_NOT_FOUND = 5,
  CATOS_E_CONFLICT = 6,
  CATOS_E_STATE = 7,
  CATOS_E_MALFORMED_HEADER = 8,
  CATOS_E_NOT_PCM = 9,
  CATOS_E_TRUNCATED = 10,
  CATOS_E_LINK_CLOSED = 11,
  CATOS_E_INTERNAL = 99
} catos_status;

/* Message of the last failed call on this thread; "" after a success. */
CATOS_API const char* catos_last_error(void);
CATOS_API const char* catos_status_name(catos_status status);
CATOS_API const char* catos_version(void);

/* Strings returned through char** out-parameters are owned by the caller. */
CATOS_API void catos_string_free(char* s);

/* ---- sessions ---------------------------------------------------------- */

/* Runs a simulated session from a JSON config file. seed and output_dir
 * override the file when non-NULL. *report_json receives a run summary. */
CATOS_API catos_status catos_run_session(const char* config_path, const uint64_t* seed, const char* output_dir,
                                         char** report_json);
/* Same, with the configuration given as JSON text. */
CATOS_API catos_status catos_run_session_json(const char* config_json, const uint64_t* seed,
                                              const char* output_dir, char** report_json);

/* Moves a closed session from output_dir into archive_root. */
CATOS_API catos_status catos_archive_session(const char* output_dir, const char* archive_root, char** index_json);

/* Session statistics for an archived session directory, as JSON. */
CATOS_API catos_status catos_analyze_session(const char* session_dir, char** stats_json);

/* Performance series over comma-separated session ids; as_csv selects the
 * CSV export instead of JSON. */
CATOS_API catos_status catos_performance_series(const char* archive_root, const char* ids_csv, int as_csv,
                                                char** out);

/* ---- statistics ---------------------------------------------------------- */

CATOS_API catos_status catos_binomial_pvalue(int64_t n, int64_t k, double p0, double* out);
CATOS_API catos_status catos_duty_cycle(double recorded_s, double observed_s, double* out);
CATOS_API catos_status catos_frames_to_seconds(int64_t frame_count, double fps, double* out);

/* ---- HTTP JSON API, transport-free --------------------------------------- */

typedef struct catos_api catos_api;

CATOS_API catos_status catos_api_open(const char* archive_root, catos_api** out);
/* Safe to call from several threads at once. */
CATOS_API catos_status catos_api_handle(catos_api* api, const char* method, const char* path, const char* query,
                                        const char* body, size_t body_len, int* http_status, char** response_body);
CATOS_API void catos_api_close(catos_api* api);

/* ---- wire protocol ------------------------------------------------------- */

typedef struct catos_decoder catos_decoder;

/* Encodes one frame into out (capacity cap). *written gets the frame size. */
CATOS_API catos_status catos_encode_msg(uint8_t type, const uint8_t* payload, size_t payload_len, uint8_t* out,
                                        size_t cap, size_t* written);

CATOS_API catos_status catos_decoder_new(catos_decoder** out);
CATOS_API catos_status catos_decoder_feed(catos_decoder* dec, const uint8_t* bytes, size_t n, size_t* ready);
/* Pops the oldest decoded message. payload must hold 255 bytes. Returns 1
 * if a message was written, 0 if none is ready. */
CATOS_API int catos_decoder_next(catos_decoder* dec, uint8_t* type, uint8_t* payload, size_t* payload_len);
CATOS_API catos_status catos_decoder_stats(const catos_decoder* dec, uint64_t* frames, uint64_t* bad_checksum,
                                           uint64_t* resync_count, uint64_t* malformed);
CATOS_API void catos_decoder_free(catos_decoder* dec);

/* ---- message bus ----------------------------------------------------------- */

typedef struct catos_bus catos_bus;

/* capacity 0 selects the default of 4096 messages per subscription. */
CATOS_API catos_status catos_bus_new(size_t capacity, catos_bus** out);
CATOS_API catos_status catos_bus_subscribe(catos_bus* bus, const char* topic, uint64_t* subscription);
/* Publishes a text line on topic under the given publisher name. */
CATOS_API catos_status catos_bus_publish_text(catos_bus* bus, const char* topic, const char* publisher, uint64_t seq,
                                              int64_t t_sim_ms, const char* text);
/* Up to max_n pending messages as a JSON array of
 * {topic, publisher, seq, t_sim_ms, text}. */
CATOS_API catos_status catos_bus_poll(catos_bus* bus, uint64_t subscription, size_t max_n, char** messages_json);
CATOS_API void catos_bus_free(catos_bus* bus);

#ifdef __cplusplus
}
#endif

#endif
