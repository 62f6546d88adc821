#ifndef PARKBARRIER_H
#define PARKBARRIER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PbStatus {
  PB_STATUS_OK = 0,
  PB_STATUS_NULL_POINTER = 1,
  PB_STATUS_INVALID_UTF8 = 2,
  PB_STATUS_INVALID_ARGUMENT = 3,
  PB_STATUS_BUFFER_TOO_SMALL = 4,
  PB_STATUS_ENCODE_FAILED = 5,
  PB_STATUS_SCHEMA_VIOLATION = 6,
  PB_STATUS_UNKNOWN_SPACE = 7,
  PB_STATUS_UNKNOWN_ALARM = 8,
  PB_STATUS_ILLEGAL_TRANSITION = 9,
  PB_STATUS_INTERNAL = 10,
} PbStatus;

/**
 * In-process cloud service without persistence.
 */
typedef struct PbCloud PbCloud;

/**
 * Streaming frame decoder.
 */
typedef struct PbDecoder PbDecoder;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static description of a status code. Never NULL; do not free.
 */
const char *pb_status_str(enum PbStatus status);

/**
 * Detail for the last failing call on this thread, or NULL. The caller
 * frees the result with `pb_string_free`.
 */
char *pb_last_error_message(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library.
 */
void pb_string_free(char *s);

/**
 * CRC16-CCITT-FALSE of `len` bytes.
 *
 * # Safety
 * `data` must point to `len` readable bytes, or be NULL with `len == 0`.
 */
uint16_t pb_crc16(const uint8_t *data, size_t len);

/**
 * Detection head output channels for `classes` classes.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PbStatus pb_head_filters(uint32_t classes, uint32_t *out);

/**
 * Fractional savings of `avg_w` against an always-on draw of
 * `always_on_w`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum PbStatus pb_savings_vs_always_on(double avg_w, double always_on_w, double *out);

/**
 * Frame a JSON telemetry message into `out`. On `BufferTooSmall`,
 * `written` holds the required size.
 *
 * # Safety
 * `json` must be a NUL-terminated string, `out` must hold `cap` writable
 * bytes, `written` must be valid.
 */
enum PbStatus pb_encode_json(const char *json,
                             size_t max_payload,
                             uint8_t *out,
                             size_t cap,
                             size_t *written);

/**
 * Returns NULL if `max_payload` is zero.
 */
struct PbDecoder *pb_decoder_new(size_t max_payload);

/**
 * # Safety
 * `dec` must be NULL or a handle from `pb_decoder_new`, freed once.
 */
void pb_decoder_free(struct PbDecoder *dec);

/**
 * Feed bytes. `messages_json` receives a JSON array of every complete
 * message; `errors` the number of decode errors in this chunk. Partial
 * frames are kept for the next call.
 *
 * # Safety
 * `dec` must be a live handle, `data` must hold `len` readable bytes and
 * the out-pointers must be valid.
 */
enum PbStatus pb_decoder_feed(struct PbDecoder *dec,
                              const uint8_t *data,
                              size_t len,
                              char **messages_json,
                              size_t *errors);

/**
 * Bytes buffered as a possible partial frame.
 *
 * # Safety
 * `dec` must be NULL or a live handle.
 */
size_t pb_decoder_pending(const struct PbDecoder *dec);

/**
 * Create a service from TOML configuration text, or defaults when
 * `config_toml` is NULL.
 *
 * # Safety
 * `config_toml` must be NULL or NUL-terminated; `out` must be valid.
 */
enum PbStatus pb_cloud_new(const char *config_toml, struct PbCloud **out);

/**
 * # Safety
 * `cloud` must be NULL or a handle from `pb_cloud_new`, freed once.
 */
void pb_cloud_free(struct PbCloud *cloud);

/**
 * Submit one JSON message received at `now_ms`. `applied` is false for
 * duplicates and stale reports.
 *
 * # Safety
 * `cloud` must be a live handle, `json` NUL-terminated, `applied` valid.
 */
enum PbStatus pb_cloud_submit(struct PbCloud *cloud,
                              const char *json,
                              uint64_t now_ms,
                              bool *applied);

/**
 * Run health, persistence-window and illegal-parking checks at `now_ms`.
 * Returns the number of effects produced, or a negative value on a NULL
 * handle.
 *
 * # Safety
 * `cloud` must be NULL or a live handle.
 */
int64_t pb_cloud_sweep(struct PbCloud *cloud, uint64_t now_ms);

/**
 * # Safety
 * `cloud` must be a live handle; `id` and `operator` NUL-terminated.
 */
enum PbStatus pb_cloud_alarm_ack(struct PbCloud *cloud,
                                 const char *id,
                                 const char *operator_,
                                 uint64_t now_ms);

/**
 * # Safety
 * `cloud` must be a live handle; `id` and `operator` NUL-terminated.
 */
enum PbStatus pb_cloud_alarm_resolve(struct PbCloud *cloud,
                                     const char *id,
                                     const char *operator_,
                                     uint64_t now_ms);

/**
 * Full business state as JSON.
 *
 * # Safety
 * `cloud` must be a live handle and `out` valid.
 */
enum PbStatus pb_cloud_state_json(const struct PbCloud *cloud, char **out);

/**
 * Metrics snapshot as JSON.
 *
 * # Safety
 * `cloud` must be a live handle and `out` valid.
 */
enum PbStatus pb_cloud_metrics_json(const struct PbCloud *cloud, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PARKBARRIER_H */
