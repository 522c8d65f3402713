/* gwardar - SDN simulator and trajectory-based intrusion protection engine.
 *
 * C API over the engine: opaque session handles, integer error codes, and
 * JSON strings for structured data. Every function that can fail returns a
 * gw_status and, when err/err_len are given, writes a NUL-terminated message
 * into the caller's buffer. Strings returned as char* are heap-allocated and
 * must be released with gw_free().
 */
#ifndef GWARDAR_H
#define GWARDAR_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct gw_session gw_session;

typedef enum gw_status {
  GW_OK = 0,
  GW_ERR_INVALID_ARGUMENT = 1,
  GW_ERR_PARSE = 2,
  GW_ERR_IO = 3,
  GW_ERR_UNKNOWN_DEVICE = 4,
  GW_ERR_UNKNOWN_INGRESS = 5,
  GW_ERR_DISCONNECTED_TOPOLOGY = 6,
  GW_ERR_EMPTY_STORE = 7,
  GW_ERR_DUPLICATE_PACKET_ID = 8,
  GW_ERR_NO_TRUSTED_SNAPSHOT = 9,
  GW_ERR_PARTIAL_RESTORE = 10,
  GW_ERR_BAD_STATE = 11,
  GW_ERR_UNKNOWN = 12
} gw_status;

const char* gw_version(void);
const char* gw_status_name(gw_status status);

/* Session lifecycle. config_json: simulation config document (pass "{}" for
 * defaults). */
gw_session* gw_session_create(const char* config_json, char* err, size_t err_len);
gw_session* gw_session_load(const char* state_path, char* err, size_t err_len);
gw_status gw_session_save(gw_session* s, const char* state_path, char* err, size_t err_len);
void gw_session_destroy(gw_session* s);

/* Runs one experiment. scenario_json: scenario document, or NULL for an
 * honest baseline run. out_dir: where metrics CSVs and report.json go; NULL
 * to skip file output. */
gw_status gw_run_experiment(gw_session* s, const char* scenario_json, const char* out_dir,
                            char* err, size_t err_len);

/* JSON results; free with gw_free. NULL on error. */
char* gw_report(gw_session* s, char* err, size_t err_len);
char* gw_verify_replica(gw_session* s, char* err, size_t err_len);
char* gw_restore(gw_session* s, int force, char* err, size_t err_len);
char* gw_release_takeover(gw_session* s, char* err, size_t err_len);

void gw_free(char* ptr);

#ifdef __cplusplus
}
#endif

#endif /* GWARDAR_H */
