/*
 * malsum C API.
 *
 * Opaque handles own C++ objects; every call returns a malsum_status and
 * never throws. On failure malsum_last_error() holds a message for the
 * calling thread. Strings returned through char** are heap copies released
 * with malsum_free().
 */
#ifndef MALSUM_MALSUM_H
#define MALSUM_MALSUM_H

#include <stddef.h>

#if defined(_WIN32)
#  if defined(MALSUM_BUILDING_LIBRARY)
#    define MALSUM_API __declspec(dllexport)
#  else
#    define MALSUM_API __declspec(dllimport)
#  endif
#else
#  define MALSUM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum malsum_status {
  MALSUM_OK = 0,
  MALSUM_PARTIAL_FAILURE = 1,
  MALSUM_ERR_INVALID_ARGUMENT = 2,
  MALSUM_ERR_CONFIG = 3,
  MALSUM_ERR_IO = 4,
  MALSUM_ERR_MALFORMED_REPORT = 5,
  MALSUM_ERR_BUDGET_TOO_SMALL = 6,
  MALSUM_ERR_ENDPOINT_UNREACHABLE = 7,
  MALSUM_ERR_AUTH_FAILED = 8,
  MALSUM_ERR_CONTEXT_OVERFLOW = 9,
  MALSUM_ERR_RETRIES_EXHAUSTED = 10,
  MALSUM_ERR_BAD_RESPONSE = 11,
  MALSUM_ERR_REQUEST_REJECTED = 12,
  MALSUM_ERR_EMPTY_COMPLETION = 13,
  MALSUM_ERR_EMPTY_INPUT = 14,
  MALSUM_ERR_DUPLICATE_SAMPLE = 15,
  MALSUM_ERR_MALFORMED_LINE = 16,
  MALSUM_ERR_NO_RECORDS = 17,
  MALSUM_ERR_INTERNAL = 18
} malsum_status;

typedef struct malsum_config malsum_config;
typedef struct malsum_batch malsum_batch;

MALSUM_API const char* malsum_version(void);
MALSUM_API const char* malsum_status_name(malsum_status status);
MALSUM_API const char* malsum_last_error(void);
MALSUM_API void malsum_free(char* s);

/* Configuration ---------------------------------------------------------- */

MALSUM_API malsum_status malsum_config_default(malsum_config** out);
MALSUM_API malsum_status malsum_config_load(const char* path, malsum_config** out);
MALSUM_API malsum_status malsum_config_parse(const char* json_text, malsum_config** out);
MALSUM_API void malsum_config_free(malsum_config* cfg);

/* Keys: output_dir, reports_dir, ground_truth, parallelism. */
MALSUM_API malsum_status malsum_config_set(malsum_config* cfg, const char* key,
                                           const char* value);
MALSUM_API malsum_status malsum_config_set_offline(malsum_config* cfg, int offline);
MALSUM_API malsum_status malsum_config_validate(const malsum_config* cfg);
MALSUM_API malsum_status malsum_config_to_json(const malsum_config* cfg, char** out);

MALSUM_API malsum_status malsum_default_template_json(char** out);

/* Pipeline ---------------------------------------------------------------- */

/* model_name may be NULL (first profile). as_json selects the summary JSON
 * over the markdown rendering. */
MALSUM_API malsum_status malsum_summarize_file(const malsum_config* cfg,
                                               const char* report_path,
                                               const char* model_name, int as_json,
                                               char** out);

/* Writes the MetricVector (plus flags/failures) as JSON. */
MALSUM_API malsum_status malsum_evaluate_texts(const malsum_config* cfg,
                                               const char* generated,
                                               const char* reference, char** out);

/* Uses the config's reports_dir and ground_truth. model_filter may be NULL.
 * Returns MALSUM_OK or MALSUM_PARTIAL_FAILURE with *out set, or an error
 * status with *out left NULL. */
MALSUM_API malsum_status malsum_batch_run(const malsum_config* cfg, const char* model_filter,
                                          malsum_batch** out);
MALSUM_API size_t malsum_batch_record_count(const malsum_batch* batch);
MALSUM_API size_t malsum_batch_error_count(const malsum_batch* batch);
MALSUM_API size_t malsum_batch_skipped_count(const malsum_batch* batch);
MALSUM_API const char* malsum_batch_records_path(const malsum_batch* batch);
MALSUM_API const char* malsum_batch_table_path(const malsum_batch* batch);
/* markdown != 0 selects the markdown style with bold column maxima. */
MALSUM_API malsum_status malsum_batch_table(const malsum_batch* batch, int markdown,
                                            char** out);
/* Newline-separated warnings collected during the run. */
MALSUM_API const char* malsum_batch_warnings(const malsum_batch* batch);
MALSUM_API void malsum_batch_free(malsum_batch* batch);

#ifdef __cplusplus
}
#endif

#endif /* MALSUM_MALSUM_H */
