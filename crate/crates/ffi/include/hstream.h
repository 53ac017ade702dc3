#ifndef HSTREAM_H
#define HSTREAM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HsAggregation {
  HS_AGGREGATION_MEAN = 0,
  HS_AGGREGATION_MIN = 1,
  HS_AGGREGATION_MAX = 2,
} HsAggregation;

/*
 Result codes. Zero is success.
 */
typedef enum HsStatus {
  HS_STATUS_OK = 0,
  HS_STATUS_NULL_POINTER = 1,
  HS_STATUS_INVALID_UTF8 = 2,
  HS_STATUS_PARSE_ERROR = 3,
  HS_STATUS_STORE_ERROR = 4,
  HS_STATUS_PLAN_ERROR = 5,
  HS_STATUS_RUNTIME_ERROR = 6,
  HS_STATUS_INVALID_ARGUMENT = 7,
  HS_STATUS_BUFFER_TOO_SMALL = 8,
  HS_STATUS_PANIC = 9,
} HsStatus;

typedef enum HsTimeUnit {
  HS_TIME_UNIT_SECONDS = 0,
  HS_TIME_UNIT_MINUTES = 1,
  HS_TIME_UNIT_HOURS = 2,
  HS_TIME_UNIT_DAYS = 3,
} HsTimeUnit;

/*
 A parsed query.
 */
typedef struct HsQuery HsQuery;

/*
 An open historic store.
 */
typedef struct HsStore HsStore;

/*
 One bucket of a grouped historic query. `has_result` is 0 for an
 empty bucket, in which case `result` is NaN.
 */
typedef struct HsAggregateRow {
  uint64_t bucket_start_ms;
  double count;
  double result;
  uint8_t has_result;
} HsAggregateRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or NULL. The pointer
 stays valid until the next call on the same thread.
 */
const char *hs_last_error(void);

/*
 Releases a string returned by this library. NULL is ignored.

 # Safety
 `s` must come from this library and not have been freed.
 */
void hs_string_free(char *s);

/*
 Parses one query.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HsStatus hs_query_parse(const char *text, struct HsQuery **out);

/*
 Canonical single-line rendering of a parsed query.

 # Safety
 `query` must come from [`hs_query_parse`]; `out` must be valid.
 */
enum HsStatus hs_query_render(const struct HsQuery *query, char **out);

/*
 The parsed query as JSON.

 # Safety
 `query` must come from [`hs_query_parse`]; `out` must be valid.
 */
enum HsStatus hs_query_to_json(const struct HsQuery *query, char **out);

/*
 # Safety
 `query` must come from [`hs_query_parse`] or be NULL.
 */
void hs_query_free(struct HsQuery *query);

/*
 Opens (creating if needed) a historic store rooted at `path`.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum HsStatus hs_store_open(const char *path, struct HsStore **out);

/*
 # Safety
 `store` must come from [`hs_store_open`] or be NULL.
 */
void hs_store_free(struct HsStore *store);

/*
 Ingests NDJSON tuples into a series, registering it when new. Any
 malformed line rejects the whole batch. `added` receives the number of
 tuples stored after de-duplication.

 # Safety
 String arguments must be NUL-terminated; `store` and `added` valid.
 */
enum HsStatus hs_store_ingest_ndjson(const struct HsStore *store,
                                     const char *provider,
                                     const char *database,
                                     const char *series,
                                     const char *ndjson,
                                     uintptr_t *added);

/*
 Grouped aggregation over `[start_ms, end_ms)`. Rows are written to
 `rows` (capacity `cap`); `len` always receives the total row count, and
 `HS_STATUS_BUFFER_TOO_SMALL` is returned when it exceeds `cap`. Pass
 `cap = 0` to size the buffer first.

 # Safety
 String arguments must be NUL-terminated; `rows` must hold `cap` rows.
 */
enum HsStatus hs_store_query_to_historic(const struct HsStore *store,
                                         const char *provider,
                                         const char *database,
                                         const char *series,
                                         enum HsAggregation function,
                                         const char *attribute,
                                         uint64_t start_ms,
                                         uint64_t end_ms,
                                         uint64_t group_by_number,
                                         enum HsTimeUnit group_by_unit,
                                         struct HsAggregateRow *rows,
                                         uintptr_t cap,
                                         uintptr_t *len);

/*
 Plans queries (blank-line separated) and returns the plan as JSON.
 `store` may be NULL for stream-only queries.

 # Safety
 `queries` must be NUL-terminated; `store` valid or NULL; `out` valid.
 */
enum HsStatus hs_plan_explain(const struct HsStore *store, const char *queries, char **out);

/*
 Runs queries over an NDJSON log on a virtual clock starting at the
 log's first timestamp and returns the result lines as one NDJSON
 string. `duration_ms = 0` runs until the last logged timestamp.

 # Safety
 String arguments must be NUL-terminated; `store` valid or NULL.
 */
enum HsStatus hs_run_query_log(const struct HsStore *store,
                               const char *queries,
                               const char *log_path,
                               uint64_t duration_ms,
                               char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSTREAM_H */
