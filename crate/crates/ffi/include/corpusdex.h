#ifndef CORPUSDEX_H
#define CORPUSDEX_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CdxStatus {
  CDX_STATUS_OK = 0,
  CDX_STATUS_NULL_ARGUMENT = 1,
  CDX_STATUS_INVALID_UTF8 = 2,
  CDX_STATUS_INVALID_QUERY = 3,
  CDX_STATUS_NOT_FOUND = 4,
  CDX_STATUS_ALREADY_EXISTS = 5,
  CDX_STATUS_IO = 6,
  CDX_STATUS_CORRUPT = 7,
  CDX_STATUS_INVALID_PARAMS = 8,
  CDX_STATUS_INDEX_CLOSED = 9,
  CDX_STATUS_STORAGE_FULL = 10,
  CDX_STATUS_PANIC = 99,
} CdxStatus;

/**
 * An open index.
 */
typedef struct CdxIndex CdxIndex;

typedef struct CdxBulkParams {
  size_t worker_count;
  size_t chunk_size;
  uint64_t max_chunk_bytes;
  size_t queue_size;
} CdxBulkParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an empty on-disk index with the default analyzer.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CdxStatus cdx_index_create(const char *path, struct CdxIndex **out);

/**
 * Opens an existing on-disk index.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum CdxStatus cdx_index_open(const char *path, struct CdxIndex **out);

/**
 * Creates an index held in memory only.
 *
 * # Safety
 * `out` must be writable.
 */
enum CdxStatus cdx_index_in_memory(struct CdxIndex **out);

/**
 * Adds one document. `external_id` and `language` may be null. On success
 * `out_doc_id` receives the new id, or the id of the earlier identical
 * document when `dedup` is set and `out_skipped` is set to true.
 *
 * # Safety
 * Pointers must be valid; output pointers may be null.
 */
enum CdxStatus cdx_index_add(const struct CdxIndex *index,
                             const char *text,
                             const char *external_id,
                             const char *language,
                             bool dedup,
                             uint64_t *out_doc_id,
                             bool *out_skipped);

/**
 * Makes every added document searchable.
 *
 * # Safety
 * `index` must be a live handle.
 */
enum CdxStatus cdx_index_refresh(const struct CdxIndex *index);

/**
 * Number of searchable documents.
 *
 * # Safety
 * `index` must be a live handle; `out` must be writable.
 */
enum CdxStatus cdx_index_doc_count(const struct CdxIndex *index, uint64_t *out);

/**
 * Flushes pending documents and closes the index, then frees the handle.
 * Null is ignored.
 *
 * # Safety
 * `index` must be null or a handle not yet freed.
 */
void cdx_index_free(struct CdxIndex *index);

/**
 * Number of documents matching a JSON query such as
 * `{"match_phrase": {"query": "climate change", "slop": 1}}`.
 *
 * # Safety
 * `index` must be a live handle, `query_json` NUL-terminated, `out` writable.
 */
enum CdxStatus cdx_count_json(const struct CdxIndex *index, const char *query_json, uint64_t *out);

/**
 * Matching documents as a JSON string `{"total": n, "hits": [...]}`, to be
 * released with [`cdx_string_free`].
 *
 * # Safety
 * `index` must be a live handle, `query_json` NUL-terminated, `out` writable.
 */
enum CdxStatus cdx_search_json(const struct CdxIndex *index,
                               const char *query_json,
                               size_t limit,
                               char **out);

/**
 * Documents containing `phrase` with at most `slop` intervening tokens.
 *
 * # Safety
 * `index` must be a live handle, `phrase` NUL-terminated, `out` writable.
 */
enum CdxStatus cdx_phrase_count(const struct CdxIndex *index,
                                const char *phrase,
                                uint32_t slop,
                                uint64_t *out);

/**
 * Total phrase occurrences (distinct match start positions) over all
 * documents.
 *
 * # Safety
 * `index` must be a live handle, `phrase` NUL-terminated, `out` writable.
 */
enum CdxStatus cdx_phrase_occurrences(const struct CdxIndex *index,
                                      const char *phrase,
                                      uint32_t slop,
                                      uint64_t *out);

/**
 * Shard ordinal of a routing key.
 *
 * # Safety
 * `key` must be NUL-terminated; `out` writable.
 */
enum CdxStatus cdx_route(const char *key, size_t n_shards, size_t *out);

/**
 * Documents per second achievable when each costs two storage round trips
 * of `latency_secs`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CdxStatus cdx_throughput_ceiling(double latency_secs, double *out);

/**
 * Plans bulk ingestion tunables.
 *
 * # Safety
 * `out` must be writable.
 */
enum CdxStatus cdx_plan_bulk_params(uint64_t avg_doc_size,
                                    uint64_t max_chunk_bytes,
                                    size_t cores,
                                    uint64_t ram_budget,
                                    struct CdxBulkParams *out);

/**
 * Message of the last failed call on this thread, or null. Release with
 * [`cdx_string_free`].
 */
char *cdx_last_error_message(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string from this library not yet freed.
 */
void cdx_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CORPUSDEX_H */
