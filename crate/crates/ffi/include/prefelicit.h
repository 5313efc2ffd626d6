#ifndef PREFELICIT_H
#define PREFELICIT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PeStatus {
  PE_STATUS_OK = 0,
  PE_STATUS_NULL_POINTER = 1,
  PE_STATUS_INVALID_ARGUMENT = 2,
  PE_STATUS_INVALID_TABLE = 3,
  PE_STATUS_CONFLICT = 4,
  PE_STATUS_DONE = 5,
  PE_STATUS_BUFFER_TOO_SMALL = 6,
  PE_STATUS_NUMERICAL = 7,
  PE_STATUS_IO = 8,
  PE_STATUS_INTERNAL = 9,
  PE_STATUS_PANIC = 10,
} PeStatus;

/**
 * Opaque elicitation session.
 */
typedef struct PeSession PeSession;

/**
 * Opaque performance table.
 */
typedef struct PeTable PeTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread. Valid until the next
 * call on the same thread; empty after a success.
 */
const char *pe_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pe_version(void);

/**
 * Parses a CSV table (`id` column then criterion columns, all gains).
 *
 * # Safety
 * `csv` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PeStatus pe_table_from_csv(const char *csv, struct PeTable **out);

/**
 * Builds a table on unit scales from `n × m` row-major performances.
 *
 * # Safety
 * `values` must point to `n * m` doubles and `out` be a valid pointer.
 */
enum PeStatus pe_table_from_rows(const double *values,
                                 size_t n,
                                 size_t m,
                                 size_t subintervals,
                                 struct PeTable **out);

/**
 * # Safety
 * `table` must be null or a handle from this library.
 */
size_t pe_table_n_alternatives(const struct PeTable *table);

/**
 * # Safety
 * `table` must be null or a handle from this library, not used afterwards.
 */
void pe_table_free(struct PeTable *table);

/**
 * Starts a session and selects its first question. `config_json` may be
 * null for defaults; `seed` overrides any seed in it.
 *
 * # Safety
 * `table` must be a live table handle, `config_json` null or a
 * NUL-terminated string, and `out` a valid pointer.
 */
enum PeStatus pe_session_new(const struct PeTable *table,
                             size_t horizon,
                             uint64_t seed,
                             const char *config_json,
                             struct PeSession **out);

/**
 * Writes the pending question. Returns `Done` once the horizon is reached.
 *
 * # Safety
 * `session` must be a live handle; `first` and `second` valid pointers.
 */
enum PeStatus pe_session_question(const struct PeSession *session, size_t *first, size_t *second);

/**
 * Answers the pending question, refits, and selects the next one. Blocks
 * for the duration of the fit.
 *
 * # Safety
 * `session` must be a live handle.
 */
enum PeStatus pe_session_answer(struct PeSession *session, size_t preferred, size_t other);

/**
 * Number of answers recorded so far.
 *
 * # Safety
 * `session` must be null or a live handle.
 */
size_t pe_session_answered(const struct PeSession *session);

/**
 * # Safety
 * `session` must be null or a live handle.
 */
bool pe_session_is_done(const struct PeSession *session);

/**
 * Copies the posterior Dirichlet parameters. `*required` receives the
 * dimension even when the buffer is too small.
 *
 * # Safety
 * `session` must be a live handle; `out` must hold `len` doubles;
 * `required` may be null.
 */
enum PeStatus pe_session_posterior(const struct PeSession *session,
                                   double *out,
                                   size_t len,
                                   size_t *required);

/**
 * Copies the row-major `n × n` pairwise winning index matrix.
 *
 * # Safety
 * As for [`pe_session_posterior`].
 */
enum PeStatus pe_session_pwi(const struct PeSession *session,
                             double *out,
                             size_t len,
                             size_t *required);

/**
 * Full transcript as JSON. Free the result with [`pe_string_free`].
 *
 * # Safety
 * `session` must be a live handle and `out` a valid pointer.
 */
enum PeStatus pe_session_export_json(const struct PeSession *session, char **out);

/**
 * # Safety
 * `session` must be null or a live handle, not used afterwards.
 */
void pe_session_free(struct PeSession *session);

/**
 * # Safety
 * `s` must be null or a string returned by this library.
 */
void pe_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PREFELICIT_H */
