#ifndef DEFI_COMPOSE_H
#define DEFI_COMPOSE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DcStatus {
  DC_STATUS_OK = 0,
  DC_STATUS_NULL_POINTER = 1,
  DC_STATUS_INVALID_UTF8 = 2,
  DC_STATUS_IO = 3,
  DC_STATUS_PARSE = 4,
  DC_STATUS_INVALID_ARGUMENT = 5,
  DC_STATUS_NOT_FOUND = 6,
  DC_STATUS_INTERNAL = 7,
} DcStatus;

/**
 * Distinct building blocks from one extraction, ordered by hash.
 */
typedef struct DcBlockSet DcBlockSet;

/**
 * Loaded seeds, contract registry and extended seed set.
 */
typedef struct DcContext DcContext;

typedef struct DcPowerLawFit {
  double alpha;
  uint64_t k_min;
  double ks_distance;
  size_t n_tail;
  size_t n_total;
} DcPowerLawFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call on the same thread.
 */
const char *dc_last_error_message(void);

/**
 * Hashes `n` block entries into the 32 bytes at `out`.
 *
 * `labels` holds `n` C strings in the canonical label form, `methods`
 * holds `n` 4-byte selectors and `has_method[i] == 0` marks a missing one.
 *
 * # Safety
 * All arrays must hold `n` valid elements; `out` must hold 32 bytes.
 */
enum DcStatus dc_block_hash(const char *const *labels,
                            const uint32_t *outdegrees,
                            const uint8_t (*methods)[4],
                            const uint8_t *has_method,
                            size_t n,
                            uint8_t *out);

/**
 * Loads seeds, contract creations and an optional ERC20 address list
 * (`erc20_path` may be null) and extends the seeds by closure.
 *
 * # Safety
 * Paths must be null or NUL-terminated; `out` must be writable.
 */
enum DcStatus dc_context_open(const char *seed_path,
                              const char *creation_path,
                              const char *erc20_path,
                              struct DcContext **out);

/**
 * Extracts building blocks from a trace CSV, pruning failed subtrees.
 *
 * # Safety
 * `ctx` must come from [`dc_context_open`]; `out` must be writable.
 */
enum DcStatus dc_context_extract(const struct DcContext *ctx,
                                 const char *traces_path,
                                 struct DcBlockSet **out);

/**
 * # Safety
 * `set` must be null or come from [`dc_context_extract`].
 */
size_t dc_blockset_len(const struct DcBlockSet *set);

/**
 * Copies the 32-byte hash of block `i` to `out`.
 *
 * # Safety
 * `set` must come from [`dc_context_extract`]; `out` must hold 32 bytes.
 */
enum DcStatus dc_blockset_hash(const struct DcBlockSet *set, size_t i, uint8_t *out);

/**
 * Root protocol of block `i`, owned by the set; null when out of range.
 *
 * # Safety
 * `set` must be null or come from [`dc_context_extract`].
 */
const char *dc_blockset_root_protocol(const struct DcBlockSet *set, size_t i);

/**
 * Number of times block `i` occurred; 0 when out of range.
 *
 * # Safety
 * `set` must be null or come from [`dc_context_extract`].
 */
uint64_t dc_blockset_occurrences(const struct DcBlockSet *set, size_t i);

/**
 * # Safety
 * `set` must be null or come from [`dc_context_extract`], freed once.
 */
void dc_blockset_free(struct DcBlockSet *set);

/**
 * # Safety
 * `ctx` must be null or come from [`dc_context_open`], freed once.
 */
void dc_context_free(struct DcContext *ctx);

/**
 * Fits a discrete power law to `n` degrees.
 *
 * # Safety
 * `degrees` must hold `n` values; `out` must be writable.
 */
enum DcStatus dc_powerlaw_fit(const uint64_t *degrees, size_t n, struct DcPowerLawFit *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEFI_COMPOSE_H */
