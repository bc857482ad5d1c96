#ifndef NERBIAS_H
#define NERBIAS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum NbStatus {
  NB_STATUS_OK = 0,
  NB_STATUS_NULL_ARGUMENT = 1,
  NB_STATUS_INVALID_UTF8 = 2,
  NB_STATUS_VALIDATION = 3,
  NB_STATUS_PARSE = 4,
  NB_STATUS_IO = 5,
  NB_STATUS_BACKEND = 6,
  NB_STATUS_OUT_OF_RANGE = 7,
  NB_STATUS_PANIC = 8,
} NbStatus;

// Opaque trained CRF model.
typedef struct NbModel NbModel;

// Opaque name registry.
typedef struct NbRegistry NbRegistry;

// Summary of a confidence sample. Percentiles interpolate linearly,
// `std` is the population standard deviation.
typedef struct NbConfidenceStats {
  size_t n;
  double min;
  double p25;
  double median;
  double mean;
  double std;
  double max;
} NbConfidenceStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *nb_last_error(void);

// # Safety
// `s` must be null or a string returned by this library.
void nb_string_free(char *s);

// # Safety
// `out` must be a valid pointer.
enum NbStatus nb_registry_builtin(struct NbRegistry **out);

// Loads a `Name,CATEGORY` registry file.
//
// # Safety
// `path` must be a NUL-terminated string and `out` a valid pointer.
enum NbStatus nb_registry_load(const char *path, struct NbRegistry **out);

// Number of audited names, excluding the out-of-vocabulary baseline.
//
// # Safety
// `reg` must be a live registry handle or null.
size_t nb_registry_len(const struct NbRegistry *reg);

// Surface form and category code of entry `index`.
//
// # Safety
// `reg` must be a live registry handle; `surface` and `category` valid pointers.
enum NbStatus nb_registry_entry(const struct NbRegistry *reg,
                                size_t index,
                                char **surface,
                                char **category);

// Hex SHA-256 digest of the registry contents.
//
// # Safety
// `reg` must be a live registry handle and `out` a valid pointer.
enum NbStatus nb_registry_digest(const struct NbRegistry *reg, char **out);

// # Safety
// `reg` must be null or a handle from this library, freed at most once.
void nb_registry_free(struct NbRegistry *reg);

// Strips combining marks after canonical decomposition.
//
// # Safety
// `s` must be a NUL-terminated string and `out` a valid pointer.
enum NbStatus nb_deaccent(const char *s, char **out);

// Loads a saved model. `embeddings` may be null to use the path recorded
// at training time.
//
// # Safety
// `path` must be a NUL-terminated string, `embeddings` null or one, and
// `out` a valid pointer.
enum NbStatus nb_model_load(const char *path, const char *embeddings, struct NbModel **out);

// # Safety
// `model` must be null or a handle from this library, freed at most once.
void nb_model_free(struct NbModel *model);

// Tags `n` tokens and writes `{"tags":[...],"confidences":[...]}` to `out`,
// with one confidence per predicted entity.
//
// # Safety
// `model` must be a live handle, `tokens` point to `n` NUL-terminated
// strings, and `out` be a valid pointer.
enum NbStatus nb_model_tag_json(const struct NbModel *model,
                                const char *const *tokens,
                                size_t n,
                                char **out);

// Posterior probability that tokens `[start, end)` form exactly one entity
// of type `entity_type`.
//
// # Safety
// `model` must be a live handle, `tokens` point to `n` NUL-terminated
// strings, `entity_type` be NUL-terminated, and `out` a valid pointer.
enum NbStatus nb_model_entity_confidence(const struct NbModel *model,
                                         const char *const *tokens,
                                         size_t n,
                                         size_t start,
                                         size_t end,
                                         const char *entity_type,
                                         double *out);

// Log partition function over all legal tag sequences.
//
// # Safety
// `model` must be a live handle, `tokens` point to `n` NUL-terminated
// strings, and `out` be a valid pointer.
enum NbStatus nb_model_log_partition(const struct NbModel *model,
                                     const char *const *tokens,
                                     size_t n,
                                     double *out);

// # Safety
// `values` must point to `n` doubles and `out` be a valid pointer.
enum NbStatus nb_confidence_stats(const double *values, size_t n, struct NbConfidenceStats *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NERBIAS_H */
