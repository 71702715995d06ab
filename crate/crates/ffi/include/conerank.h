#ifndef CONERANK_H
#define CONERANK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

typedef enum CrStatus {
  CR_STATUS_OK = 0,
  /*
   Null pointer, bad length, or otherwise unusable argument.
   */
  CR_STATUS_INVALID_ARGUMENT = 1,
  CR_STATUS_PARSE = 2,
  CR_STATUS_INVALID_MODEL = 3,
  CR_STATUS_INVALID_CONFIG = 4,
  /*
   Training or prediction produced non-finite values.
   */
  CR_STATUS_NUMERICAL = 5,
  CR_STATUS_IO = 6,
  CR_STATUS_PANIC = 7,
} CrStatus;

typedef enum CrVariant {
  CR_VARIANT_SG = 0,
  CR_VARIANT_EG = 1,
  CR_VARIANT_EG_APPROX = 2,
  CR_VARIANT_EXACT = 3,
} CrVariant;

typedef enum CrSchedule {
  CR_SCHEDULE_PER_PAIR = 0,
  CR_SCHEDULE_FULL_BATCH = 1,
} CrSchedule;

/*
 Opaque parsed dataset.
 */
typedef struct CrDataset CrDataset;

/*
 Opaque trained model.
 */
typedef struct CrModel CrModel;

/*
 Training configuration. Obtain defaults from
 `conerank_train_config_default` and override fields as needed.
 */
typedef struct CrTrainConfig {
  uintptr_t k;
  double alpha;
  double rho;
  double cap;
  double mu_sg;
  double mu_eg;
  enum CrVariant variant;
  enum CrSchedule schedule;
  /*
   Non-zero: scale pair losses by the relevance gap.
   */
  int32_t weighted;
  uintptr_t max_outer_epochs;
  uintptr_t max_inner_iters;
  double outer_tol;
  double inner_tol;
  uint64_t seed;
} CrTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *conerank_last_error(void);

/*
 Library version, a static string.
 */
const char *conerank_version(void);

/*
 Parses LETOR text into a new dataset handle.

 # Safety
 `text` must be a NUL-terminated string; `out_dataset` must be writable.
 */
enum CrStatus conerank_dataset_parse(const char *text_ptr, struct CrDataset **out_dataset);

/*
 Reads a LETOR file into a new dataset handle.

 # Safety
 `path` must be a NUL-terminated string; `out_dataset` must be writable.
 */
enum CrStatus conerank_dataset_load(const char *path, struct CrDataset **out_dataset);

/*
 # Safety
 `dataset` must be null or a handle from this library, not yet freed.
 */
void conerank_dataset_free(struct CrDataset *dataset);

/*
 Feature dimension and number of queries.

 # Safety
 `dataset` must be a live handle; outputs must be writable.
 */
enum CrStatus conerank_dataset_shape(const struct CrDataset *dataset,
                                     uintptr_t *out_dim,
                                     uintptr_t *out_queries);

/*
 Defaults for `dim` features: K = min(10, dim), alpha = 1, rho = sqrt(dim),
 c = 2 rho, SG per-pair training with weighted losses.
 */
struct CrTrainConfig conerank_train_config_default(uintptr_t dim);

/*
 Trains a model. `out_final_risk` may be null.

 # Safety
 `dataset` must be a live handle, `config` readable, `out_model` writable.
 */
enum CrStatus conerank_train(const struct CrDataset *dataset,
                             const struct CrTrainConfig *config,
                             struct CrModel **out_model,
                             double *out_final_risk);

/*
 # Safety
 `model` must be a live handle and `path` a NUL-terminated string.
 */
enum CrStatus conerank_model_save(const struct CrModel *model, const char *path);

/*
 # Safety
 `path` must be a NUL-terminated string; `out_model` must be writable.
 */
enum CrStatus conerank_model_load(const char *path, struct CrModel **out_model);

/*
 # Safety
 `model` must be null or a handle from this library, not yet freed.
 */
void conerank_model_free(struct CrModel *model);

/*
 Feature dimension N and basis order K of a model.

 # Safety
 `model` must be a live handle; outputs must be writable.
 */
enum CrStatus conerank_model_shape(const struct CrModel *model,
                                   uintptr_t *out_dim,
                                   uintptr_t *out_k);

/*
 Ranks one query of `n_docs` raw documents given row-major in `features`
 (`n_docs * dim` values, `dim` equal to the model's). Writes document
 indices best-first to `out_order` and per-document votes to `out_votes`
 (may be null); both hold `n_docs` entries.

 # Safety
 Pointers must be valid for the stated lengths.
 */
enum CrStatus conerank_rank(const struct CrModel *model,
                            const double *features,
                            uintptr_t n_docs,
                            uintptr_t dim,
                            uintptr_t *out_order,
                            uint32_t *out_votes);

/*
 Average precision of labels listed in ranked order (label > 0 is
 relevant). Returns NaN if `labels` is null with `n > 0`.

 # Safety
 `labels` must hold `n` values.
 */
double conerank_average_precision(const uint32_t *labels, uintptr_t n);

/*
 NDCG@k of labels listed in ranked order. Returns NaN on a null pointer
 with `n > 0`.

 # Safety
 `labels` must hold `n` values.
 */
double conerank_ndcg_at_k(const uint32_t *labels, uintptr_t n, uintptr_t k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONERANK_H */
