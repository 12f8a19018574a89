#ifndef PULSE_AFFECT_H
#define PULSE_AFFECT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of values written by [`pa_features`].
#define PA_FEATURE_COUNT 11

typedef enum PaStatus {
  PA_STATUS_OK = 0,
  PA_STATUS_NULL_POINTER = 1,
  PA_STATUS_INVALID_ARGUMENT = 2,
  PA_STATUS_DATA = 3,
  PA_STATUS_NUMERICAL = 4,
  PA_STATUS_PANIC = 5,
} PaStatus;

typedef enum PaValence {
  PA_VALENCE_LOW = 0,
  PA_VALENCE_NEUTRAL = 1,
  PA_VALENCE_HIGH = 2,
} PaValence;

typedef enum PaOutcome {
  PA_OUTCOME_LOW = 0,
  PA_OUTCOME_HIGH = 1,
  PA_OUTCOME_ABSTAIN = 2,
} PaOutcome;

// A loaded dataset.
typedef struct PaDataset PaDataset;

// A trained model loaded from a checkpoint.
typedef struct PaModel PaModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *pa_version(void);

// Message of the last failure on this thread, or null if none. The pointer
// stays valid until the next failing call on the same thread.
const char *pa_last_error_message(void);

// Loads a dataset file.
//
// # Safety
// `path` must be a NUL-terminated string and `out_dataset` a valid pointer.
enum PaStatus pa_dataset_load(const char *path, struct PaDataset **out_dataset);

// # Safety
// `dataset` must come from [`pa_dataset_load`] and `out_len` be valid.
enum PaStatus pa_dataset_len(const struct PaDataset *dataset, size_t *out_len);

// Copies up to `capacity` intervals of sample `index` into `buffer` and
// reports the full length in `out_len`. Pass a null buffer to query the
// length only.
//
// # Safety
// `buffer` must hold `capacity` doubles when non-null.
enum PaStatus pa_dataset_sample_ibis(const struct PaDataset *dataset,
                                     size_t index,
                                     double *buffer,
                                     size_t capacity,
                                     size_t *out_len);

// Binary valence of sample `index`.
//
// # Safety
// `dataset` must be a live handle and `out_valence` valid.
enum PaStatus pa_dataset_sample_valence(const struct PaDataset *dataset,
                                        size_t index,
                                        enum PaValence *out_valence);

// # Safety
// `dataset` must come from [`pa_dataset_load`] or be null.
void pa_dataset_free(struct PaDataset *dataset);

// Writes the [`PA_FEATURE_COUNT`] HRV features of an interval series (in
// seconds) to `out_features`, in the order hf, lf, vlf, lf/hf, mean,
// median, sdsd, nn20, pnn20, rmssd, multiscale entropy.
//
// # Safety
// `ibis` must hold `len` doubles; `out_features` must hold
// [`PA_FEATURE_COUNT`].
enum PaStatus pa_features(const double *ibis, size_t len, double *out_features);

// Loads a model checkpoint.
//
// # Safety
// `path` must be a NUL-terminated string and `out_model` valid.
enum PaStatus pa_model_load(const char *path, struct PaModel **out_model);

// Input length the model was trained with; longer series are cut and
// shorter ones zero-padded.
//
// # Safety
// `model` must be a live handle and `out_len` valid.
enum PaStatus pa_model_input_len(const struct PaModel *model, size_t *out_len);

// Runs `n_passes` stochastic forward passes on an interval series and
// writes the fraction of passes above the valence midpoint.
//
// # Safety
// `ibis` must hold `len` doubles; `model` must be a live handle.
enum PaStatus pa_model_mc_predict(const struct PaModel *model,
                                  const double *ibis,
                                  size_t len,
                                  size_t n_passes,
                                  uint64_t seed,
                                  double *out_mass_above);

// # Safety
// `model` must come from [`pa_model_load`] or be null.
void pa_model_free(struct PaModel *model);

// Applies the confidence rule to a posterior mass above the midpoint.
//
// # Safety
// `out_outcome` must be valid.
enum PaStatus pa_decide(double mass_above, double alpha, enum PaOutcome *out_outcome);

// F1 of uniform random guessing given the class counts.
//
// # Safety
// `out_f1` must be valid.
enum PaStatus pa_chance_f1(size_t n_low, size_t n_high, double *out_f1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PULSE_AFFECT_H */
