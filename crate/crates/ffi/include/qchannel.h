#ifndef QCHANNEL_H
#define QCHANNEL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Floquet verdict codes written by [`qc_floquet_check`].
 */
typedef enum QcFloquetVerdict {
  QC_FLOQUET_VERDICT_EXISTS = 0,
  QC_FLOQUET_VERDICT_ABSENT = 1,
  QC_FLOQUET_VERDICT_INCONCLUSIVE = 2,
} QcFloquetVerdict;

/**
 * Result code of every fallible call.
 */
typedef enum QcStatus {
  QC_STATUS_OK = 0,
  QC_STATUS_NULL_POINTER = 1,
  QC_STATUS_CONFIG = 2,
  QC_STATUS_DATA = 3,
  QC_STATUS_DIVERGED = 4,
  QC_STATUS_INVALID_ARGUMENT = 5,
  QC_STATUS_NUMERICAL = 6,
  QC_STATUS_IO = 7,
  QC_STATUS_PANIC = 8,
} QcStatus;

/**
 * A collection of coherence-vector trajectories.
 */
typedef struct QcDataset QcDataset;

/**
 * A Stinespring channel model.
 */
typedef struct QcModel QcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *qc_last_error(void);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void qc_string_free(char *s);

/**
 * Random model with generator entries of size `scale`, seeded
 * deterministically.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum QcStatus qc_model_random(uintptr_t sys_dim,
                              uintptr_t env_dim,
                              double scale,
                              uint64_t seed,
                              struct QcModel **out);

/**
 * Model from its `len` real parameters.
 *
 * # Safety
 * `params` must point to `len` doubles and `out` must be valid.
 */
enum QcStatus qc_model_from_params(uintptr_t sys_dim,
                                   uintptr_t env_dim,
                                   const double *params,
                                   uintptr_t len,
                                   struct QcModel **out);

/**
 * Parses a model file.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` valid.
 */
enum QcStatus qc_model_from_json(const char *json, struct QcModel **out);

/**
 * Serializes a model; free the result with [`qc_string_free`].
 *
 * # Safety
 * `model` must be a live handle and `out` valid.
 */
enum QcStatus qc_model_to_json(const struct QcModel *model, char **out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void qc_model_free(struct QcModel *model);

/**
 * System dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t qc_model_sys_dim(const struct QcModel *model);

/**
 * Environment dimension, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t qc_model_env_dim(const struct QcModel *model);

/**
 * Number of real parameters, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
uintptr_t qc_model_param_count(const struct QcModel *model);

/**
 * Copies the parameters into `buf`, which must hold exactly
 * [`qc_model_param_count`] values.
 *
 * # Safety
 * `model` must be a live handle and `buf` point to `len` doubles.
 */
enum QcStatus qc_model_params(const struct QcModel *model, double *buf, uintptr_t len);

/**
 * Pauli transfer matrix, `d² × d²` row-major.
 *
 * # Safety
 * `model` must be a live handle and `buf` point to `len` doubles.
 */
enum QcStatus qc_model_transfer_matrix(const struct QcModel *model, double *buf, uintptr_t len);

/**
 * Applies the channel `steps` times to the coherence vector `input`
 * (length `d²`, leading entry 1) and writes the result to `output`.
 *
 * # Safety
 * `model` must be a live handle; `input` and `output` point to `len`
 * doubles each and may alias.
 */
enum QcStatus qc_model_propagate(const struct QcModel *model,
                                 const double *input,
                                 double *output,
                                 uintptr_t len,
                                 uintptr_t steps);

/**
 * Parses trajectories in the library's CSV format.
 *
 * # Safety
 * `csv` must be a NUL-terminated string and `out` valid.
 */
enum QcStatus qc_dataset_from_csv(const char *csv, struct QcDataset **out);

/**
 * Serializes a dataset; free the result with [`qc_string_free`].
 *
 * # Safety
 * `dataset` must be a live handle and `out` valid.
 */
enum QcStatus qc_dataset_to_csv(const struct QcDataset *dataset, char **out);

/**
 * Number of trajectories, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
uintptr_t qc_dataset_len(const struct QcDataset *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void qc_dataset_free(struct QcDataset *dataset);

/**
 * Generates the training and validation sets of an experiment TOML.
 *
 * # Safety
 * `config_toml` must be a NUL-terminated string; outputs must be valid.
 */
enum QcStatus qc_experiment_generate(const char *config_toml,
                                     struct QcDataset **train_out,
                                     struct QcDataset **validation_out);

/**
 * Trains a model on `dataset` with a training-config TOML. A non-null
 * `pretrain_toml` runs that phase first. On divergence the last finite
 * model is still returned together with [`QcStatus::Diverged`].
 *
 * # Safety
 * `dataset` must be a live handle, `train_toml` a NUL-terminated string,
 * `pretrain_toml` null or a NUL-terminated string, `out` valid.
 */
enum QcStatus qc_train(const struct QcDataset *dataset,
                       const char *train_toml,
                       const char *pretrain_toml,
                       struct QcModel **out);

/**
 * Mean validation error of `model` on `dataset` over `t_min..=t_max`.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum QcStatus qc_error_measure(const struct QcModel *model,
                               const struct QcDataset *dataset,
                               uint32_t t_min,
                               uint32_t t_max,
                               double *out);

/**
 * Whether the one-period transfer matrix `transfer` (`n × n` row-major,
 * `n = d²`) has a time-independent Lindblad generator at drive frequency
 * `omega`.
 *
 * # Safety
 * `transfer` must point to `n * n` doubles and `verdict` be valid.
 */
enum QcStatus qc_floquet_check(const double *transfer,
                               uintptr_t n,
                               double omega,
                               enum QcFloquetVerdict *verdict);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QCHANNEL_H */
