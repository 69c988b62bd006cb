#ifndef HIVSPILL_H
#define HIVSPILL_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum HivStatus {
  HIV_STATUS_OK = 0,
  HIV_STATUS_NULL_POINTER = 1,
  HIV_STATUS_INVALID_ARGUMENT = 2,
  HIV_STATUS_INFEASIBLE_CLOSURE = 3,
  HIV_STATUS_NUMERICAL = 4,
  HIV_STATUS_CONFIG = 5,
  HIV_STATUS_PANIC = 6,
} HivStatus;

typedef enum HivVariant {
  HIV_VARIANT_BASIC = 0,
  HIV_VARIANT_RISK = 1,
} HivVariant;

// Opaque model handle.
typedef struct HivModel HivModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Creates a model from the built-in preset.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum HivStatus hiv_model_new_preset(enum HivVariant variant, struct HivModel **out);

// Creates a model from a JSON scenario config.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be writable.
enum HivStatus hiv_model_from_json(const char *json, struct HivModel **out);

// Releases a handle. Null is ignored.
//
// # Safety
// `model` must come from this library and not be used afterwards.
void hiv_model_free(struct HivModel *model);

// Number of population groups in the model (0 for a null handle).
//
// # Safety
// `model` must be null or a live handle.
uintptr_t hiv_model_n_groups(const struct HivModel *model);

// Control reproduction number at the disease-free equilibrium.
//
// # Safety
// `model` must be a live handle and `out` writable.
enum HivStatus hiv_model_rc(const struct HivModel *model, double *out);

// Runs one intervention and writes the infections prevented per group over
// the reporting window into `prevented[0..len]`; `len` must equal the group
// count.
//
// # Safety
// `model` must be a live handle and `prevented` must hold `len` doubles.
enum HivStatus hiv_model_run_intervention(const struct HivModel *model,
                                          uintptr_t group,
                                          double additional_persons,
                                          double *prevented,
                                          uintptr_t len);

// NNT for PrEP in `source` measured on infections averted in `target`
// after `horizon` years. Undefined values are written as NaN with status Ok.
//
// # Safety
// `model` must be a live handle; the out pointers must be writable.
enum HivStatus hiv_model_nnt(const struct HivModel *model,
                             uintptr_t target,
                             uintptr_t source,
                             double horizon,
                             double *out_simple,
                             double *out_integral);

// Message for the last failed call on this thread, or null. The pointer is
// valid until the next library call on the same thread.
const char *hiv_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HIVSPILL_H */
