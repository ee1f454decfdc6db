/* C interface to the codemix classifier. */

#ifndef CODEMIX_H
#define CODEMIX_H

/* Generated by cbindgen from codemix-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes mirroring the CLI exit codes (2 config/schema, 3 data,
// 4 numeric), plus FFI-boundary failures.
typedef enum CmxStatus {
  CMX_OK = 0,
  CMX_ERR_CONFIG = 2,
  CMX_ERR_DATA = 3,
  CMX_ERR_NUMERIC = 4,
  CMX_ERR_NULL_ARGUMENT = 5,
  CMX_ERR_INVALID_UTF8 = 6,
  CMX_ERR_BUFFER_TOO_SMALL = 7,
} CmxStatus;

// An opened classifier: the checkpoint plus a ready-to-run model.
typedef struct CmxClassifier CmxClassifier;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the most recent failure on this thread. The pointer stays
// valid until the next failing call on the same thread. Never null.
const char *cmx_last_error(void);

// Library version as a static string; do not free.
const char *cmx_version(void);

// Open a checkpoint file and hand back an owned classifier handle.
//
// # Safety
//
// `path` must be a valid NUL-terminated string and `out` a valid pointer.
enum CmxStatus cmx_open(const char *path, struct CmxClassifier **out);

// Release a handle from `cmx_open`. A null handle is a no-op.
//
// # Safety
//
// `handle` must come from `cmx_open` and must not be used afterwards.
void cmx_close(struct CmxClassifier *handle);

// Number of classes the classifier predicts; 0 on a null handle.
//
// # Safety
//
// `handle` must be a live handle from `cmx_open` (or null).
uintptr_t cmx_num_classes(const struct CmxClassifier *handle);

// Name of class `index` as a caller-owned string (free with
// `cmx_string_free`); null if the handle is null or the index is out of
// range.
//
// # Safety
//
// `handle` must be a live handle from `cmx_open` (or null).
char *cmx_label_name(const struct CmxClassifier *handle, uintptr_t index);

// Clean raw UTF-8 text with the checkpoint's stored rules. Returns a
// caller-owned string (free with `cmx_string_free`), or null on error.
//
// # Safety
//
// `handle` must be a live handle and `text` a valid NUL-terminated string.
char *cmx_clean_text(const struct CmxClassifier *handle, const char *text);

// Classify one raw text. Cleans it with the stored rules, tokenizes, runs
// the model, and writes the class probabilities into `probs_out` (which
// must hold `cmx_num_classes` values). The winning class index lands in
// `pred_out`. Probabilities sum to 1.
//
// # Safety
//
// `handle` must be a live handle, `text` a valid NUL-terminated string,
// and `probs_out`/`pred_out` valid for `probs_len` doubles / one usize.
enum CmxStatus cmx_predict(const struct CmxClassifier *handle,
                           const char *text,
                           double *probs_out,
                           uintptr_t probs_len,
                           uintptr_t *pred_out);

// Release a string returned by this library. A null pointer is a no-op.
//
// # Safety
//
// `s` must come from this library and must not be used afterwards.
void cmx_string_free(char *s);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* CODEMIX_H */
