#ifndef MEXFLOW_H
#define MEXFLOW_H

#include <stddef.h>
#include <stdint.h>

// Result of every call.
typedef enum MexflowStatus {
  MEXFLOW_STATUS_OK = 0,
  MEXFLOW_STATUS_NULL_POINTER = 1,
  MEXFLOW_STATUS_INVALID_ARGUMENT = 2,
  MEXFLOW_STATUS_SHAPE = 3,
  MEXFLOW_STATUS_IO = 4,
  MEXFLOW_STATUS_FORMAT = 5,
  MEXFLOW_STATUS_NON_FINITE = 6,
  MEXFLOW_STATUS_DIVERGED = 7,
  MEXFLOW_STATUS_BUFFER_TOO_SMALL = 8,
  MEXFLOW_STATUS_PANIC = 9,
  MEXFLOW_STATUS_OTHER = 10,
} MexflowStatus;

// Dense flow field between two frames.
typedef struct MexflowFlow MexflowFlow;

// Trained network loaded from a checkpoint directory.
typedef struct MexflowNet MexflowNet;

// Linear SVM loaded from a model file.
typedef struct MexflowSvm MexflowSvm;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *mexflow_version(void);

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on the same thread.
const char *mexflow_last_error(void);

// Estimates flow from `onset` to `apex` (each `width * height` pixels).
// `config_json` is a flow config object such as `{"method":"tvl1"}`, or
// null for the defaults.
enum MexflowStatus mexflow_flow_estimate(const double *onset,
                                         const double *apex,
                                         size_t width,
                                         size_t height,
                                         const char *config_json,
                                         struct MexflowFlow **out);

// Wraps caller-provided `p` and `q` planes as a flow handle.
enum MexflowStatus mexflow_flow_from_planes(const double *p,
                                            const double *q,
                                            size_t width,
                                            size_t height,
                                            struct MexflowFlow **out);

enum MexflowStatus mexflow_flow_size(const struct MexflowFlow *flow, size_t *width, size_t *height);

// Copies one derived channel (`p`, `q`, `rho`, `theta`, `eps_mag`,
// `eps_xx`, `eps_yy`, `eps_xy`, `eps_yx`) into `out`, which must hold
// `width * height` values.
enum MexflowStatus mexflow_flow_channel(const struct MexflowFlow *flow,
                                        const char *channel,
                                        double *out,
                                        size_t out_len);

// Bi-WOOF descriptor of the flow. Writes the feature length to `out_len`;
// the values are written only if `capacity` suffices.
enum MexflowStatus mexflow_flow_biwoof(const struct MexflowFlow *flow,
                                       size_t blocks_per_side,
                                       size_t orientation_bins,
                                       double *out,
                                       size_t capacity,
                                       size_t *out_len);

void mexflow_flow_free(struct MexflowFlow *flow);

// Divide & Conquer apex index of a motion signal.
enum MexflowStatus mexflow_spot_apex(const double *signal, size_t len, size_t *out_index);

// Accuracy and macro-F1 of a 3×3 confusion matrix given row-major
// (rows true class, columns predicted class).
enum MexflowStatus mexflow_metrics(const uint64_t *counts,
                                   double *out_accuracy,
                                   double *out_macro_f1);

// Loads a network checkpoint directory written by `train-cnn`.
enum MexflowStatus mexflow_net_load(const char *dir, struct MexflowNet **out);

// Number of input streams the network expects.
enum MexflowStatus mexflow_net_streams(const struct MexflowNet *net, size_t *out);

// Classifies one sample. `inputs` holds the streams back to back, each
// 28×28 values already scaled to [−1, 1]. `out_logits` may be null or
// hold 3 values.
enum MexflowStatus mexflow_net_predict(const struct MexflowNet *net,
                                       const double *inputs,
                                       size_t len,
                                       int *out_class,
                                       double *out_logits);

void mexflow_net_free(struct MexflowNet *net);

// Loads an SVM model file written by `train-svm`.
enum MexflowStatus mexflow_svm_load(const char *path, struct MexflowSvm **out);

enum MexflowStatus mexflow_svm_predict(const struct MexflowSvm *svm,
                                       const double *feature,
                                       size_t len,
                                       int *out_class);

void mexflow_svm_free(struct MexflowSvm *svm);

// Runs the command-line front end in-process with `argv[0..argc]`
// (program name first) and returns its exit code.
int mexflow_cli(int argc, const char *const *argv);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MEXFLOW_H */
