/* Copyright 2026 The s2tp Authors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the s2tp library: configuration, training, evaluation,
 * generation, latent selection, cost reports, checkpoint averaging and
 * gradient checks.
 *
 * Every function returns an s2tp_status. On failure a one-line diagnostic is
 * available from s2tp_last_error() until the next call on the same thread.
 * Handles are opaque; release them with the matching *_free function.
 *
 * Text results are written into caller buffers: `buf` receives at most `cap`
 * bytes including the terminating NUL, and `*needed` (if non-NULL) is set to
 * the full length plus one. A NULL `buf` with cap 0 only queries the size.
 */
#ifndef S2TP_S2TP_H_
#define S2TP_S2TP_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define S2TP_API __declspec(dllexport)
#else
#define S2TP_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum s2tp_status {
  S2TP_OK = 0,
  S2TP_ERR_CONFIG = 1,       /* unknown key, malformed or inconsistent value */
  S2TP_ERR_CHECKPOINT = 2,   /* bad magic, version, names or shapes */
  S2TP_ERR_K_PRIME = 3,      /* k' outside [1, n] */
  S2TP_ERR_IO = 4,           /* file could not be opened, read or written */
  S2TP_ERR_CONTRACT = 5,     /* precondition violated (shapes, masks, ids) */
  S2TP_ERR_DIVERGENCE = 6,   /* training loss stopped being finite */
  S2TP_ERR_ARGUMENT = 7,     /* NULL handle or invalid argument */
  S2TP_ERR_INTERNAL = 8
} s2tp_status;

typedef enum s2tp_dla_mode {
  S2TP_DLA_FULL = 0,
  S2TP_DLA_DIVERSE = 1,
  S2TP_DLA_RANDOM = 2
} s2tp_dla_mode;

typedef struct s2tp_config s2tp_config;
typedef struct s2tp_model s2tp_model;

S2TP_API const char* s2tp_last_error(void);
S2TP_API const char* s2tp_status_name(s2tp_status status);
S2TP_API const char* s2tp_version(void);

/* ---- configuration ---------------------------------------------------- */

S2TP_API s2tp_status s2tp_config_default(s2tp_config** out);
S2TP_API s2tp_status s2tp_config_load(const char* path, s2tp_config** out);
S2TP_API s2tp_status s2tp_config_parse(const char* text, s2tp_config** out);
S2TP_API s2tp_status s2tp_config_set(s2tp_config* config, const char* key,
                                     const char* value);
S2TP_API s2tp_status s2tp_config_get(const s2tp_config* config,
                                     const char* key, char* buf, size_t cap,
                                     size_t* needed);
/* Full cross-field validation (k <= n, k' <= n, task/model agreement). */
S2TP_API s2tp_status s2tp_config_validate(const s2tp_config* config);
S2TP_API s2tp_status s2tp_config_text(const s2tp_config* config, char* buf,
                                      size_t cap, size_t* needed);
S2TP_API void s2tp_config_free(s2tp_config* config);

/* ---- training ----------------------------------------------------------- */

typedef struct s2tp_epoch_metrics {
  uint64_t epoch;
  uint64_t step;
  double lr;
  double train_loss;
  double valid_token_accuracy;
  double valid_exact_match;
} s2tp_epoch_metrics;

typedef void (*s2tp_epoch_callback)(const s2tp_epoch_metrics* metrics,
                                    void* user);

/* Trains from scratch. When `out_dir` is non-NULL it receives metrics.tsv,
 * best_<rank>.ckpt for the kept snapshots, last.ckpt and averaged.ckpt.
 * `*out_model` (optional) receives the averaged model. */
S2TP_API s2tp_status s2tp_train(const s2tp_config* config, const char* out_dir,
                                s2tp_epoch_callback callback, void* user,
                                s2tp_model** out_model);

/* ---- models and checkpoints -------------------------------------------- */

S2TP_API s2tp_status s2tp_model_create(const s2tp_config* config,
                                       s2tp_model** out);
S2TP_API s2tp_status s2tp_model_load(const char* path, s2tp_model** out);
S2TP_API s2tp_status s2tp_model_save(const s2tp_model* model, const char* path);
/* Copy of the configuration stored with the model. */
S2TP_API s2tp_status s2tp_model_config(const s2tp_model* model,
                                       s2tp_config** out);
S2TP_API void s2tp_model_free(s2tp_model* model);

/* Elementwise mean of `count` checkpoints written to `out_path`. */
S2TP_API s2tp_status s2tp_average_checkpoints(const char* const* paths,
                                              size_t count,
                                              const char* out_path);

/* ---- evaluation and generation ----------------------------------------- */

typedef struct s2tp_eval_options {
  s2tp_dla_mode mode;
  size_t k_prime;  /* ignored for S2TP_DLA_FULL */
  size_t beam;     /* 0: teacher-forced exact match, no generation */
  uint64_t seed;   /* stream for random selection */
  size_t count;    /* examples drawn from the task's test split; 0 = valid_size */
} s2tp_eval_options;

typedef struct s2tp_eval_metrics {
  double token_accuracy;
  double exact_match;
  double flops;
  uint64_t examples;
} s2tp_eval_metrics;

S2TP_API s2tp_eval_options s2tp_eval_options_default(void);

/* Evaluates on held-out examples of the task in `task` (NULL = the model's
 * own configuration). */
S2TP_API s2tp_status s2tp_evaluate(const s2tp_model* model,
                                   const s2tp_config* task,
                                   const s2tp_eval_options* options,
                                   s2tp_eval_metrics* out);

/* Decodes one input (frames x feature_dim row-major floats). The rendered
 * symbol string (EOS stripped) is written to `buf`; `score` (optional)
 * receives the hypothesis log-probability. */
S2TP_API s2tp_status s2tp_generate(const s2tp_model* model,
                                   const float* features, size_t frames,
                                   size_t feature_dim,
                                   const s2tp_eval_options* options,
                                   double* score, char* buf, size_t cap,
                                   size_t* needed);

typedef void (*s2tp_text_callback)(const char* line, void* user);

/* Decodes `options->count` held-out task examples, emitting one line per
 * example: index, reference, hypothesis, score (tab-separated). */
S2TP_API s2tp_status s2tp_generate_examples(const s2tp_model* model,
                                            const s2tp_config* task,
                                            const s2tp_eval_options* options,
                                            s2tp_text_callback callback,
                                            void* user);

/* Decodes every rank-2 tensor (frames x feature_dim) of a named-tensor
 * container, emitting one line per tensor: name, hypothesis, score. */
S2TP_API s2tp_status s2tp_generate_file(const s2tp_model* model,
                                        const char* path,
                                        const s2tp_eval_options* options,
                                        s2tp_text_callback callback,
                                        void* user);

/* ---- latent selection -------------------------------------------------- */

/* Runs the cross-attention of held-out example `index` with all latents and
 * stores Z, A and frame_mask as an attention record. */
S2TP_API s2tp_status s2tp_record_attention(const s2tp_model* model,
                                           const s2tp_config* task,
                                           size_t index, const char* path);

/* Selects k' latent ids from an attention record, in selection order for
 * S2TP_DLA_DIVERSE and ascending for S2TP_DLA_RANDOM. `ids` must hold k'
 * entries. */
S2TP_API s2tp_status s2tp_select_latents(const char* record_path,
                                         s2tp_dla_mode mode, size_t k_prime,
                                         uint64_t seed, size_t* ids);

/* ---- cost model ---------------------------------------------------------- */

/* Tab-separated report of `spec` against `baseline` over a length corpus
 * (`lengths_path` NULL: `default_count` pairs drawn with `seed`). A k_prime
 * of 0 keeps the value in `spec`. `ratio` (optional) receives the corpus
 * FLOPs ratio. */
S2TP_API s2tp_status s2tp_flops_report(const s2tp_config* spec,
                                       const s2tp_config* baseline,
                                       const char* lengths_path,
                                       size_t default_count, uint64_t seed,
                                       double* ratio, char* buf, size_t cap,
                                       size_t* needed);

/* Same report for the large-scale presets: the perceiver with `k_prime`
 * inference latents (0 = all) against the strided transformer baseline. */
S2TP_API s2tp_status s2tp_flops_large_report(size_t k_prime,
                                             const char* lengths_path,
                                             size_t default_count,
                                             uint64_t seed, double* ratio,
                                             char* buf, size_t cap,
                                             size_t* needed);

/* ---- gradient checks ------------------------------------------------------ */

/* Runs the finite-difference suite at small shapes and writes one line per
 * case: name, max relative error, max absolute error, coordinates, worst
 * parameter. `max_relative_error` (optional) receives the overall maximum. */
S2TP_API s2tp_status s2tp_gradcheck(uint64_t seed, double* max_relative_error,
                                    char* buf, size_t cap, size_t* needed);

#ifdef __cplusplus
}
#endif

#endif /* S2TP_S2TP_H_ */
