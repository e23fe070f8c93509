#ifndef HSCL_H
#define HSCL_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum HsclStatus {
  HSCL_STATUS_OK = 0,
  HSCL_STATUS_NULL_POINTER = 1,
  HSCL_STATUS_INVALID_ARGUMENT = 2,
  HSCL_STATUS_SHAPE = 3,
  HSCL_STATUS_DEGENERATE = 4,
  HSCL_STATUS_EMPTY_SUPPORT = 5,
  HSCL_STATUS_ZERO_MASS = 6,
  HSCL_STATUS_UNDEFINED = 7,
  HSCL_STATUS_NUMERICAL = 8,
  HSCL_STATUS_IO = 9,
  HSCL_STATUS_PANIC = 99,
} HsclStatus;

typedef enum HsclHardeningKind {
  HSCL_HARDENING_KIND_IDENTITY = 0,
  /*
   `param` is beta.
   */
  HSCL_HARDENING_KIND_EXP_TILT = 1,
  /*
   `param` is tau.
   */
  HSCL_HARDENING_KIND_THRESHOLD = 2,
} HsclHardeningKind;

typedef enum HsclSetting {
  HSCL_SETTING_UCL = 0,
  HSCL_SETTING_SCL = 1,
  HSCL_SETTING_H_UCL = 2,
  HSCL_SETTING_H_SCL = 3,
  HSCL_SETTING_H_COL = 4,
} HsclSetting;

/*
 Opaque embedder handle.
 */
typedef struct HsclEmbedder HsclEmbedder;

/*
 Opaque population handle.
 */
typedef struct HsclPopulation HsclPopulation;

typedef struct HsclHardening {
  enum HsclHardeningKind kind;
  double param;
} HsclHardening;

typedef struct HsclAlphas {
  double alpha_scl;
  double alpha_hucl;
  double alpha_hscl;
  double alpha_hcol;
} HsclAlphas;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty if none. The
 pointer stays valid until the next failing call on the same thread.
 */
const char *hscl_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *hscl_version(void);

/*
 Loads a population CSV (header row, feature columns, `label`, optional `weight`).

 # Safety
 `path` must be a NUL-terminated string; `out` must be writable.
 */
enum HsclStatus hscl_population_load_csv(const char *path, struct HsclPopulation **out);

/*
 Builds a population from `n` row-major feature rows of length `dim`
 and their labels. `weights` may be null for a uniform base distribution.

 # Safety
 Arrays must hold `n * dim`, `n` and (if non-null) `n` elements.
 */
enum HsclStatus hscl_population_new(const double *features,
                                    const uintptr_t *labels,
                                    const double *weights,
                                    uintptr_t n,
                                    uintptr_t dim,
                                    struct HsclPopulation **out);

/*
 Number of points; 0 for a null handle.

 # Safety
 `pop` must be null or a live handle.
 */
uintptr_t hscl_population_len(const struct HsclPopulation *pop);

/*
 Feature dimension; 0 for a null handle.

 # Safety
 `pop` must be null or a live handle.
 */
uintptr_t hscl_population_dim(const struct HsclPopulation *pop);

/*
 # Safety
 `pop` must be null or a handle not yet freed.
 */
void hscl_population_free(struct HsclPopulation *pop);

/*
 Tanh MLP with the given layer widths (input first), uniformly initialized
 from `seed`.

 # Safety
 `widths` must hold `n_widths` elements; `out` must be writable.
 */
enum HsclStatus hscl_embedder_new(const uintptr_t *widths,
                                  uintptr_t n_widths,
                                  uint64_t seed,
                                  struct HsclEmbedder **out);

/*
 Loads `<stem>.shape` and `<stem>.bin`.

 # Safety
 `stem` must be a NUL-terminated string; `out` must be writable.
 */
enum HsclStatus hscl_embedder_load(const char *stem, struct HsclEmbedder **out);

/*
 Writes `<stem>.shape` and `<stem>.bin`.

 # Safety
 `e` must be a live handle; `stem` a NUL-terminated string.
 */
enum HsclStatus hscl_embedder_save(const struct HsclEmbedder *e, const char *stem);

/*
 # Safety
 `e` must be null or a live handle.
 */
uintptr_t hscl_embedder_input_dim(const struct HsclEmbedder *e);

/*
 # Safety
 `e` must be null or a live handle.
 */
uintptr_t hscl_embedder_output_dim(const struct HsclEmbedder *e);

/*
 Unit-norm embedding of `x` into `out`.

 # Safety
 `x` must hold `x_len` and `out` `out_len` elements.
 */
enum HsclStatus hscl_embedder_forward(const struct HsclEmbedder *e,
                                      const double *x,
                                      uintptr_t x_len,
                                      double *out,
                                      uintptr_t out_len);

/*
 # Safety
 `e` must be null or a handle not yet freed.
 */
void hscl_embedder_free(struct HsclEmbedder *e);

/*
 InfoNCE with `k` negatives.

 # Safety
 `g_negs` must hold `k` elements; `out` must be writable.
 */
enum HsclStatus hscl_psi_k(double g_pos, const double *g_negs, uintptr_t k, double *out);

/*
 Infinite-negative limit of InfoNCE.

 # Safety
 `out` must be writable.
 */
enum HsclStatus hscl_psi_inf(double g_pos, double mean_exp_neg, double *out);

/*
 Normalizers of the four settings at one anchor.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum HsclStatus hscl_compute_alphas(const struct HsclPopulation *pop,
                                    const struct HsclEmbedder *emb,
                                    double gamma,
                                    uintptr_t anchor,
                                    struct HsclHardening h,
                                    struct HsclAlphas *out);

/*
 Negative-sampling distribution over the population at one anchor.

 # Safety
 Handles must be live; `out` must hold `out_len` elements.
 */
enum HsclStatus hscl_neg_distribution(const struct HsclPopulation *pop,
                                      const struct HsclEmbedder *emb,
                                      double gamma,
                                      uintptr_t anchor,
                                      enum HsclSetting setting,
                                      struct HsclHardening h,
                                      double *out,
                                      uintptr_t out_len);

/*
 Exact infinite-negative loss with every anchor as its own positive.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum HsclStatus hscl_loss_exact(const struct HsclPopulation *pop,
                                const struct HsclEmbedder *emb,
                                double gamma,
                                enum HsclSetting setting,
                                struct HsclHardening h,
                                double *out);

/*
 Fraction of anchors whose collision expectation is at least the
 hard-negative expectation.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum HsclStatus hscl_assumption_fraction(const struct HsclPopulation *pop,
                                         const struct HsclEmbedder *emb,
                                         double gamma,
                                         struct HsclHardening h,
                                         double *out);

/*
 Writes 1 if the normalizer decomposition holds at every anchor, else 0.

 # Safety
 Handles must be live; `out` must be writable.
 */
enum HsclStatus hscl_verify_decomposition(const struct HsclPopulation *pop,
                                          const struct HsclEmbedder *emb,
                                          double gamma,
                                          struct HsclHardening h,
                                          int32_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HSCL_H */
