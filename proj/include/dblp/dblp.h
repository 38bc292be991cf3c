/* Copyright (C) 2026 dblp contributors
 * SPDX-License-Identifier: Apache-2.0
 *
 * C interface to the purification library. Every function returns a status
 * code; on failure dblp_last_error() describes the problem (per thread).
 */
#ifndef DBLP_DBLP_H
#define DBLP_DBLP_H

#include <stddef.h>

#if defined(DBLP_BUILDING_LIBRARY)
#define DBLP_API __attribute__((visibility("default")))
#else
#define DBLP_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum dblp_status {
    DBLP_OK = 0,
    DBLP_ERR_STAGE = 1,     /* stage failed (divergence, failed check) */
    DBLP_ERR_CONFIG = 2,    /* invalid or missing configuration */
    DBLP_ERR_ARGUMENT = 3,  /* invalid argument, shape or domain */
    DBLP_ERR_NOT_FOUND = 4, /* missing upstream artifact */
    DBLP_ERR_INTERNAL = 5
} dblp_status;

typedef struct dblp_run dblp_run;
typedef struct dblp_schedule dblp_schedule;

DBLP_API const char* dblp_version(void);
/* Message of the last failed call on this thread ("" when none). */
DBLP_API const char* dblp_last_error(void);
/* Dotted field path of the last configuration error ("" when none). */
DBLP_API const char* dblp_last_error_path(void);

/* Loads and validates a JSON run config; overrides are "key.path=value". */
DBLP_API dblp_status dblp_run_open(const char* config_path, const char* const* overrides, size_t n_overrides,
                                   dblp_run** out);
DBLP_API void dblp_run_close(dblp_run* run);
/* Stage names: gen-data, train-classifier, train-teacher, distill, attack, purify, eval, verify. */
DBLP_API dblp_status dblp_run_stage(dblp_run* run, const char* stage);
/* JSON summary of the last successful stage; owned by the handle. */
DBLP_API const char* dblp_run_summary(const dblp_run* run);
DBLP_API const char* dblp_run_manifest_path(const dblp_run* run);
DBLP_API const char* dblp_run_output_dir(const dblp_run* run);

DBLP_API dblp_status dblp_schedule_linear(int n_steps, double beta_start, double beta_end, dblp_schedule** out);
DBLP_API void dblp_schedule_free(dblp_schedule* s);
DBLP_API int dblp_schedule_num_steps(const dblp_schedule* s);
DBLP_API dblp_status dblp_schedule_alpha_bar(const dblp_schedule* s, int t, double* out);
DBLP_API dblp_status dblp_schedule_bridge_k(const dblp_schedule* s, int t, double* out);
/* Largest recursion residual and largest |eps_a posterior coefficient| over all t. */
DBLP_API dblp_status dblp_schedule_verify(const dblp_schedule* s, double* max_residual, double* max_coefficient);

DBLP_API dblp_status dblp_bridge_k(double alpha_bar_t, double alpha_bar_T, double* out);

/* Images are row-major height x width arrays with values in [0, 1]. */
DBLP_API dblp_status dblp_psnr(const double* a, const double* b, int height, int width, double* out);
DBLP_API dblp_status dblp_ssim(const double* a, const double* b, int height, int width, double* out);
DBLP_API dblp_status dblp_otsu_threshold(const double* img, int height, int width, double* out);
/* Writes height * width fused edge values into out. */
DBLP_API dblp_status dblp_fused_edge_map(const double* img, int height, int width, double temperature, double* out);

#ifdef __cplusplus
}
#endif

#endif
