/* Copyright (C) 2026 dblp contributors
 * SPDX-License-Identifier: Apache-2.0
 */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "dblp/dblp.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
    do {                                                               \
        if (!(cond)) {                                                 \
            fprintf(stderr, "%s:%d: failed: %s\n", __FILE__, __LINE__, #cond); \
            ++failures;                                                \
        }                                                              \
    } while (0)

static void schedule_handle(void) {
    dblp_schedule* s = NULL;
    double ab = 0.0, k = 1.0, res = 1.0, coeff = 1.0;
    EXPECT(dblp_schedule_linear(100, 1e-4, 0.02, &s) == DBLP_OK);
    EXPECT(s != NULL);
    EXPECT(dblp_schedule_num_steps(s) == 100);
    EXPECT(dblp_schedule_alpha_bar(s, 99, &ab) == DBLP_OK);
    EXPECT(fabs(ab - 0.3635632480554922) < 1e-14);
    EXPECT(dblp_schedule_bridge_k(s, 99, &k) == DBLP_OK);
    EXPECT(fabs(k) < 1e-12);
    EXPECT(dblp_schedule_verify(s, &res, &coeff) == DBLP_OK);
    EXPECT(res < 1e-10 && coeff < 1e-10);
    EXPECT(dblp_schedule_alpha_bar(s, 100, &ab) == DBLP_ERR_ARGUMENT);
    EXPECT(strlen(dblp_last_error()) > 0);
    dblp_schedule_free(s);

    s = NULL;
    EXPECT(dblp_schedule_linear(1, 1e-4, 0.02, &s) == DBLP_ERR_CONFIG);
    EXPECT(s == NULL);
    EXPECT(strcmp(dblp_last_error_path(), "schedule.n_steps") == 0);
}

static void scalar_functions(void) {
    double v = 0.0;
    EXPECT(dblp_bridge_k(0.5, 0.01, &v) == DBLP_OK);
    EXPECT(fabs(v - 0.6999642884472895) < 1e-12);
    EXPECT(dblp_bridge_k(0.0, 0.01, &v) == DBLP_ERR_ARGUMENT);
    EXPECT(dblp_bridge_k(0.5, 0.01, NULL) == DBLP_ERR_ARGUMENT);
}

static void image_functions(void) {
    enum { H = 16, W = 16 };
    double a[H * W], b[H * W], fused[H * W];
    double v = 0.0;
    int i;
    for (i = 0; i < H * W; ++i) {
        a[i] = 0.2;
        b[i] = 0.2 + 16.0 / 255.0;
    }
    EXPECT(dblp_psnr(a, b, H, W, &v) == DBLP_OK);
    EXPECT(fabs(v - 24.04840395556061) < 1e-9);
    EXPECT(dblp_ssim(a, a, H, W, &v) == DBLP_OK);
    EXPECT(fabs(v - 1.0) < 1e-12);
    EXPECT(dblp_otsu_threshold(a, H, W, &v) == DBLP_ERR_ARGUMENT);
    for (i = 0; i < H * W; ++i) a[i] = (i % W) < W / 2 ? 10.0 / 255.0 : 200.0 / 255.0;
    EXPECT(dblp_otsu_threshold(a, H, W, &v) == DBLP_OK);
    EXPECT(v == 10.0 / 255.0);
    EXPECT(dblp_fused_edge_map(a, H, W, 1.0, fused) == DBLP_OK);
    for (i = 0; i < H * W; ++i) EXPECT(fused[i] >= 0.0 && fused[i] <= 1.0);
    EXPECT(dblp_fused_edge_map(a, H, W, 0.0, fused) == DBLP_ERR_CONFIG);
    a[3] = 1.5;
    EXPECT(dblp_psnr(a, b, H, W, &v) == DBLP_ERR_ARGUMENT);
}

static void run_handle(const char* scratch) {
    char path[1024], dir[1024], override_dir[1100];
    const char* overrides[2];
    dblp_run* run = NULL;
    FILE* f;
    snprintf(path, sizeof path, "%s/config.json", scratch);
    snprintf(dir, sizeof dir, "%s/run", scratch);
    f = fopen(path, "w");
    if (!f) {
        ++failures;
        return;
    }
    fputs("{\"seed\": 4, \"dataset\": \"toy2d\"}\n", f);
    fclose(f);

    snprintf(override_dir, sizeof override_dir, "output_dir=%s", dir);
    overrides[0] = override_dir;
    overrides[1] = "distill.k=10";
    EXPECT(dblp_run_open(path, overrides, 2, &run) == DBLP_OK);
    EXPECT(strcmp(dblp_run_output_dir(run), dir) == 0);
    EXPECT(dblp_run_stage(run, "verify") == DBLP_OK);
    EXPECT(strstr(dblp_run_summary(run), "max_recursion_residual") != NULL);
    EXPECT(strstr(dblp_run_manifest_path(run), "manifests/verify.json") != NULL);
    EXPECT(dblp_run_stage(run, "distill") == DBLP_ERR_NOT_FOUND);
    EXPECT(strstr(dblp_last_error(), "checkpoint not found") != NULL);
    EXPECT(dblp_run_stage(run, "nonsense") == DBLP_ERR_CONFIG);
    dblp_run_close(run);

    run = NULL;
    overrides[1] = "distill.k=1000";
    EXPECT(dblp_run_open(path, overrides, 2, &run) == DBLP_ERR_CONFIG);
    EXPECT(run == NULL);
    EXPECT(strcmp(dblp_last_error_path(), "distill.k") == 0);
    EXPECT(dblp_run_open(NULL, NULL, 0, &run) == DBLP_ERR_CONFIG);
}

int main(int argc, char** argv) {
    const char* scratch = argc > 1 ? argv[1] : ".";
    EXPECT(strcmp(dblp_version(), "0.1.0") == 0);
    schedule_handle();
    scalar_functions();
    image_functions();
    run_handle(scratch);
    if (failures) {
        fprintf(stderr, "%d check(s) failed\n", failures);
        return EXIT_FAILURE;
    }
    printf("c api: all checks passed\n");
    return EXIT_SUCCESS;
}
