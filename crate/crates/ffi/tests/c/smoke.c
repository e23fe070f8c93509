#include <math.h>
#include <stdio.h>
#include "hscl.h"

int main(void) {
    const double x[] = {1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0};
    const size_t y[] = {0, 0, 1, 1};
    const size_t widths[] = {2, 4, 3};
    HsclPopulation *pop = NULL;
    HsclEmbedder *emb = NULL;
    if (hscl_population_new(x, y, NULL, 4, 2, &pop) != HSCL_STATUS_OK) return 1;
    if (hscl_embedder_new(widths, 3, 7, &emb) != HSCL_STATUS_OK) return 2;

    HsclHardening h = {HSCL_HARDENING_KIND_EXP_TILT, 1.0};
    HsclAlphas a;
    if (hscl_compute_alphas(pop, emb, 0.5, 0, h, &a) != HSCL_STATUS_OK) return 3;
    if (fabs(a.alpha_hucl - a.alpha_hscl - a.alpha_hcol) > 1e-12) return 4;

    double loss = 0.0;
    if (hscl_loss_exact(pop, emb, 0.5, HSCL_SETTING_H_SCL, h, &loss) != HSCL_STATUS_OK) return 5;

    HsclHardening bad = {HSCL_HARDENING_KIND_THRESHOLD, -1.0};
    if (hscl_loss_exact(pop, emb, 0.5, HSCL_SETTING_H_SCL, bad, &loss) != HSCL_STATUS_INVALID_ARGUMENT) return 6;
    if (hscl_last_error()[0] == '\0') return 7;

    hscl_embedder_free(emb);
    hscl_population_free(pop);
    printf("ok %s\n", hscl_version());
    return 0;
}
