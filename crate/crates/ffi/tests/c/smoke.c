#include <math.h>
#include <stdio.h>
#include "boltzgrad.h"

int main(void) {
    BgGaussian *g = NULL;
    double re = 0.0, im = 0.0;
    if (bg_gaussian_standard(4, NULL, &g) != BG_STATUS_OK) return 1;
    if (bg_hs_pairing(g, g, &re, &im) != BG_STATUS_OK) return 2;
    if (fabs(re - 0.25) > 1e-14) return 3;
    bg_gaussian_free(g);

    BgConfig *cfg = NULL;
    BgRecord *rec = NULL;
    const char *toml = "experiment = \"zeroth\"\nd = 2\nr = [0.2]\ntimings = false\n";
    if (bg_config_from_toml(toml, &cfg) != BG_STATUS_OK) return 4;
    if (bg_run_experiment(cfg, &rec) != BG_STATUS_OK) return 5;
    BgRow row;
    if (bg_record_row(rec, 0, &row) != BG_STATUS_OK) return 6;
    if (fabs(row.value_re - 0.25) > 1e-6) return 7;
    if (bg_config_from_toml("d = 9", &cfg) == BG_STATUS_OK) return 8;
    printf("%s ok: %s\n", bg_version(), bg_last_error());
    bg_record_free(rec);
    return 0;
}
