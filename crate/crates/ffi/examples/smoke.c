#include <stdio.h>
#include <stdlib.h>
#include "rcstruct.h"

static const char *CONFIG =
    "{\"nt\":2,\"nr\":2,\"nsc\":16,\"ncp\":4,\"np\":4,\"nd\":4,\"modulation\":4,\"lc\":2,\"decay\":1.0,"
    "\"ebn0_db\":[10.0],\"detectors\":[\"lmmse\"],\"subframes_per_point\":2,\"seed\":1}";

int main(void) {
    RcsConfig *cfg = NULL;
    RcsSweep *sweep = NULL;
    size_t needed = 0;
    char *csv;
    double raw;
    const double bers[2] = {0.1, 0.05};
    const uint32_t bps[2] = {2, 4};

    if (rcs_config_from_json("{", &cfg) != RCS_STATUS_INVALID_CONFIG || rcs_last_error() == NULL) {
        return 1;
    }
    if (rcs_config_from_json(CONFIG, &cfg) != RCS_STATUS_OK) {
        fprintf(stderr, "%s\n", rcs_last_error());
        return 2;
    }
    rcs_config_set_timing(cfg, false);
    if (rcs_run_sweep(cfg, &sweep) != RCS_STATUS_OK || rcs_sweep_row_count(sweep) != 1) {
        return 3;
    }
    rcs_sweep_csv(sweep, NULL, 0, &needed);
    csv = malloc(needed);
    if (rcs_sweep_csv(sweep, csv, needed, &needed) != RCS_STATUS_OK) {
        return 4;
    }
    fputs(csv, stdout);
    free(csv);
    if (rcs_raw_ber(bers, bps, 2, &raw) != RCS_STATUS_OK || raw < 0.0666 || raw > 0.0667) {
        return 5;
    }
    rcs_sweep_free(sweep);
    rcs_config_free(cfg);
    return 0;
}
