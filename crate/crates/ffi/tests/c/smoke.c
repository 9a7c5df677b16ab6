#include <math.h>
#include <stdio.h>
#include "d2dsim.h"

int main(void) {
    D2dProfiles *p = NULL;
    if (d2d_profiles_calibrate_default(1, &p) != D2D_STATUS_OK) {
        return 1;
    }
    double range = 0.0;
    if (d2d_range_at_threshold(p, D2D_LINK_D2D, D2D_COMPOSITION_SINGLE_HOP, 90.0, 1, &range) != D2D_STATUS_OK) {
        return 2;
    }
    double rssi = 0.0;
    if (d2d_mean_rssi(p, D2D_LINK_D2D, 0.01, &rssi) != D2D_STATUS_DOMAIN) {
        return 3;
    }
    char *msg = d2d_last_error();
    if (msg == NULL) {
        return 4;
    }
    d2d_string_free(msg);
    d2d_profiles_free(p);
    printf("%.2f\n", range);
    return fabs(range - 30.0) < 0.1 ? 0 : 5;
}
