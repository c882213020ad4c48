#include <stdio.h>
#include <string.h>

#include "msmoments.h"

int main(void) {
    MsmModel *model = NULL;
    if (msm_model_load("disability_g82m", &model) != MSM_STATUS_OK) {
        return 1;
    }
    if (msm_model_num_states(model) != 3 || msm_model_num_contracts(model) != 3) {
        return 2;
    }
    double p[9];
    MsmNumerics numerics = msm_numerics_default();
    if (msm_transition_probabilities(model, 0.0, 70.0, &numerics, p, 9) != MSM_STATUS_OK) {
        return 3;
    }
    double cov[9];
    if (msm_covariance(model, 0, 0.0, 70.0, true, NULL, cov, 9) != MSM_STATUS_OK) {
        return 4;
    }
    if (!(cov[1] < 0.0)) {
        return 5;
    }
    double small[2];
    if (msm_transition_probabilities(model, 0.0, 70.0, NULL, small, 2) != MSM_STATUS_BUFFER_TOO_SMALL) {
        return 6;
    }
    char msg[256];
    size_t n = msm_last_error_message(msg, sizeof msg);
    if (n == 0 || strstr(msg, "buffer") == NULL) {
        return 7;
    }
    msm_model_free(model);
    printf("%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    return 0;
}
