#include <stdio.h>
#include <stdlib.h>
#include <math.h>
#include "qsmooth.h"

int main(void) {
    QsConfig *cfg = NULL;
    if (qs_config_new("classical-z", &cfg) != QS_OK) return 10;
    if (qs_config_set(cfg, "dt", "0.01") != QS_OK) return 11;
    if (qs_config_set(cfg, "gamma", "fast") != QS_ERR_CONFIG) return 12;
    if (qs_last_error_message() == NULL) return 13;

    QsResult *res = NULL;
    if (qs_run(cfg, &res) != QS_OK) return 14;
    size_t rows = 0, cols = 0;
    if (qs_result_dataset_shape(res, 0, &rows, &cols) != QS_OK || cols != 3) return 15;
    double *v = malloc(rows * cols * sizeof(double));
    if (qs_result_copy_values(res, 0, v, rows * cols) != QS_OK) return 16;
    double last = v[rows * cols - 1];
    printf("%s %s rows=%zu wp_S(0-)=%.6f\n", qs_result_dataset_name(res, 0),
           qs_result_column_name(res, 0, 2), rows, last);
    free(v);
    qs_result_free(res);
    qs_config_free(cfg);
    return fabs(last - 1.0) < 1e-6 ? 0 : 17;
}
