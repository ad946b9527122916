#include <math.h>
#include <stdio.h>
#include <string.h>

#include "sis.h"

#define CHECK(cond)                                                   \
    do {                                                              \
        if (!(cond)) {                                                \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__,   \
                    #cond, sis_last_error_message());                 \
            return 1;                                                 \
        }                                                             \
    } while (0)

int main(void) {
    SisParams p = {1.0, 20.0, 20.0, 0.11, 100.0, 50.0};
    SisModel *model = NULL;
    CHECK(sis_model_new(&p, &model) == SIS_STATUS_OK);

    SisRegime r;
    CHECK(sis_model_classify(model, &r) == SIS_STATUS_OK);
    CHECK(r.theorem_case == SIS_THEOREM_CASE_ONE);
    CHECK(fabs(r.r0s - 0.9875) < 1e-12);
    CHECK(r.conjecture_region);

    double d;
    CHECK(sis_model_drift(model, 100.0, &d) == SIS_STATUS_OK);
    CHECK(fabs(d + 4000.0) < 1e-9);
    CHECK(sis_model_drift(model, 150.0, &d) == SIS_STATUS_OUT_OF_RANGE);

    SisSchemeConfig cfg = sis_scheme_config_default(2.0);
    SisPath *path = NULL;
    CHECK(sis_path_simulate(model, &cfg, 7, 0, &path) == SIS_STATUS_OK);
    size_t n = 0;
    CHECK(sis_path_sample_count(path, &n) == SIS_STATUS_OK && n > 2);
    SisSample s;
    CHECK(sis_path_sample(path, n - 1, &s) == SIS_STATUS_OK);
    CHECK(s.i > 0.0 && s.i < 100.0 && fabs(s.t - 2.0) < 1e-12);
    CHECK(sis_path_sample(path, n, &s) == SIS_STATUS_OUT_OF_RANGE);
    sis_path_free(path);

    SisEnsemble *ens = NULL;
    CHECK(sis_ensemble_run(model, &cfg, 8, 3, 2, &ens) == SIS_STATUS_OK);
    SisEnsembleSummary sum;
    CHECK(sis_ensemble_summary(ens, &sum) == SIS_STATUS_OK);
    CHECK(sum.n_paths == 8);
    char *json = NULL;
    CHECK(sis_ensemble_to_json(ens, &json) == SIS_STATUS_OK);
    CHECK(json[0] == '{' && strstr(json, "\"slope_mean\"") != NULL);
    sis_string_free(json);
    sis_ensemble_free(ens);
    sis_model_free(model);

    SisParams bad = {1.0, 20.0, 20.0, 0.11, 100.0, 150.0};
    SisModel *none = NULL;
    CHECK(sis_model_new(&bad, &none) == SIS_STATUS_INVALID_ARGUMENT && none == NULL);
    CHECK(strlen(sis_last_error_message()) > 0);
    CHECK(sis_model_classify(NULL, &r) == SIS_STATUS_NULL_POINTER);

    printf("ok %s\n", sis_version());
    return 0;
}
