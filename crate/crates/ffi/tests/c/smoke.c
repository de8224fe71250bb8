#include <math.h>
#include <stdio.h>
#include <string.h>

#include "sefdi.h"

static const char *CASE =
    "{\"buses\": [{\"id\": 1}, {\"id\": 2}, {\"id\": 3, \"ref\": true}],"
    " \"branches\": [{\"from\": 1, \"to\": 2, \"r\": 0, \"x\": 0.2},"
    "                {\"from\": 1, \"to\": 3, \"r\": 0, \"x\": 0.4},"
    "                {\"from\": 3, \"to\": 2, \"r\": 0, \"x\": 0.25}],"
    " \"measurements\": [{\"kind\": \"flow_p\", \"from\": 1, \"to\": 2, \"sigma\": 0.01},"
    "                    {\"kind\": \"flow_p\", \"from\": 1, \"to\": 3, \"sigma\": 0.01},"
    "                    {\"kind\": \"flow_p\", \"from\": 3, \"to\": 2, \"sigma\": 0.01}]}";

int main(void) {
    SefdiCase *c = NULL;
    if (sefdi_case_parse(CASE, &c) != SEFDI_OK) {
        fprintf(stderr, "parse: %s\n", sefdi_last_error_message());
        return 1;
    }
    size_t m = 0, k = 0;
    sefdi_case_dims(c, &m, &k);
    double z[3] = {0.62, 0.06, 0.37};
    double x[2], sq;
    if (m != 3 || k != 2 || sefdi_estimate_dc(c, z, m, x, k, &sq, NULL) != SEFDI_OK) return 2;
    if (fabs(x[0] - 0.0285714) > 1e-6 || fabs(x[1] + 0.0942857) > 1e-6) return 3;

    double shift[2] = {0.01, 0.04}, a[3];
    int32_t stealthy = 0;
    if (sefdi_craft_attack(c, shift, 2, a, 3) != SEFDI_OK) return 4;
    if (sefdi_verify_stealth(c, a, 3, &stealthy) != SEFDI_OK || stealthy != 1) return 5;
    if (sefdi_estimate_dc(c, z, 2, x, k, NULL, NULL) != SEFDI_ERR_LENGTH) return 6;
    if (strlen(sefdi_last_error_message()) == 0) return 7;

    sefdi_case_free(c);
    printf("ok %s\n", sefdi_version());
    return 0;
}
