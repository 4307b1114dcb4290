#include <stdio.h>
#include <stdlib.h>

#include "biot_dd.h"

#define CHECK(call)                                                           \
  do {                                                                        \
    BiotDdStatus s = (call);                                                  \
    if (s != BIOT_DD_STATUS_OK) {                                             \
      fprintf(stderr, "%s failed (%d): %s\n", #call, (int)s,                  \
              biot_dd_last_error());                                          \
      return 1;                                                               \
    }                                                                         \
  } while (0)

static const char *CONFIG =
    "[problem]\nkind = \"manufactured\"\n"
    "[mesh]\nnx = 4\nny = 4\npx = 2\npy = 2\n"
    "[time]\ndt = 1e-2\nsteps = 2\n";

int main(void) {
  BiotDdConfig *cfg = NULL;
  BiotDdResult *res = NULL;

  if (biot_dd_config_parse("[mesh\n", &cfg) != BIOT_DD_STATUS_CONFIG ||
      biot_dd_last_error() == NULL) {
    fprintf(stderr, "bad toml accepted\n");
    return 1;
  }

  CHECK(biot_dd_config_parse(CONFIG, &cfg));
  CHECK(biot_dd_config_set_scheme(cfg, "ds"));
  CHECK(biot_dd_run(cfg, NULL, &res));

  size_t steps = 0;
  double elast = 0.0, darcy = 0.0, gmres = 0.0, errors[4];
  CHECK(biot_dd_result_steps(res, &steps));
  CHECK(biot_dd_result_mean_iterations(res, BIOT_DD_SOLVER_CG_ELASTICITY, &elast));
  CHECK(biot_dd_result_mean_iterations(res, BIOT_DD_SOLVER_CG_DARCY, &darcy));
  CHECK(biot_dd_result_errors(res, errors));
  if (biot_dd_result_mean_iterations(res, BIOT_DD_SOLVER_GMRES, &gmres) !=
      BIOT_DD_STATUS_NOT_AVAILABLE) {
    fprintf(stderr, "drained split reported GMRES iterations\n");
    return 1;
  }

  size_t len = 0;
  if (biot_dd_result_pressure(res, NULL, 0, &len) != BIOT_DD_STATUS_BUFFER_TOO_SMALL || len != 16) {
    fprintf(stderr, "pressure length %zu\n", len);
    return 1;
  }
  double *p = malloc(len * sizeof *p);
  CHECK(biot_dd_result_pressure(res, p, len, &len));

  printf("version %s steps %zu cg %.1f %.1f p_err %.3e p0 %.3e\n",
         biot_dd_version(), steps, elast, darcy, errors[1], p[0]);
  free(p);
  biot_dd_result_free(res);
  biot_dd_config_free(cfg);
  return steps == 2 && elast > 0.0 && darcy > 0.0 ? 0 : 1;
}
