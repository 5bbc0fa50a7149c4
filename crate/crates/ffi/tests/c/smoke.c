#include <math.h>
#include <stdio.h>
#include "hybrid_osc.h"

#define CHECK(expr)                                                          \
  do {                                                                       \
    if (!(expr)) {                                                           \
      const char *msg = ho_last_error_message();                             \
      fprintf(stderr, "check failed: %s (%s)\n", #expr, msg ? msg : "");     \
      return 1;                                                              \
    }                                                                        \
  } while (0)

int main(void) {
  HoSystem *sys = NULL;
  CHECK(ho_system_new(1, 1, 1, 1, 1, 1, 1, 0.05, &sys) == HO_STATUS_OK);

  HoStability st;
  CHECK(ho_stability(sys, &st) == HO_STATUS_OK);
  CHECK(st.routh_hurwitz_pass && st.min_real_part > 0);

  double lyap[16], closed[16];
  CHECK(ho_steady_covariance(sys, lyap) == HO_STATUS_OK);
  CHECK(ho_closed_form_covariance(sys, closed) == HO_STATUS_OK);
  for (int i = 0; i < 16; i++) {
    CHECK(fabs(lyap[i] - closed[i]) <= 1e-9 * fabs(lyap[0]));
  }

  double t[3] = {0.0, 1.0, 2.0}, g[3];
  CHECK(ho_correlator(sys, HO_METHOD_EXACT, HO_PAIR_Q1Q1, t, 3, g) == HO_STATUS_OK);
  CHECK(fabs(g[0] - lyap[0]) <= 1e-8 * lyap[0]);

  HoSystem *bad = NULL;
  CHECK(ho_system_new(-1, 1, 1, 1, 1, 1, 1, 0.05, &bad) == HO_STATUS_INVALID_PARAMETER);
  CHECK(bad == NULL && ho_last_error_message() != NULL);

  HoCq *cq = NULL;
  CHECK(ho_cq_new(1, 1, 1, 1, 1, 1, 0.1, 0, 1, &cq) == HO_STATUS_OK);
  HoOccupation occ;
  CHECK(ho_cq_occupation(cq, &occ) == HO_STATUS_OK && occ.n >= 0.5);

  ho_cq_free(cq);
  ho_system_free(sys);
  printf("ok %s\n", ho_version());
  return 0;
}
