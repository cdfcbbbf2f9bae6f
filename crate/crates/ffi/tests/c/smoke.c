#include <stdio.h>
#include <string.h>
#include "iatc.h"

#define CHECK(x)                                                              \
  do {                                                                        \
    IatcStatus s_ = (x);                                                      \
    if (s_ != IATC_STATUS_OK) {                                               \
      char m_[512];                                                           \
      iatc_last_error(m_, sizeof m_);                                         \
      fprintf(stderr, "%s -> %s: %s\n", #x, iatc_status_name(s_), m_);       \
      return 1;                                                               \
    }                                                                         \
  } while (0)

int main(void) {
  IatcScenario *h = NULL;
  CHECK(iatc_scenario_reference(&h));
  size_t n = 0;
  CHECK(iatc_node_count(h, &n));
  if (n != 9) return 2;

  double beta[9], bound[9];
  IatcLossBreakdown rows[9];
  CHECK(iatc_bounds(h, bound, n));
  CHECK(iatc_ia_dtc(h, beta, n, NULL, NULL));
  CHECK(iatc_evaluate(h, beta, n, rows, n));
  for (size_t i = 0; i < n; i++) {
    if (beta[i] < 0.0 || beta[i] > bound[i]) return 3;
    printf("%u %.6f %.6f\n", rows[i].node_id, rows[i].beta, rows[i].r_n);
  }

  beta[0] = bound[0] + 1.0;
  if (iatc_evaluate(h, beta, n, rows, n) != IATC_STATUS_VALIDATION) return 4;
  char msg[256];
  size_t len = iatc_last_error(msg, sizeof msg);
  if (len == 0 || strstr(msg, "node 1") == NULL) return 5;

  iatc_scenario_free(h);
  return 0;
}
