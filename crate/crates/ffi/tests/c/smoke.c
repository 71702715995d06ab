#include <math.h>
#include <stdio.h>
#include "conerank.h"

#define CHECK(call)                                                        \
  do {                                                                     \
    CrStatus s_ = (call);                                                  \
    if (s_ != CR_STATUS_OK) {                                              \
      fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_, conerank_last_error()); \
      return 1;                                                            \
    }                                                                      \
  } while (0)

static const char *TRAIN =
    "2 qid:1 1:1.0 2:0.1 3:0.0\n"
    "1 qid:1 1:0.5 2:0.2 3:0.1\n"
    "0 qid:1 1:0.0 2:0.1 3:0.3\n"
    "1 qid:2 1:0.9 2:0.0 3:0.2\n"
    "0 qid:2 1:0.1 2:0.3 3:0.1\n";

int main(void) {
  CrDataset *ds = NULL;
  CHECK(conerank_dataset_parse(TRAIN, &ds));
  size_t dim = 0, queries = 0;
  CHECK(conerank_dataset_shape(ds, &dim, &queries));
  if (dim != 3 || queries != 2) return 2;

  CrTrainConfig cfg = conerank_train_config_default(dim);
  cfg.k = 2;
  cfg.max_outer_epochs = 5;
  CrModel *model = NULL;
  double risk = NAN;
  CHECK(conerank_train(ds, &cfg, &model, &risk));
  if (!(risk >= 0.0)) return 3;

  const double docs[6] = {1.0, 0.1, 0.0, 0.0, 0.1, 0.3};
  size_t order[2];
  uint32_t votes[2];
  CHECK(conerank_rank(model, docs, 2, 3, order, votes));
  if (order[0] + order[1] != 1 || votes[0] + votes[1] != 1) return 4;

  if (conerank_rank(model, docs, 3, 2, order, NULL) != CR_STATUS_INVALID_ARGUMENT) return 5;

  const uint32_t labels[4] = {1, 0, 1, 0};
  if (fabs(conerank_average_precision(labels, 4) - 5.0 / 6.0) > 1e-15) return 6;

  conerank_model_free(model);
  conerank_dataset_free(ds);
  printf("ok %s\n", conerank_version());
  return 0;
}
