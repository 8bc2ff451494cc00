/* Exercises the C interface from plain C. */
#include <math.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "reflact.h"

static int failures = 0;

#define EXPECT(cond)                                                   \
  do {                                                                 \
    if (!(cond)) {                                                     \
      fprintf(stderr, "%s:%d: expected %s (%s)\n", __FILE__, __LINE__, \
              #cond, rf_last_error());                                 \
      ++failures;                                                      \
    }                                                                  \
  } while (0)

int main(void) {
  rf_task* task = NULL;
  char* text = NULL;

  EXPECT(rf_task_generate(3, "put", "binary", &task) == RF_OK);
  EXPECT(rf_task_to_json(task, &text) == RF_OK);
  EXPECT(text && strstr(text, "\"task_id\":\"household-put-000003\"") != NULL);

  rf_task* copy = NULL;
  EXPECT(rf_task_from_json(text, &copy) == RF_OK);
  char* again = NULL;
  EXPECT(rf_task_to_json(copy, &again) == RF_OK);
  EXPECT(again && strcmp(text, again) == 0);
  rf_free(again);
  rf_free(text);
  rf_task_free(copy);

  EXPECT(rf_task_generate(1, "examine", "dense", &copy) == RF_ERR_UNSUPPORTED);
  EXPECT(strncmp(rf_last_error(), "UnsupportedTaskType", 19) == 0);
  EXPECT(rf_task_generate(1, "put", NULL, &copy) == RF_ERR_INVALID_ARGUMENT);

  rf_env* env = NULL;
  EXPECT(rf_env_new(task, &env) == RF_OK);
  EXPECT(rf_env_reset(env, &text) == RF_OK);
  EXPECT(text && strstr(text, "Your task is to") != NULL);
  rf_free(text);
  EXPECT(rf_env_step(env, "fly to the moon", &text) == RF_OK);
  EXPECT(text && strstr(text, "Nothing happens.") != NULL);
  rf_free(text);
  EXPECT(rf_env_valid_actions(env, &text) == RF_OK);
  EXPECT(text && text[0] == '[');
  rf_free(text);
  rf_env_free(env);

  rf_config* cfg = NULL;
  EXPECT(rf_config_load(NULL, "{\"backend\":{\"kind\":\"scripted\"}}", &cfg) == RF_OK);
  EXPECT(rf_run_episode(cfg, task, "reflact", &text) == RF_OK);
  EXPECT(text && strstr(text, "\"terminated_by\":\"goal\"") != NULL);
  rf_free(text);
  rf_config_free(cfg);

  EXPECT(rf_config_load(NULL, "{\"bogus\":1}", &cfg) == RF_ERR_CONFIG);
  EXPECT(strstr(rf_last_error(), "bogus") != NULL);

  double p[4] = {0.25, 0.25, 0.25, 0.25};
  double h = 0.0;
  EXPECT(rf_entropy(p, 4, &h) == RF_OK);
  EXPECT(fabs(h - log(4.0)) < 1e-9);
  double bad[2] = {0.5, 0.4};
  EXPECT(rf_entropy(bad, 2, &h) == RF_ERR_INVALID_ARGUMENT);

  EXPECT(rf_verify(0, 5, "clean", "binary", 40, &text) == RF_OK);
  EXPECT(text && strstr(text, "\"ok\":true") != NULL);
  rf_free(text);

  EXPECT(rf_network_attempts() == 0);
  EXPECT(strcmp(rf_status_name(RF_ERR_BACKEND), "backend") == 0);
  rf_task_free(task);

  if (failures) {
    fprintf(stderr, "%d C API check(s) failed\n", failures);
    return 1;
  }
  printf("C API smoke test passed\n");
  return 0;
}
