/* C interface to the reduction engine. All functionality is reachable through
 * a JSON experiment configuration; results come back as a JSON report plus
 * on-disk artifacts. Handles are opaque; every non-OK status leaves a
 * human-readable detail in qpr_last_error() (thread local). */

#ifndef QPREDUCE_H
#define QPREDUCE_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum qpr_status {
  QPR_OK = 0,
  QPR_E_CONFIG = 1,
  QPR_E_DIOPHANTINE_EXIT = 2, /* parameter point outside the straightening set */
  QPR_E_MELNIKOV_EXIT = 3,    /* parameter point outside the Cantor set */
  QPR_E_DIVERGENCE = 4,       /* reduction remainder grew; smallness violated */
  QPR_E_NUMERICAL = 5,
  QPR_E_IO = 6,
  QPR_E_INVALID_ARGUMENT = 7
} qpr_status;

typedef struct qpr_run qpr_run; /* opaque: one completed (or excluded) run */

int qpr_version(void);
const char* qpr_status_name(qpr_status s);
const char* qpr_last_error(void);

/* Parses and validates a config; on success *effective_json_out receives the
 * effective configuration (defaults filled in), to free with qpr_string_free. */
qpr_status qpr_config_validate(const char* config_json, char** effective_json_out);

/* Generated schema reference (fields, types, defaults). */
qpr_status qpr_config_reference(char** text_out);

void qpr_string_free(char* s);

/* Runs one stage of the engine:
 *   "straighten" | "smooth" | "reduce" | "full" | "evolve" | "measure".
 * Later stages imply their prerequisites. A Cantor-set exit produces the
 * matching status AND a run handle whose report carries the offending tuple;
 * *run_out is non-null whenever the configuration itself was valid. */
qpr_status qpr_run_stage(const char* config_json, const char* stage, qpr_run** run_out);

/* JSON run report; pointer owned by the run handle. */
const char* qpr_run_report(const qpr_run* run);

/* Deterministic run identifier (stage + config hash). */
const char* qpr_run_id(const qpr_run* run);

/* Writes report.json and the stage's CSV/JSON artifacts under dir. */
qpr_status qpr_run_write_outputs(const qpr_run* run, const char* dir);

void qpr_run_free(qpr_run* run);

#ifdef __cplusplus
}
#endif

#endif /* QPREDUCE_H */
