#ifndef STEERLAB_H
#define STEERLAB_H

/* C interface to the steering lab: a session owns one configuration and one
 * output directory; every pipeline stage is a single call that returns an
 * error code and leaves a message readable via slb_last_error. All heavy
 * state (models, checkpoints) lives behind the opaque handle. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct slb_session slb_session;

/* Return codes; also the intended process exit codes. */
enum {
    SLB_OK = 0,
    SLB_ERR = 1,         /* internal/contract/io failure */
    SLB_ERR_CONFIG = 2,  /* bad key, bad value, missing prerequisite */
    SLB_ERR_NUMERIC = 3, /* non-finite loss, degenerate direction, ... */
    SLB_ERR_GATE = 4     /* a validity gate failed; results would be junk */
};

/* Session with default configuration; NULL only on allocation failure. */
slb_session* slb_session_new(void);
void slb_session_free(slb_session* s);

/* Configuration. Keys are dotted (e.g. "steering.k"); unknown keys are
 * config errors. slb_get copies the value (NUL-terminated, truncated to
 * buflen) and fails on unknown keys. */
int slb_load_config(slb_session* s, const char* path);
int slb_set(slb_session* s, const char* key, const char* value);
int slb_set_kv(slb_session* s, const char* assignment); /* "key=value" */
int slb_get(const slb_session* s, const char* key, char* buf, size_t buflen);

/* Directory receiving checkpoints, fragments, and reports (default "out"). */
int slb_set_out_dir(slb_session* s, const char* dir);

/* Pipeline stages. kind for adapters/sweeps:
 * steering | lora | rslora | rank1 | sidebranch. */
int slb_pretrain(slb_session* s);
int slb_train_adapter(slb_session* s, const char* kind);
int slb_sweep(slb_session* s, const char* kind);
int slb_k_sweep(slb_session* s); /* one steering sweep per eval.k_grid entry */
int slb_report(slb_session* s);
int slb_compare(slb_session* s);
int slb_bench(slb_session* s);
int slb_selftest(slb_session* s);

/* Multiplier that reaches effective scale `eff` under the session's current
 * lora.rank / lora.alpha / lora.mode; written to *out. */
int slb_lora_multiplier_for_effective(slb_session* s, double eff,
                                      double* out);

/* Message from the session's most recent failing call; "" after success.
 * Owned by the session, valid until the next call on it. */
const char* slb_last_error(const slb_session* s);

const char* slb_version(void);

#ifdef __cplusplus
}
#endif

#endif /* STEERLAB_H */
