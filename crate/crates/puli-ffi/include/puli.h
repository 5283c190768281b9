/* C ABI for the puli learning-to-intervene engine.
 *
 * Conventions:
 *  - Functions return PuliStatus; outputs go through out-pointers.
 *  - Strings returned through out-pointers are heap-allocated and must be
 *    released with puli_string_free.
 *  - Handles are freed with their matching *_free function; NULL is a no-op.
 *  - On any non-Ok status, puli_last_error() returns a thread-local message
 *    (free it with puli_string_free), or NULL if none.
 *
 * Maintained by hand to match src/lib.rs; regenerate with cbindgen where
 * available (see cbindgen.toml).
 */

#ifndef PULI_H
#define PULI_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum PuliStatus {
  PULI_STATUS_OK = 0,
  PULI_STATUS_NULL_ARGUMENT = 1,
  PULI_STATUS_INVALID_UTF8 = 2,
  PULI_STATUS_IO = 3,
  PULI_STATUS_PARSE = 4,
  PULI_STATUS_INVALID_ARGUMENT = 5,
  PULI_STATUS_BACKEND = 6,
  PULI_STATUS_PANIC = 7,
} PuliStatus;

/* Opaque handles. */
typedef struct PuliCorpus PuliCorpus;
typedef struct PuliArtifacts PuliArtifacts;
typedef struct PuliSession PuliSession;

/* Gate selection for puli_session_new. */
#define PULI_GATE_OBSERVER 0
#define PULI_GATE_COORDINATOR 1
#define PULI_GATE_SILENT 2

/* Library version as a static NUL-terminated string; do not free. */
const char *puli_version(void);

/* Message for the last error on this thread, or NULL. Free the result with
 * puli_string_free. */
char *puli_last_error(void);

/* Frees a string returned by this library. NULL is a no-op. */
void puli_string_free(char *ptr);

/* Corpus handling. */
PuliStatus puli_corpus_load(const char *path, PuliCorpus **out);
void puli_corpus_free(PuliCorpus *corpus);
PuliStatus puli_corpus_stats_json(const PuliCorpus *corpus, char **out);

/* Text-overlap metrics under the engine's shared tokenizer. */
PuliStatus puli_rouge1(const char *candidate, const char *reference, double *out);
PuliStatus puli_bleu1(const char *candidate, const char *reference, double *out);

/* Trained artifacts (policy checkpoint + surrogate backends) from a training
 * output directory. */
PuliStatus puli_artifacts_load(const char *dir, PuliArtifacts **out);
void puli_artifacts_free(PuliArtifacts *artifacts);

/* Streaming sessions. proposal_json carries the project proposal as JSON
 * with fields id, goal, background, datasets_desc, golden_conclusion
 * (optional), roles. Sessions are single-threaded. */
PuliStatus puli_session_new(const PuliArtifacts *artifacts,
                            const char *proposal_json,
                            int gate,
                            PuliSession **out);

/* Feeds the next round (arrival order). On success *out_events_json holds a
 * JSON array of this round's events (round_arrived, decision, optional
 * intervention, latency). */
PuliStatus puli_session_push_round(PuliSession *session,
                                   const char *role,
                                   const char *text,
                                   char **out_events_json);

/* Interventions injected so far, or -1 for a NULL session. */
int puli_session_intervention_count(const PuliSession *session);

void puli_session_free(PuliSession *session);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* PULI_H */
