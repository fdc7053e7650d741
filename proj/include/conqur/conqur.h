/* C interface to the ConQUR lab. Every function returns a conqur_status;
 * on failure conqur_last_error() describes the problem (thread-local,
 * valid until the next call on the same thread). Strings returned through
 * out-parameters are owned by the caller and released with
 * conqur_string_free. */
#ifndef CONQUR_CONQUR_H
#define CONQUR_CONQUR_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define CONQUR_API __declspec(dllexport)
#else
#define CONQUR_API __attribute__((visibility("default")))
#endif

typedef enum conqur_status {
    CONQUR_OK = 0,
    CONQUR_E_ARGUMENT = 1,
    CONQUR_E_PARSE = 2,
    CONQUR_E_VALIDATION = 3,
    CONQUR_E_SIZE = 4,
    CONQUR_E_NUMERIC = 5,
    CONQUR_E_CONVERGENCE = 6,
    CONQUR_E_IO = 7,
    CONQUR_E_INTERNAL = 8
} conqur_status;

typedef struct conqur_config conqur_config;
typedef struct conqur_record conqur_record;
typedef struct conqur_mdp conqur_mdp;

CONQUR_API const char* conqur_last_error(void);
CONQUR_API const char* conqur_status_name(conqur_status status);
CONQUR_API const char* conqur_version(void);
CONQUR_API void conqur_string_free(char* s);

/* Experiment configuration. */
CONQUR_API conqur_status conqur_config_load(const char* path, conqur_config** out);
CONQUR_API conqur_status conqur_config_from_string(const char* text, conqur_config** out);
/* kind: demo-delusion, baseline, penalized, multi-baseline, conqur, verify, compare */
CONQUR_API conqur_status conqur_config_set_kind(conqur_config* cfg, const char* kind);
CONQUR_API conqur_status conqur_config_set_seed(conqur_config* cfg, uint64_t seed);
CONQUR_API conqur_status conqur_config_set_output_dir(conqur_config* cfg, const char* dir);
CONQUR_API conqur_status conqur_config_set_threads(conqur_config* cfg, int threads);
/* Canonical text with every field filled. */
CONQUR_API conqur_status conqur_config_to_string(const conqur_config* cfg, char** out);
CONQUR_API void conqur_config_free(conqur_config* cfg);

/* Runs the experiment. With write_outputs != 0 the artifacts, summary.json
 * and metadata.json are written to the configured output directory. */
CONQUR_API conqur_status conqur_run(const conqur_config* cfg, int write_outputs, conqur_record** out);
CONQUR_API conqur_status conqur_record_best_value(const conqur_record* rec, double* out);
CONQUR_API conqur_status conqur_record_transitions(const conqur_record* rec, int64_t* out);
CONQUR_API conqur_status conqur_record_summary_json(const conqur_record* rec, char** out);
/* Reads a summary.json written by a previous run. */
CONQUR_API conqur_status conqur_record_load(const char* summary_path, conqur_record** out);
CONQUR_API void conqur_record_free(conqur_record* rec);

/* Improvement report of conqur over baseline as JSON; when csv_path is not
 * NULL the per-seed table is written there. */
CONQUR_API conqur_status conqur_compare(const conqur_record* baseline, const conqur_record* conqur,
                                        const char* csv_path, char** out_json);

/* MDP documents. */
CONQUR_API conqur_status conqur_mdp_load(const char* path, conqur_mdp** out);
/* name: "delusion-chain" */
CONQUR_API conqur_status conqur_mdp_builtin(const char* name, conqur_mdp** out);
CONQUR_API conqur_status conqur_mdp_random(int n_states, int n_actions, int feature_dim, uint64_t seed,
                                           conqur_mdp** out);
CONQUR_API conqur_status conqur_mdp_shape(const conqur_mdp* mdp, int* n_states, int* n_actions, int* dim);
/* Newline-separated validation messages; empty when valid. */
CONQUR_API conqur_status conqur_mdp_validate(const conqur_mdp* mdp, char** out);
CONQUR_API conqur_status conqur_mdp_save(const conqur_mdp* mdp, const char* path);
/* Value of the best greedy-representable policy; policy_out (n_states
 * entries) may be NULL. Needs features. */
CONQUR_API conqur_status conqur_mdp_best_representable(const conqur_mdp* mdp, double* value, int* policy_out);
/* Value of the unconstrained optimum (value iteration). */
CONQUR_API conqur_status conqur_mdp_optimal_value(const conqur_mdp* mdp, double* value);
CONQUR_API void conqur_mdp_free(conqur_mdp* mdp);

#ifdef __cplusplus
}
#endif

#endif
