#ifndef GAPL_GAPL_H
#define GAPL_GAPL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(GAPL_BUILDING)
#    define GAPL_API __declspec(dllexport)
#  else
#    define GAPL_API __declspec(dllimport)
#  endif
#else
#  define GAPL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every fallible call returns a status; on failure gapl_last_error() holds a
 * message for the calling thread until its next failing call. */
typedef enum gapl_status {
    GAPL_OK = 0,
    GAPL_ERR_ARGUMENT = 1,
    GAPL_ERR_SHAPE = 2,
    GAPL_ERR_DIVERGENCE = 3,
    GAPL_ERR_LABEL_RANGE = 4,
    GAPL_ERR_FORMAT = 5,
    GAPL_ERR_SPEC_MISMATCH = 6,
    GAPL_ERR_INSUFFICIENT_TRACE = 7,
    GAPL_ERR_MISSING_CHECKPOINT = 8,
    GAPL_ERR_CONFIG = 9,
    GAPL_ERR_IO = 10,
    GAPL_ERR_INTERNAL = 99
} gapl_status;

GAPL_API const char* gapl_version(void);
GAPL_API const char* gapl_status_name(gapl_status status);
GAPL_API const char* gapl_last_error(void);

/* Strings returned through char** out-parameters are heap allocated. */
GAPL_API void gapl_string_free(char* s);

/* ---- models ---- */

typedef struct gapl_model gapl_model;

/* widths = {input, hidden..., classes} */
GAPL_API gapl_status gapl_model_mlp(const size_t* widths, size_t n_widths, gapl_model** out);
GAPL_API gapl_status gapl_model_small_cnn(const size_t chw[3], const size_t* channels, size_t n_channels,
                                          const size_t* hidden, size_t n_hidden, size_t n_classes,
                                          gapl_model** out);
/* model.json as written by gapl_train */
GAPL_API gapl_status gapl_model_load(const char* path, gapl_model** out);
GAPL_API gapl_status gapl_model_save(const gapl_model* model, const char* path);
GAPL_API size_t gapl_model_param_count(const gapl_model* model);
GAPL_API size_t gapl_model_n_classes(const gapl_model* model);
/* 64 hex characters plus terminator */
GAPL_API gapl_status gapl_model_digest(const gapl_model* model, char hex[65]);
GAPL_API void gapl_model_free(gapl_model* model);

/* ---- parameter vectors ---- */

typedef struct gapl_params gapl_params;

GAPL_API gapl_status gapl_params_init(const gapl_model* model, uint64_t seed, gapl_params** out);
GAPL_API gapl_status gapl_params_load(const char* checkpoint_path, gapl_params** out);
GAPL_API gapl_status gapl_params_save(const gapl_params* params, const char* checkpoint_path);
/* (1 - lambda) a + lambda b */
GAPL_API gapl_status gapl_params_interpolate(const gapl_params* a, const gapl_params* b, double lambda,
                                             gapl_params** out);
GAPL_API size_t gapl_params_size(const gapl_params* params);
GAPL_API const double* gapl_params_data(const gapl_params* params);
GAPL_API void gapl_params_free(gapl_params* params);

/* ---- datasets ---- */

typedef struct gapl_dataset gapl_dataset;

typedef struct gapl_blobs_options {
    uint64_t seed;
    size_t n_classes;
    size_t n_per_class;
    size_t dim;
    double spread;
    /* Half-width of the box the class means are drawn from. Only read when
     * has_mean_scale is nonzero; otherwise the box is 4 * spread. */
    double mean_scale;
    int has_mean_scale;
} gapl_blobs_options;

GAPL_API void gapl_blobs_options_init(gapl_blobs_options* opts);
GAPL_API gapl_status gapl_dataset_blobs(const gapl_blobs_options* opts, gapl_dataset** train, gapl_dataset** test);
GAPL_API gapl_status gapl_dataset_load_raw(const char* features_path, const char* labels_path, const size_t* shape,
                                           size_t rank, size_t count, size_t n_classes, gapl_dataset** out);
GAPL_API size_t gapl_dataset_size(const gapl_dataset* ds);
GAPL_API void gapl_dataset_free(gapl_dataset* ds);

GAPL_API gapl_status gapl_evaluate(const gapl_model* model, const gapl_params* params, const gapl_dataset* ds,
                                   double* loss, double* accuracy);

/* ---- stability-gap analysis ---- */

typedef struct gapl_gap_options {
    size_t baseline_evals;    /* K */
    size_t recovery_window;   /* W */
    double tolerance;
    uint64_t analysis_window; /* iterations after the boundary */
    uint64_t boundary;        /* 0: last task change found in the trace */
} gapl_gap_options;

typedef struct gapl_gap_metrics {
    double pre_switch_acc;
    double min_acc;
    double gap_depth;
    uint64_t min_iteration;      /* offset from the boundary */
    uint64_t recovery_iteration; /* offset from the boundary, 0 when not recovered */
    int recovered;
} gapl_gap_metrics;

GAPL_API void gapl_gap_options_init(gapl_gap_options* opts);
GAPL_API gapl_status gapl_gap_from_trace(const char* trace_path, const gapl_gap_options* opts,
                                         gapl_gap_metrics* out);

/* ---- commands ---- */

/* Writes train/test features and labels as raw byte files into out_dir.
 * metadata_json (optional) receives shape, counts and quantization range. */
GAPL_API gapl_status gapl_gen_data(const gapl_blobs_options* opts, const char* out_dir, char** metadata_json);

/* Runs an experiment config. out_dir overrides the config's output when
 * non-null; n_seeds > 0 replaces its seed list; threads > 0 its thread count. */
GAPL_API gapl_status gapl_train(const char* config_path, const char* out_dir, const uint64_t* seeds,
                                size_t n_seeds, unsigned threads, char** summary);

/* key=value document for one trace, or per-trace plus median for several.
 * all_recovered is set to 0 when any trace fails to recover. */
GAPL_API gapl_status gapl_gap_report(const char* const* trace_paths, size_t n_traces, const gapl_gap_options* opts,
                                     char** document, int* all_recovered);

typedef struct gapl_lmc_options {
    const char* checkpoint_a; /* lambda = 0 */
    const char* checkpoint_b; /* lambda = 1 */
    /* Model description; default: model.json of the run owning checkpoint_a. */
    const char* model_path;
    /* Evaluation data: the test split of an experiment config, or the
     * test_*.bin files of a gen-data directory. Default: the config.json of
     * the run owning checkpoint_a. */
    const char* config_path;
    const char* data_dir;
    /* Checkpoint directory whose stored trajectory between the two endpoints
     * is evaluated and overlaid; optional. */
    const char* sgd_path_dir;
    const char* out_dir;
    double step;
    unsigned threads;
} gapl_lmc_options;

GAPL_API void gapl_lmc_options_init(gapl_lmc_options* opts);
GAPL_API gapl_status gapl_lmc(const gapl_lmc_options* opts, char** summary);

/* SVG figures for a seed directory or every seed of a run directory.
 * out_dir may be null to write next to the traces. */
GAPL_API gapl_status gapl_report(const char* run_dir, const char* out_dir, char** written);

#ifdef __cplusplus
}
#endif

#endif
