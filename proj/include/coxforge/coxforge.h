/* C interface to the coxforge library. All functions are safe to call from
 * multiple threads on distinct handles. Structured inputs and outputs are
 * JSON strings; strings returned through `char**` must be released with
 * cf_string_free. */
#ifndef COXFORGE_H
#define COXFORGE_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CF_API __declspec(dllexport)
#else
#define CF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cf_status {
    CF_OK = 0,
    CF_ERR_IO = 1,
    CF_ERR_CONFIG = 2, /* also dimension and parameter errors */
    CF_ERR_NUMERIC = 3 /* also degenerate data and non-convergence */
} cf_status;

typedef struct cf_dataset cf_dataset;
typedef struct cf_fit cf_fit;

/* Message of the last failing call on this thread ("" if none). */
CF_API const char* cf_last_error(void);
CF_API const char* cf_version(void);
CF_API void cf_string_free(char* s);

/* 0 means hardware concurrency. */
CF_API void cf_set_threads(int threads);
/* 0 quiet, 1 info, 2 debug. Overrides COXFORGE_LOG. */
CF_API void cf_set_log_level(int level);

/* Datasets. `options_json` may be NULL or hold "grid" (object) and
 * "threshold" ("otsu" or a number in (0,1)). `summary_json` may be NULL. */
CF_API cf_status cf_dataset_prepare(const char* image_dir, const char* accidentals_csv, const char* options_json,
                                    cf_dataset** out, char** summary_json);
CF_API cf_status cf_dataset_load(const char* path, cf_dataset** out);
CF_API cf_status cf_dataset_save(const cf_dataset* ds, const char* path);
CF_API size_t cf_dataset_num_shoes(const cf_dataset* ds);
CF_API long cf_dataset_total_accidentals(const cf_dataset* ds);
CF_API void cf_dataset_free(cf_dataset* ds);

/* Synthetic data. Config keys: nx, ny, shoes, model, seed, generator,
 * tau_shoe, tau_smooth, tau_sv (array), intercept_offset, contact_effect.
 * `truth_json` may be NULL. */
CF_API cf_status cf_simulate(const char* config_json, cf_dataset** out, char** truth_json);

/* Sobel magnitude of an image (PGM or CSV). With a non-NULL `grid_json`
 * the image is first cropped, reflected (side "right") and coarsened. */
CF_API cf_status cf_gradient_image(const char* image_path, const char* grid_json, const char* side,
                                   const char* out_csv);

/* Fitting. `model` is a builtin name or a JSON spec; `prior_json` and
 * `config_json` may be NULL. On non-convergence the handle is still
 * returned (with diagnostics) together with CF_ERR_NUMERIC. */
CF_API cf_status cf_fit_run(const cf_dataset* ds, const char* model, const char* prior_json, const char* strategy,
                            const char* config_json, uint64_t seed, cf_fit** out);
CF_API cf_status cf_fit_load(const char* path, cf_fit** out);
CF_API cf_status cf_fit_save(const cf_fit* fit, const char* path, int include_metadata);
CF_API int cf_fit_converged(const cf_fit* fit);
/* smooth.csv/.pgm/.json and sv_<bits>.csv/.pgm/.json for each spatial block. */
CF_API cf_status cf_fit_export_heatmaps(const cf_fit* fit, const char* out_dir);
CF_API void cf_fit_free(cf_fit* fit);

/* Writes q_<shoe_id>.csv/.pgm/.json for one shoe (or all when NULL). */
CF_API cf_status cf_predict(const cf_fit* fit, const cf_dataset* ds, const char* shoe_id, const char* out_dir);

/* Per-shoe metric table (shoe_id,n_accidentals,metric); `summary_json` may be NULL. */
CF_API cf_status cf_evaluate(const cf_fit* fit, const cf_dataset* ds, const char* out_csv, char** summary_json);

/* Cross-validation. `models` is a comma-separated list of builtin names.
 * Writes cv_table.csv, per_shoe.csv, pairwise.json and folds.json. */
CF_API cf_status cf_cv_run(const cf_dataset* ds, const char* models, int folds, uint64_t seed, int pair_folds,
                           const char* strategy, const char* prior_json, const char* out_dir, char** summary_json);

#ifdef __cplusplus
}
#endif

#endif
