/*
 * wormloc C API.
 *
 * Head/tail keypoint localization for single-worm micrographs: synthetic
 * data generation, preprocessing, training, evaluation and figure rendering.
 * All objects are opaque handles released with the matching *_free call.
 * Every function returns a wl_status; on failure wl_last_error() holds a
 * one-line message for the calling thread.
 */
#ifndef WORMLOC_H
#define WORMLOC_H

#include <stddef.h>
#include <stdint.h>

#if defined(WL_BUILDING_LIBRARY)
#define WL_API __attribute__((visibility("default")))
#else
#define WL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum wl_status {
  WL_OK = 0,
  WL_ERR_INVALID_ARGUMENT = 1,
  WL_ERR_IO = 2,
  WL_ERR_FORMAT = 3,
  WL_ERR_BAD_MAGIC = 4,
  WL_ERR_UNKNOWN_VERSION = 5,
  WL_ERR_SHAPE_MISMATCH = 6,
  WL_ERR_CORRUPT_FILE = 7,
  WL_ERR_EMPTY_MASK = 8,
  WL_ERR_NUMERIC = 9,
  WL_ERR_INTERNAL = 10
} wl_status;

typedef struct wl_image wl_image;
typedef struct wl_model wl_model;
typedef struct wl_dataset wl_dataset;
typedef struct wl_report wl_report;

typedef struct wl_point {
  double x;
  double y;
} wl_point;

typedef struct wl_keypoints {
  wl_point head;
  wl_point tail;
} wl_keypoints;

enum { WL_POLARITY_DARK = 0, WL_POLARITY_BRIGHT = 1 };
enum { WL_MAX_TRUNK = 16 };

typedef struct wl_imaging_config {
  int block;           /* odd, >= 3 */
  double offset;       /* >= 0 */
  int polarity;        /* WL_POLARITY_* */
  int connectivity;    /* 4 or 8 */
  double pad_fraction; /* box growth, fraction of max side */
  int out_size;        /* crop side, px */
} wl_imaging_config;

typedef struct wl_worm_params {
  double length_min;
  double length_max;
  double body_width;
  double tail_taper;
  double segment_length;
  double curvature;
  double head_brightness_boost;
  double noise_std;
  double background;
  double body_intensity;
  int canvas;
  double margin;
} wl_worm_params;

typedef struct wl_train_config {
  double lr;
  double beta1;
  double beta2;
  double eps;
  uint32_t epochs;
  uint32_t batch;
  double lambda_js;
  double sigma_hm;
  uint64_t seed;
  uint32_t runs;
  double train_fraction;
  double brightness;
  int augment;
  uint32_t threads;
  int input_size;
  int heatmap_size;
  int trunk[WL_MAX_TRUNK];
  int n_trunk;
} wl_train_config;

typedef struct wl_preprocess_stats {
  size_t rows;
  size_t kept;
  size_t dropped; /* label outside the crop */
  size_t failed;  /* unreadable image or empty threshold mask */
} wl_preprocess_stats;

typedef struct wl_epoch_metrics {
  uint32_t run;
  uint32_t epoch;
  double train_loss;
  double val_loss;
  double val_pck15;
} wl_epoch_metrics;

typedef void (*wl_epoch_callback)(const wl_epoch_metrics* metrics, void* user);

typedef struct wl_baseline_result {
  int found; /* 0 when fewer than two corners qualify */
  wl_point tail;
  wl_point head;
  double tail_angle;
  double head_angle;
  size_t contour_points;
} wl_baseline_result;

WL_API const char* wl_version(void);
WL_API const char* wl_last_error(void);
WL_API const char* wl_status_name(wl_status status);

WL_API void wl_imaging_config_default(wl_imaging_config* cfg);
WL_API void wl_worm_params_default(wl_worm_params* params);
WL_API void wl_train_config_default(wl_train_config* cfg);

/* Images (PNG or P5 PGM). */
WL_API wl_status wl_image_load(const char* path, wl_image** out);
WL_API wl_status wl_image_save(const wl_image* img, const char* path);
WL_API int wl_image_width(const wl_image* img);
WL_API int wl_image_height(const wl_image* img);
WL_API void wl_image_free(wl_image* img);

/* Threshold + largest component + padded crop of a raw image. transform,
 * when non-NULL, receives {sx, sy, tx, ty} mapping original pixels to crop
 * pixels as x' = sx * x + tx, y' = sy * y + ty. */
WL_API wl_status wl_crop_image(const wl_image* img, const wl_imaging_config* cfg, wl_image** crop,
                               double transform[4]);

/* Writes n images and manifest.csv into out_dir. params may be NULL. */
WL_API wl_status wl_synth_dataset(size_t n, uint64_t seed, const char* out_dir, const wl_worm_params* params);

/* Threshold, crop and relabel every manifest row; writes crops and a new
 * manifest.csv (crop coordinates) into out_dir. cfg may be NULL. */
WL_API wl_status wl_preprocess(const char* manifest, const char* out_dir, const wl_imaging_config* cfg,
                               wl_preprocess_stats* stats);

/* Preprocessed datasets (every image out_size square). */
WL_API wl_status wl_dataset_load(const char* manifest, int out_size, wl_dataset** out);
WL_API size_t wl_dataset_size(const wl_dataset* ds);
WL_API void wl_dataset_free(wl_dataset* ds);

/* cfg->runs runs with seeds seed + r. Run r writes run_RR/metrics.csv,
 * run_RR/best.wpkt and run_RR/final.wpkt under out_dir. */
WL_API wl_status wl_train(const wl_dataset* ds, const wl_train_config* cfg, const char* out_dir,
                          wl_epoch_callback on_epoch, void* user);

/* Checkpoints. */
WL_API wl_status wl_model_load(const char* path, wl_model** out);
WL_API wl_status wl_model_save(const wl_model* model, const char* path);
WL_API wl_status wl_model_train_config(const wl_model* model, wl_train_config* cfg);
WL_API uint32_t wl_model_epoch(const wl_model* model);
WL_API void wl_model_free(wl_model* model);

/* Predicts on an input_size square crop. head_heatmap, when non-NULL,
 * receives K*K normalized probabilities (row-major); pass its capacity in
 * heatmap_len. */
WL_API wl_status wl_predict(const wl_model* model, const wl_image* crop, wl_keypoints* out, double* head_heatmap,
                            size_t heatmap_len);

/* Annotated render of a prediction; gt may be NULL. */
WL_API wl_status wl_render_prediction(const wl_model* model, const wl_image* crop, const wl_keypoints* gt,
                                      const char* svg_path);

/* Multi-run PCK report. */
WL_API wl_status wl_report_new(const double* thresholds, size_t n, wl_report** out);
/* Evaluates on the model's own validation split (recomputed from the seed
 * and train fraction stored in the checkpoint), or on every sample when
 * use_all is nonzero. */
WL_API wl_status wl_report_add_run(wl_report* report, const wl_model* model, const wl_dataset* ds, int use_all);
WL_API size_t wl_report_runs(const wl_report* report);
/* Mean and std for keypoint 0 = head, 1 = tail, 2 = average. */
WL_API wl_status wl_report_cell(const wl_report* report, int keypoint, size_t threshold_index, double* mean,
                                double* stddev);
/* Text and CSV renderings; the returned pointer lives until the next call
 * on this report or wl_report_free. */
WL_API const char* wl_report_text(wl_report* report);
WL_API const char* wl_report_csv(wl_report* report);
WL_API void wl_report_free(wl_report* report);

/* Contour convex-angle head/tail proposals on the largest thresholded
 * component of img; svg_path may be NULL. */
WL_API wl_status wl_baseline(const wl_image* img, const wl_imaging_config* cfg, size_t k, double theta_max,
                             wl_baseline_result* out, const char* svg_path);

/* Loss and PCK@15 curves averaged over the given metrics.csv files. */
WL_API wl_status wl_plot_metrics(const char* const* metrics_paths, size_t n, const char* svg_path);

#ifdef __cplusplus
}
#endif

#endif /* WORMLOC_H */
