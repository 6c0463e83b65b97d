/* pyrovis C interface. All functions are thread-compatible: distinct handles may be used from
 * different threads, one handle from one thread at a time. Output paths accept "-" for stdout
 * and NULL for "do not write". */
#ifndef PYROVIS_H
#define PYROVIS_H

#include <stddef.h>
#include <stdint.h>

#if defined(PYROVIS_BUILDING)
#define PV_API __attribute__((visibility("default")))
#else
#define PV_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pv_status {
  PV_OK = 0,
  PV_ERR_INVALID_ARGUMENT = 1,
  PV_ERR_CONFIG = 2,
  PV_ERR_DATA = 3,
  PV_ERR_IO = 4,
  PV_ERR_MISMATCH = 5,
  PV_ERR_CONVERGENCE = 6,
  PV_ERR_INTERNAL = 7
} pv_status;

/* Message of the last failing call on this thread; empty after success. */
PV_API const char* pv_last_error(void);
PV_API const char* pv_status_name(pv_status status);
PV_API const char* pv_version(void);

/* --- configuration ------------------------------------------------------------ */

typedef struct pv_config pv_config;

PV_API pv_status pv_config_new(pv_config** out);
/* Parses a key=value file, validates ranges and checks that referenced files exist. */
PV_API pv_status pv_config_load(const char* path, pv_config** out);
PV_API pv_status pv_config_set(pv_config* config, const char* key, const char* value);
PV_API pv_status pv_config_validate(const pv_config* config);
/* Writes the effective configuration as key=value text. `needed` receives the full length
 * including the terminator; the text is truncated when `capacity` is smaller. */
PV_API pv_status pv_config_format(const pv_config* config, char* buffer, size_t capacity, size_t* needed);
PV_API void pv_config_free(pv_config* config);

/* --- detection ----------------------------------------------------------------- */

typedef struct pv_alarm {
  int64_t frame_index;
  int32_t track_id;
  int32_t x, y, w, h;
  double margin;
} pv_alarm;

typedef struct pv_timings {
  int64_t frames;
  int64_t blobs;
  int64_t classifier_calls;
  int64_t alarms;
  double proposal_seconds;
  double features_seconds;
  double classify_seconds;
  double temporal_seconds;
} pv_timings;

typedef struct pv_detector pv_detector;

/* Loads the codebook and model named by the configuration. */
PV_API pv_status pv_detector_new(const pv_config* config, pv_detector** out);
/* Feeds one interleaved 8-bit RGB frame. Up to `capacity` alarms raised by this frame are
 * copied to `alarms`; `count` receives the number raised. */
PV_API pv_status pv_detector_process_rgb8(pv_detector* detector, const uint8_t* rgb, int width, int height,
                                          int64_t frame_index, pv_alarm* alarms, size_t capacity, size_t* count);
PV_API pv_status pv_detector_timings(const pv_detector* detector, pv_timings* out);
PV_API void pv_detector_free(pv_detector* detector);

/* Runs the cascade over the %06d.ppm frames of a directory and writes the alarm log. Warnings
 * about skipped frames go to stderr. With `mask_dir`, every cleaned candidate mask is written
 * there as mask_%06d.pbm. */
PV_API pv_status pv_detect_dir(const pv_config* config, const char* frames_dir, const char* video_id,
                               const char* alarm_log_path, const char* debug_log_path, const char* mask_dir,
                               pv_timings* timings);

/* Writes the descriptors sampled from one PPM image, one per line: x y scale v1..v88. */
PV_API pv_status pv_dump_descriptors(const pv_config* config, const char* image_path, const char* out_path);
/* Writes a codebook file as text: one center per line, then `sigma <value>`. */
PV_API pv_status pv_export_codebook(const char* codebook_path, const char* out_path);

/* --- training ------------------------------------------------------------------ */

typedef struct pv_codebook_summary {
  int64_t patches;
  int64_t descriptors;
  int64_t k;
  int64_t iterations;
  double final_sse;
  double sigma;
} pv_codebook_summary;

/* Uses sampling, codebook.k, kmeans.iterations and seed from the configuration. The SSE trace,
 * one value per iteration, goes to `trace_path`. */
PV_API pv_status pv_train_codebook(const pv_config* config, const char* const* patch_dirs, size_t dir_count,
                                   const char* out_path, const char* trace_path, pv_codebook_summary* summary);

typedef struct pv_model_summary {
  int64_t train_fire, train_nonfire;
  int64_t test_fire, test_nonfire;
  double held_out_accuracy;
  double C;
  double gamma;
  double cv_accuracy; /* NaN without cross validation */
} pv_model_summary;

/* Encodes both patch directories against the codebook, trains on 4/5 per class and scores the
 * rest. A text report (including the CV grid when enabled) goes to `report_path`. */
PV_API pv_status pv_train_model(const pv_config* config, const char* fire_dir, const char* nonfire_dir,
                                const char* codebook_path, const char* out_path, const char* report_path,
                                pv_model_summary* summary);

/* --- evaluation ------------------------------------------------------------------ */

typedef struct pv_eval_summary {
  int64_t tp, tn, fp, fn;
  double precision; /* NaN when undefined */
  double recall;    /* NaN when undefined */
} pv_eval_summary;

/* Detects on dataset_root/<video_id>/ for every labelled video, then scores the sections. */
PV_API pv_status pv_evaluate(const pv_config* config, const char* dataset_root, const char* labels_path,
                             const char* report_path, const char* alarm_log_path, pv_eval_summary* summary);
/* Scores a saved alarm log against the labels. */
PV_API pv_status pv_evaluate_log(const char* alarm_log_path, const char* labels_path, const char* report_path,
                                 pv_eval_summary* summary);
/* Precision and recall from confusion counts. */
PV_API pv_status pv_evaluate_counts(int64_t tp, int64_t tn, int64_t fp, int64_t fn, const char* report_path,
                                    pv_eval_summary* summary);

/* --- synthetic data ---------------------------------------------------------------- */

/* 320x240 scene with a flickering flame (onset frame 100), a static lamp and passing car lights. */
PV_API pv_status pv_synth_scene(const char* out_dir, int frames, uint64_t seed);
PV_API pv_status pv_synth_patches(const char* fire_dir, const char* nonfire_dir, int fire_count, int nonfire_count,
                                  uint64_t seed);

typedef struct pv_selftest_summary {
  int64_t frames;
  int64_t flame_onset;
  int64_t first_flame_alarm; /* -1 when none */
  int64_t false_alarms;
  double held_out_accuracy;
  double fps;
  int passed;
} pv_selftest_summary;

/* Generates patches and a scene under `work_dir`, trains, detects and checks the alarms. */
PV_API pv_status pv_selftest(const char* work_dir, uint64_t seed, pv_selftest_summary* summary);

#ifdef __cplusplus
}
#endif

#endif
