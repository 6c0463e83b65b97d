#include "pyrovis/pyrovis.h"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <limits>
#include <memory>
#include <new>
#include <sstream>
#include <string>

#include "pyrovis/error.hpp"
#include "pyrovis/pipeline.hpp"
#include "pyrovis/selftest.hpp"
#include "pyrovis/synthetic.hpp"

struct pv_config {
  pyrovis::PipelineConfig config;
};

struct pv_detector {
  pyrovis::Detector detector;
};

namespace {

thread_local std::string g_last_error;

pv_status to_status(pyrovis::Errc code) {
  switch (code) {
    case pyrovis::Errc::invalid_argument: return PV_ERR_INVALID_ARGUMENT;
    case pyrovis::Errc::config: return PV_ERR_CONFIG;
    case pyrovis::Errc::data: return PV_ERR_DATA;
    case pyrovis::Errc::io: return PV_ERR_IO;
    case pyrovis::Errc::mismatch: return PV_ERR_MISMATCH;
    case pyrovis::Errc::convergence: return PV_ERR_CONVERGENCE;
  }
  return PV_ERR_INTERNAL;
}

template <typename F>
pv_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return PV_OK;
  } catch (const pyrovis::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return PV_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return PV_ERR_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) pyrovis::fail(pyrovis::Errc::invalid_argument, what);
}

// Sends text to a file, to stdout for "-", or nowhere for NULL.
void emit(const char* path, const std::string& text) {
  if (!path) return;
  if (std::strcmp(path, "-") == 0) {
    std::cout << text << std::flush;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) pyrovis::fail(pyrovis::Errc::io, std::string("cannot write ") + path);
}

double or_nan(const std::optional<double>& v) { return v ? *v : std::numeric_limits<double>::quiet_NaN(); }

void fill(pv_eval_summary* s, const pyrovis::EvalReport& r) {
  if (!s) return;
  s->tp = r.tp;
  s->tn = r.tn;
  s->fp = r.fp;
  s->fn = r.fn;
  s->precision = or_nan(r.precision);
  s->recall = or_nan(r.recall);
}

void fill(pv_timings* out, const pyrovis::StageTimings& t) {
  if (!out) return;
  out->frames = t.frames;
  out->blobs = t.blobs;
  out->classifier_calls = t.classifier_calls;
  out->alarms = t.alarms;
  out->proposal_seconds = t.proposal_seconds;
  out->features_seconds = t.features_seconds;
  out->classify_seconds = t.classify_seconds;
  out->temporal_seconds = t.temporal_seconds;
}

std::string report_text(const pyrovis::EvalReport& r) {
  std::ostringstream o;
  pyrovis::write_report(o, r);
  return o.str();
}

std::string alarm_text(const std::vector<pyrovis::AlarmEvent>& alarms) {
  std::ostringstream o;
  for (const auto& a : alarms) pyrovis::write_alarm(o, a);
  return o.str();
}

}  // namespace

extern "C" {

const char* pv_last_error(void) { return g_last_error.c_str(); }

const char* pv_status_name(pv_status status) {
  switch (status) {
    case PV_OK: return "ok";
    case PV_ERR_INVALID_ARGUMENT: return "invalid argument";
    case PV_ERR_CONFIG: return "configuration error";
    case PV_ERR_DATA: return "data error";
    case PV_ERR_IO: return "i/o error";
    case PV_ERR_MISMATCH: return "mismatch";
    case PV_ERR_CONVERGENCE: return "convergence failure";
    case PV_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* pv_version(void) { return "0.1.0"; }

pv_status pv_config_new(pv_config** out) {
  return guarded([&] {
    require(out, "null output handle");
    *out = new pv_config{};
  });
}

pv_status pv_config_load(const char* path, pv_config** out) {
  return guarded([&] {
    require(path && out, "null argument");
    *out = nullptr;
    auto c = std::make_unique<pv_config>(pv_config{pyrovis::load_config(path)});
    *out = c.release();
  });
}

pv_status pv_config_set(pv_config* config, const char* key, const char* value) {
  return guarded([&] {
    require(config && key && value, "null argument");
    pyrovis::set_config_value(config->config, key, value);
  });
}

pv_status pv_config_validate(const pv_config* config) {
  return guarded([&] {
    require(config, "null config");
    config->config.validate();
    config->config.check_files();
  });
}

pv_status pv_config_format(const pv_config* config, char* buffer, size_t capacity, size_t* needed) {
  return guarded([&] {
    require(config, "null config");
    const std::string text = pyrovis::format_config(config->config);
    if (needed) *needed = text.size() + 1;
    if (buffer && capacity > 0) {
      const size_t n = std::min(capacity - 1, text.size());
      std::memcpy(buffer, text.data(), n);
      buffer[n] = '\0';
    }
  });
}

void pv_config_free(pv_config* config) { delete config; }

pv_status pv_detector_new(const pv_config* config, pv_detector** out) {
  return guarded([&] {
    require(config && out, "null argument");
    *out = nullptr;
    *out = new pv_detector{pyrovis::Detector::from_config(config->config)};
  });
}

pv_status pv_detector_process_rgb8(pv_detector* detector, const uint8_t* rgb, int width, int height,
                                   int64_t frame_index, pv_alarm* alarms, size_t capacity, size_t* count) {
  return guarded([&] {
    require(detector && rgb, "null argument");
    require(width > 0 && height > 0, "frame dimensions must be positive");
    require(capacity == 0 || alarms, "null alarm buffer");
    if (count) *count = 0;
    const std::size_t bytes = static_cast<std::size_t>(width) * height * 3;
    const pyrovis::Frame frame = pyrovis::Frame::from_rgb8(width, height, {rgb, bytes}, frame_index);
    const auto raised = detector->detector.process(frame);
    for (size_t i = 0; i < raised.size() && i < capacity; ++i) {
      const auto& a = raised[i];
      alarms[i] = pv_alarm{a.frame_index, a.track_id, a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h, a.margin};
    }
    if (count) *count = raised.size();
  });
}

pv_status pv_detector_timings(const pv_detector* detector, pv_timings* out) {
  return guarded([&] {
    require(detector && out, "null argument");
    fill(out, detector->detector.timings());
  });
}

void pv_detector_free(pv_detector* detector) { delete detector; }

pv_status pv_detect_dir(const pv_config* config, const char* frames_dir, const char* video_id,
                        const char* alarm_log_path, const char* debug_log_path, const char* mask_dir,
                        pv_timings* timings) {
  return guarded([&] {
    require(config && frames_dir, "null argument");
    std::ostringstream debug;
    pyrovis::StageTimings t;
    const auto alarms = pyrovis::detect_stream(frames_dir, config->config, video_id ? video_id : "video", &std::cerr,
                                               &t, debug_log_path ? &debug : nullptr,
                                               mask_dir ? std::filesystem::path(mask_dir) : std::filesystem::path());
    emit(alarm_log_path, alarm_text(alarms));
    emit(debug_log_path, debug.str());
    fill(timings, t);
  });
}

pv_status pv_dump_descriptors(const pv_config* config, const char* image_path, const char* out_path) {
  return guarded([&] {
    require(config && image_path, "null argument");
    const auto ds = pyrovis::sample(pyrovis::read_ppm(image_path), config->config.sampling);
    std::ostringstream o;
    pyrovis::write_descriptors(o, ds);
    emit(out_path, o.str());
  });
}

pv_status pv_export_codebook(const char* codebook_path, const char* out_path) {
  return guarded([&] {
    require(codebook_path, "null argument");
    std::ostringstream o;
    pyrovis::export_codebook_text(o, pyrovis::load_codebook(codebook_path));
    emit(out_path, o.str());
  });
}

pv_status pv_train_codebook(const pv_config* config, const char* const* patch_dirs, size_t dir_count,
                            const char* out_path, const char* trace_path, pv_codebook_summary* summary) {
  return guarded([&] {
    require(config && patch_dirs && dir_count > 0 && out_path, "null argument");
    const auto& c = config->config;
    c.validate();
    std::vector<pyrovis::Frame> patches;
    for (size_t i = 0; i < dir_count; ++i) {
      require(patch_dirs[i], "null patch directory");
      for (auto& p : pyrovis::load_patches(patch_dirs[i])) patches.push_back(std::move(p));
    }
    const auto r = pyrovis::train_codebook(patches, c.sampling, c.codebook_k, c.kmeans_iterations, c.seed);
    pyrovis::save_codebook(out_path, r.codebook);
    std::ostringstream trace;
    char buf[64];
    for (size_t i = 0; i < r.sse_trace.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%zu %.17g\n", i + 1, r.sse_trace[i]);
      trace << buf;
    }
    emit(trace_path, trace.str());
    if (summary) {
      summary->patches = static_cast<int64_t>(r.patches);
      summary->descriptors = static_cast<int64_t>(r.descriptors);
      summary->k = static_cast<int64_t>(r.codebook.k());
      summary->iterations = static_cast<int64_t>(r.sse_trace.size());
      summary->final_sse = r.sse_trace.empty() ? 0.0 : r.sse_trace.back();
      summary->sigma = r.codebook.sigma;
    }
  });
}

pv_status pv_train_model(const pv_config* config, const char* fire_dir, const char* nonfire_dir,
                         const char* codebook_path, const char* out_path, const char* report_path,
                         pv_model_summary* summary) {
  return guarded([&] {
    require(config && fire_dir && nonfire_dir && out_path, "null argument");
    const auto& c = config->config;
    const std::filesystem::path cb_path = codebook_path ? std::filesystem::path(codebook_path) : c.codebook_path;
    if (cb_path.empty()) pyrovis::fail(pyrovis::Errc::config, "no codebook given");
    const pyrovis::Vocabulary vocab(pyrovis::load_codebook(cb_path));

    auto load = [](const char* dir, std::vector<std::string>& names) {
      std::vector<pyrovis::Frame> frames;
      for (const auto& p : pyrovis::list_patch_files(dir)) {
        names.push_back(p.string());
        frames.push_back(pyrovis::read_ppm(p));
      }
      return frames;
    };
    std::vector<std::string> fire_names, nonfire_names;
    const auto fire = load(fire_dir, fire_names);
    const auto nonfire = load(nonfire_dir, nonfire_names);
    const auto r = pyrovis::train_model(fire, nonfire, vocab, c, fire_names, nonfire_names);
    pyrovis::save_model(out_path, r.model);

    std::ostringstream rep;
    char buf[160];
    std::snprintf(buf, sizeof buf, "train %zu fire / %zu non-fire, test %zu fire / %zu non-fire\n", r.train_fire,
                  r.train_nonfire, r.test_fire, r.test_nonfire);
    rep << buf;
    std::snprintf(buf, sizeof buf, "kernel %s C %.9g gamma %.9g\n", std::string(to_string(r.model.kernel.kind)).c_str(),
                  r.model.C, r.model.kernel.gamma);
    rep << buf;
    if (r.cv) {
      std::snprintf(buf, sizeof buf, "cv %d folds, best accuracy %.4f\n", r.cv->folds, r.cv->best_accuracy);
      rep << buf;
      for (const auto& cell : r.cv->cells) {
        std::snprintf(buf, sizeof buf, "cv C %.9g gamma %.9g accuracy %.4f\n", cell.C, cell.gamma, cell.accuracy);
        rep << buf;
      }
    }
    std::snprintf(buf, sizeof buf, "held-out accuracy %.4f (%zu/%zu)\n", r.held_out_accuracy, r.test_correct,
                  r.test_fire + r.test_nonfire);
    rep << buf;
    emit(report_path, rep.str());

    if (summary) {
      summary->train_fire = static_cast<int64_t>(r.train_fire);
      summary->train_nonfire = static_cast<int64_t>(r.train_nonfire);
      summary->test_fire = static_cast<int64_t>(r.test_fire);
      summary->test_nonfire = static_cast<int64_t>(r.test_nonfire);
      summary->held_out_accuracy = r.held_out_accuracy;
      summary->C = r.model.C;
      summary->gamma = r.model.kernel.gamma;
      summary->cv_accuracy = r.cv ? r.cv->best_accuracy : std::numeric_limits<double>::quiet_NaN();
    }
  });
}

pv_status pv_evaluate(const pv_config* config, const char* dataset_root, const char* labels_path,
                      const char* report_path, const char* alarm_log_path, pv_eval_summary* summary) {
  return guarded([&] {
    require(config && dataset_root && labels_path, "null argument");
    const auto labels = pyrovis::load_labels(labels_path);
    std::vector<pyrovis::AlarmEvent> alarms;
    const auto r = pyrovis::evaluate(dataset_root, config->config, labels, &std::cerr, &alarms);
    emit(alarm_log_path, alarm_text(alarms));
    emit(report_path, report_text(r));
    fill(summary, r);
  });
}

pv_status pv_evaluate_log(const char* alarm_log_path, const char* labels_path, const char* report_path,
                          pv_eval_summary* summary) {
  return guarded([&] {
    require(alarm_log_path && labels_path, "null argument");
    std::ifstream in(alarm_log_path);
    if (!in) pyrovis::fail(pyrovis::Errc::io, std::string("cannot open alarm log ") + alarm_log_path);
    const auto alarms = pyrovis::read_alarm_log(in);
    const auto r = pyrovis::evaluate_alarms(alarms, pyrovis::load_labels(labels_path));
    emit(report_path, report_text(r));
    fill(summary, r);
  });
}

pv_status pv_evaluate_counts(int64_t tp, int64_t tn, int64_t fp, int64_t fn, const char* report_path,
                             pv_eval_summary* summary) {
  return guarded([&] {
    require(tp >= 0 && tn >= 0 && fp >= 0 && fn >= 0, "counts must be non-negative");
    const auto r = pyrovis::report_from_counts(tp, tn, fp, fn);
    emit(report_path, report_text(r));
    fill(summary, r);
  });
}

pv_status pv_synth_scene(const char* out_dir, int frames, uint64_t seed) {
  return guarded([&] {
    require(out_dir, "null directory");
    require(frames > 0, "frame count must be positive");
    pyrovis::synthetic::SceneSpec spec;
    spec.frames = frames;
    spec.seed = seed;
    pyrovis::write_scene(out_dir, spec);
  });
}

pv_status pv_synth_patches(const char* fire_dir, const char* nonfire_dir, int fire_count, int nonfire_count,
                           uint64_t seed) {
  return guarded([&] {
    require(fire_dir && nonfire_dir, "null directory");
    require(fire_count >= 0 && nonfire_count >= 0, "patch counts must be non-negative");
    pyrovis::write_patches(fire_dir, pyrovis::synthetic::fire_patches(fire_count, seed));
    pyrovis::write_patches(nonfire_dir, pyrovis::synthetic::nonfire_patches(nonfire_count, seed));
  });
}

pv_status pv_selftest(const char* work_dir, uint64_t seed, pv_selftest_summary* summary) {
  return guarded([&] {
    require(work_dir, "null directory");
    pyrovis::SelftestOptions opt;
    opt.work_dir = work_dir;
    opt.seed = seed;
    opt.scene.seed = seed;
    const auto r = pyrovis::run_selftest(opt);
    if (summary) {
      summary->frames = r.timings.frames;
      summary->flame_onset = opt.scene.flame_onset;
      summary->first_flame_alarm = r.first_flame_alarm;
      summary->false_alarms = r.false_alarms;
      summary->held_out_accuracy = r.model.held_out_accuracy;
      summary->fps = r.fps();
      summary->passed = r.passed ? 1 : 0;
    }
  });
}

}  // extern "C"
