#include <cmath>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pyrovis/pyrovis.h"

namespace {

int exit_code(pv_status s) {
  switch (s) {
    case PV_OK: return 0;
    case PV_ERR_CONFIG:
    case PV_ERR_INVALID_ARGUMENT: return 2;
    case PV_ERR_DATA:
    case PV_ERR_IO:
    case PV_ERR_MISMATCH:
    case PV_ERR_CONVERGENCE: return 3;
    default: return 1;
  }
}

int report(pv_status s) {
  if (s != PV_OK) std::fprintf(stderr, "pyrovis: %s: %s\n", pv_status_name(s), pv_last_error());
  return exit_code(s);
}

struct ConfigFlags {
  std::string file;
  std::vector<std::string> sets;
};

// Builds the configuration: file first, then --set overrides, then dedicated flags.
pv_status make_config(const ConfigFlags& flags, const std::vector<std::pair<std::string, std::string>>& extra,
                      pv_config** out) {
  pv_status s = flags.file.empty() ? pv_config_new(out) : pv_config_load(flags.file.c_str(), out);
  if (s != PV_OK) return s;
  auto apply = [&](const std::string& key, const std::string& value) {
    if (s == PV_OK) s = pv_config_set(*out, key.c_str(), value.c_str());
  };
  for (const std::string& kv : flags.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "pyrovis: --set expects key=value, got '%s'\n", kv.c_str());
      pv_config_free(*out);
      *out = nullptr;
      return PV_ERR_CONFIG;
    }
    apply(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : extra) apply(k, v);
  if (s == PV_OK) s = pv_config_validate(*out);
  if (s != PV_OK) {
    pv_config_free(*out);
    *out = nullptr;
  }
  return s;
}

struct Overrides {
  std::vector<std::pair<std::string, std::string>> values;
  void add(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    app->add_option_function<std::string>(flag, [this, key](const std::string& v) { values.emplace_back(key, v); },
                                          help);
  }
};

std::string rate(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pyrovis: fire detection in video"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", pv_version());

  ConfigFlags cfg;
  Overrides ov;
  app.add_option("-c,--config", cfg.file, "key=value configuration file");
  app.add_option("--set", cfg.sets, "override a configuration entry (key=value), repeatable");
  ov.add(&app, "--camera", "camera", "static or moving");
  ov.add(&app, "--codebook", "codebook", "codebook file");
  ov.add(&app, "--model", "model", "model file");
  ov.add(&app, "--seed", "seed", "seed for every random choice");
  ov.add(&app, "--stride", "decision_stride", "frames between classifier invocations");
  ov.add(&app, "--preset", "stability.preset", "indoor or outdoor stability thresholds");
  ov.add(&app, "--sampling", "sampling.mode", "dense or keypoint");
  ov.add(&app, "--k", "codebook.k", "codebook size");
  ov.add(&app, "--iterations", "kmeans.iterations", "k-means iterations");
  ov.add(&app, "--kernel", "svm.kernel", "linear, rbf or chi2");
  ov.add(&app, "--C", "svm.C", "SVM penalty");
  ov.add(&app, "--gamma", "svm.gamma", "kernel gamma");

  auto* tc = app.add_subcommand("train-codebook", "cluster descriptors of training patches into a codebook");
  std::vector<std::string> tc_dirs;
  std::string tc_out, tc_trace;
  tc->add_option("patch_dirs", tc_dirs, "directories of .ppm patches")->required();
  tc->add_option("-o,--output", tc_out, "codebook file")->required();
  tc->add_option("--trace", tc_trace, "write the per-iteration SSE trace here ('-' for stdout)");

  auto* tm = app.add_subcommand("train-model", "train the fire / non-fire classifier");
  std::string tm_fire, tm_nonfire, tm_out, tm_report = "-";
  bool tm_cv = false;
  tm->add_option("--fire", tm_fire, "fire patch directory")->required();
  tm->add_option("--nonfire", tm_nonfire, "non-fire patch directory")->required();
  tm->add_option("-o,--output", tm_out, "model file")->required();
  tm->add_option("--report", tm_report, "training report destination");
  tm->add_flag("--cv", tm_cv, "grid-search C and gamma by cross validation");

  auto* dt = app.add_subcommand("detect", "run the cascade over a directory of %06d.ppm frames");
  std::string dt_dir, dt_video = "video", dt_out = "-", dt_debug, dt_masks;
  bool dt_timings = false;
  dt->add_option("frames_dir", dt_dir, "frame directory")->required();
  dt->add_option("--video-id", dt_video, "identifier written to the alarm log");
  dt->add_option("-o,--output", dt_out, "alarm log destination");
  dt->add_option("--debug-log", dt_debug, "per-frame track, classifier and verdict records");
  dt->add_option("--mask-dir", dt_masks, "write candidate masks as mask_%06d.pbm");
  dt->add_flag("--timings", dt_timings, "print stage timings to stderr");

  auto* ev = app.add_subcommand("evaluate", "score alarms against section labels");
  std::string ev_dataset, ev_labels, ev_alarms, ev_report = "-", ev_alarm_out;
  std::vector<long long> ev_counts;
  ev->add_option("--dataset", ev_dataset, "root holding one frame directory per video");
  ev->add_option("--labels", ev_labels, "labels file");
  ev->add_option("--alarms", ev_alarms, "score a saved alarm log instead of running detection");
  ev->add_option("--counts", ev_counts, "TP TN FP FN: report rates for given counts")->expected(4)->delimiter(',');
  ev->add_option("--report", ev_report, "report destination");
  ev->add_option("--alarm-log", ev_alarm_out, "save the alarms produced during evaluation");

  auto* st = app.add_subcommand("selftest", "train on synthetic patches and check detection on a synthetic scene");
  std::string st_dir = (std::filesystem::temp_directory_path() / "pyrovis-selftest").string();
  unsigned long long st_seed = 1;
  st->add_option("--work-dir", st_dir, "directory for generated data");
  st->add_option("--seed", st_seed, "generator and training seed");

  auto* sy = app.add_subcommand("synth", "write synthetic scene frames and training patches");
  std::string sy_scene, sy_fire, sy_nonfire;
  int sy_frames = 500, sy_patches = 100;
  unsigned long long sy_seed = 1;
  sy->add_option("--scene", sy_scene, "scene frame directory");
  sy->add_option("--frames", sy_frames, "scene length");
  sy->add_option("--fire", sy_fire, "fire patch directory");
  sy->add_option("--nonfire", sy_nonfire, "non-fire patch directory");
  sy->add_option("--patches", sy_patches, "patches per class");
  sy->add_option("--seed", sy_seed, "generator seed");

  auto* dd = app.add_subcommand("descriptors", "dump the descriptors sampled from one image");
  std::string dd_image, dd_out = "-";
  dd->add_option("image", dd_image, "PPM image")->required();
  dd->add_option("-o,--output", dd_out, "destination");

  auto* ec = app.add_subcommand("export-codebook", "print a codebook file as text");
  std::string ec_in, ec_out = "-";
  ec->add_option("codebook", ec_in, "codebook file")->required();
  ec->add_option("-o,--output", ec_out, "destination");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (st->parsed()) {
    pv_selftest_summary s{};
    const pv_status rc = pv_selftest(st_dir.c_str(), st_seed, &s);
    if (rc != PV_OK) return report(rc);
    std::printf("frames %lld, flame onset %lld, first flame alarm %lld, false alarms %lld\n",
                static_cast<long long>(s.frames), static_cast<long long>(s.flame_onset),
                static_cast<long long>(s.first_flame_alarm), static_cast<long long>(s.false_alarms));
    std::printf("held-out accuracy %.4f, %.1f fps\n", s.held_out_accuracy, s.fps);
    std::printf("%s\n", s.passed ? "selftest passed" : "selftest FAILED");
    return s.passed ? 0 : 1;
  }

  if (sy->parsed()) {
    if (!sy_scene.empty()) {
      if (const pv_status rc = pv_synth_scene(sy_scene.c_str(), sy_frames, sy_seed); rc != PV_OK) return report(rc);
    }
    if (!sy_fire.empty() || !sy_nonfire.empty()) {
      if (sy_fire.empty() || sy_nonfire.empty()) {
        std::fprintf(stderr, "pyrovis: synth needs both --fire and --nonfire\n");
        return 2;
      }
      const pv_status rc = pv_synth_patches(sy_fire.c_str(), sy_nonfire.c_str(), sy_patches, sy_patches, sy_seed);
      if (rc != PV_OK) return report(rc);
    }
    return 0;
  }

  if (ec->parsed()) return report(pv_export_codebook(ec_in.c_str(), ec_out.c_str()));

  if (ev->parsed() && !ev_counts.empty()) {
    pv_eval_summary s{};
    return report(pv_evaluate_counts(ev_counts[0], ev_counts[1], ev_counts[2], ev_counts[3], ev_report.c_str(), &s));
  }
  if (ev->parsed() && !ev_alarms.empty()) {
    if (ev_labels.empty()) {
      std::fprintf(stderr, "pyrovis: --alarms needs --labels\n");
      return 2;
    }
    pv_eval_summary s{};
    return report(pv_evaluate_log(ev_alarms.c_str(), ev_labels.c_str(), ev_report.c_str(), &s));
  }

  auto extra = ov.values;
  if (tm->parsed() && tm_cv) extra.emplace_back("cv", "true");
  pv_config* config = nullptr;
  if (const pv_status rc = make_config(cfg, extra, &config); rc != PV_OK) return report(rc);

  pv_status rc = PV_OK;
  if (tc->parsed()) {
    std::vector<const char*> dirs;
    for (const auto& d : tc_dirs) dirs.push_back(d.c_str());
    pv_codebook_summary s{};
    rc = pv_train_codebook(config, dirs.data(), dirs.size(), tc_out.c_str(), tc_trace.empty() ? nullptr : tc_trace.c_str(),
                           &s);
    if (rc == PV_OK) {
      std::fprintf(stderr, "%lld descriptors from %lld patches, k %lld, %lld iterations, final SSE %.9g\n",
                   static_cast<long long>(s.descriptors), static_cast<long long>(s.patches),
                   static_cast<long long>(s.k), static_cast<long long>(s.iterations), s.final_sse);
    }
  } else if (tm->parsed()) {
    pv_model_summary s{};
    rc = pv_train_model(config, tm_fire.c_str(), tm_nonfire.c_str(), nullptr, tm_out.c_str(), tm_report.c_str(), &s);
  } else if (dt->parsed()) {
    pv_timings t{};
    rc = pv_detect_dir(config, dt_dir.c_str(), dt_video.c_str(), dt_out.c_str(),
                       dt_debug.empty() ? nullptr : dt_debug.c_str(), dt_masks.empty() ? nullptr : dt_masks.c_str(), &t);
    if (rc == PV_OK && dt_timings) {
      const double total = t.proposal_seconds + t.features_seconds + t.classify_seconds + t.temporal_seconds;
      std::fprintf(stderr,
                   "frames %lld blobs %lld classifier calls %lld alarms %lld\n"
                   "proposal %.3fs features %.3fs classify %.3fs temporal %.3fs (%.1f fps)\n",
                   static_cast<long long>(t.frames), static_cast<long long>(t.blobs),
                   static_cast<long long>(t.classifier_calls), static_cast<long long>(t.alarms), t.proposal_seconds,
                   t.features_seconds, t.classify_seconds, t.temporal_seconds, total > 0 ? t.frames / total : 0.0);
    }
  } else if (dd->parsed()) {
    rc = pv_dump_descriptors(config, dd_image.c_str(), dd_out.c_str());
  } else if (ev->parsed()) {
    if (ev_dataset.empty() || ev_labels.empty()) {
      std::fprintf(stderr, "pyrovis: evaluate needs --dataset and --labels (or --alarms / --counts)\n");
      pv_config_free(config);
      return 2;
    }
    pv_eval_summary s{};
    rc = pv_evaluate(config, ev_dataset.c_str(), ev_labels.c_str(), ev_report.c_str(),
                     ev_alarm_out.empty() ? nullptr : ev_alarm_out.c_str(), &s);
    if (rc == PV_OK) std::fprintf(stderr, "precision %s recall %s\n", rate(s.precision).c_str(), rate(s.recall).c_str());
  }
  pv_config_free(config);
  return report(rc);
}
