#include "pyrovis/selftest.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include "pyrovis/error.hpp"

namespace pyrovis {

namespace fs = std::filesystem;

namespace {

std::string numbered(int i) {
  char name[32];
  std::snprintf(name, sizeof name, "%06d.ppm", i);
  return name;
}

}  // namespace

void write_scene(const fs::path& dir, const synthetic::SceneSpec& spec) {
  fs::create_directories(dir);
  for (int i = 0; i < spec.frames; ++i) write_ppm(dir / numbered(i), synthetic::render_scene(spec, i));
}

void write_patches(const fs::path& dir, const std::vector<Frame>& patches) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < patches.size(); ++i) write_ppm(dir / numbered(static_cast<int>(i)), patches[i]);
}

SelftestResult run_selftest(const SelftestOptions& opt) {
  if (opt.work_dir.empty()) fail(Errc::invalid_argument, "selftest needs a work directory");
  SelftestResult r;
  PipelineConfig config = opt.config;
  config.seed = opt.seed;

  const fs::path fire_dir = opt.work_dir / "patches" / "fire";
  const fs::path nonfire_dir = opt.work_dir / "patches" / "nonfire";
  write_patches(fire_dir, synthetic::fire_patches(opt.fire_patches, opt.seed));
  write_patches(nonfire_dir, synthetic::nonfire_patches(opt.nonfire_patches, opt.seed));
  r.frames_dir = opt.work_dir / "scene";
  write_scene(r.frames_dir, opt.scene);

  const std::vector<Frame> fire = load_patches(fire_dir);
  const std::vector<Frame> nonfire = load_patches(nonfire_dir);
  std::vector<Frame> all = fire;
  all.insert(all.end(), nonfire.begin(), nonfire.end());

  r.codebook = train_codebook(all, config.sampling, config.codebook_k, config.kmeans_iterations, config.seed);
  r.codebook_path = opt.work_dir / "codebook.pvcb";
  save_codebook(r.codebook_path, r.codebook.codebook);

  const Vocabulary vocab(load_codebook(r.codebook_path));
  r.model = train_model(fire, nonfire, vocab, config);
  r.model_path = opt.work_dir / "model.pvsm";
  save_model(r.model_path, r.model.model);

  config.codebook_path = r.codebook_path;
  config.model_path = r.model_path;
  const auto t0 = std::chrono::steady_clock::now();
  r.alarms = detect_stream(r.frames_dir, config, "synthetic", nullptr, &r.timings);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  r.alarm_log_path = opt.work_dir / "alarms.txt";
  std::ofstream log(r.alarm_log_path, std::ios::binary);
  for (const AlarmEvent& a : r.alarms) write_alarm(log, a);
  if (!log) fail(Errc::io, "cannot write " + r.alarm_log_path.string());

  for (const AlarmEvent& a : r.alarms) {
    const Rect flame = synthetic::flame_core_box(opt.scene, static_cast<int>(a.frame_index));
    if (flame.area() > 0 && iou(flame, a.bbox) > 0.0) {
      if (r.first_flame_alarm < 0) r.first_flame_alarm = a.frame_index;
    } else {
      ++r.false_alarms;
    }
  }
  const bool flame_expected = opt.scene.flame && opt.scene.flame_onset < opt.scene.frames;
  const bool flame_ok = !flame_expected || (r.first_flame_alarm >= opt.scene.flame_onset &&
                                            r.first_flame_alarm <= opt.scene.flame_onset + opt.max_latency);
  r.passed = flame_ok && r.false_alarms == 0;
  return r;
}

}  // namespace pyrovis
