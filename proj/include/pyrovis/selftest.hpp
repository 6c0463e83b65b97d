#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pyrovis/pipeline.hpp"
#include "pyrovis/synthetic.hpp"

namespace pyrovis {

struct SelftestOptions {
  std::filesystem::path work_dir;
  std::uint64_t seed = 1;
  int fire_patches = 100;
  int nonfire_patches = 100;
  synthetic::SceneSpec scene;
  PipelineConfig config;  // codebook/model paths are filled in
  int max_latency = 50;
};

struct SelftestResult {
  CodebookTraining codebook;
  ModelTraining model;
  std::vector<AlarmEvent> alarms;
  StageTimings timings;
  double wall_seconds = 0.0;  // detect_stream including frame decoding
  std::int64_t first_flame_alarm = -1;
  long false_alarms = 0;
  bool passed = false;

  std::filesystem::path codebook_path, model_path, alarm_log_path, frames_dir;
  double fps() const { return wall_seconds > 0.0 ? timings.frames / wall_seconds : 0.0; }
};

/// Writes synthetic patches and scene frames under work_dir, trains a codebook and a model from
/// the patch files, runs detection over the frame files and classifies every alarm as flame or
/// false (no overlap with the flame core).
SelftestResult run_selftest(const SelftestOptions& options);

void write_scene(const std::filesystem::path& dir, const synthetic::SceneSpec& spec);
void write_patches(const std::filesystem::path& dir, const std::vector<Frame>& patches);

}  // namespace pyrovis
