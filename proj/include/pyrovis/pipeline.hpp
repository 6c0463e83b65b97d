#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "pyrovis/classifier.hpp"
#include "pyrovis/codebook.hpp"
#include "pyrovis/features.hpp"
#include "pyrovis/proposal.hpp"
#include "pyrovis/temporal.hpp"

namespace pyrovis {

// --- Configuration --------------------------------------------------------------

struct PipelineConfig {
  CameraMode camera = CameraMode::STATIC;
  SamplingPlan sampling;
  std::size_t encoder_m = 10;
  ThresholdLadder ladder;
  StabilityThresholds stability;
  BackgroundParams background;
  std::size_t stats_window = 25;
  double min_blob_area = 64.0;
  TrackerParams tracker;
  int decision_stride = 5;
  /// Context added around a blob's bounding box before encoding it as a patch.
  int region_margin = 13;

  std::filesystem::path codebook_path;
  std::filesystem::path model_path;

  std::uint64_t seed = 0;
  std::size_t codebook_k = 500;
  int kmeans_iterations = 50;
  Kernel kernel;
  double svm_C = 1.0;
  bool balance = true;
  bool cross_validate = false;
  int cv_folds = 5;

  /// Range checks; throws Errc::config naming the offending key.
  void validate() const;
  /// Throws Errc::config when a referenced codebook or model file is missing.
  void check_files() const;
  ProposalConfig proposal() const;
};

/// Sets one `key=value` entry (keys as written by format_config). Throws Errc::config.
void set_config_value(PipelineConfig& config, std::string_view key, std::string_view value);
/// Parses `key = value` lines; `#` starts a comment. Relative paths resolve against `base_dir`.
PipelineConfig parse_config(std::istream& in, const std::filesystem::path& base_dir = {});
/// Parses, validates and checks that referenced files exist.
PipelineConfig load_config(const std::filesystem::path& path);
std::string format_config(const PipelineConfig& config);

// --- Region encoding ----------------------------------------------------------

/// Codebook plus the lookup structures needed to encode regions against it.
struct Vocabulary {
  Codebook codebook;
  NNIndex index;
  Fingerprint fingerprint;

  explicit Vocabulary(Codebook cb);
};

/// Encodes a whole patch: dense descriptors whose kernels fit the patch plus its global LAB histogram.
BlobFeature encode_patch(const Frame& rgb, const SamplingPlan& plan, const Vocabulary& vocab, std::size_t m);

/// `bbox` grown by `margin` on every side and clipped to the frame.
Rect context_region(const Rect& bbox, int margin, int width, int height);

// --- Detection ------------------------------------------------------------------

struct AlarmEvent {
  std::string video_id;
  std::int64_t frame_index = 0;
  int track_id = 0;
  Rect bbox;
  double margin = 0.0;

  friend bool operator==(const AlarmEvent&, const AlarmEvent&) = default;
};

struct StageTimings {
  double proposal_seconds = 0.0;
  double features_seconds = 0.0;
  double classify_seconds = 0.0;
  double temporal_seconds = 0.0;
  long frames = 0;
  long blobs = 0;
  long classifier_calls = 0;
  long alarms = 0;

  double total_seconds() const { return proposal_seconds + features_seconds + classify_seconds + temporal_seconds; }
};

/// The three-stage cascade for one stream.
class Detector {
 public:
  /// Throws Errc::mismatch when the model was trained against another codebook.
  Detector(PipelineConfig config, Codebook codebook, TrainedModel model, std::string video_id = {});
  /// Loads codebook and model from the paths in `config`.
  static Detector from_config(const PipelineConfig& config, std::string video_id = {});

  /// Processes the next frame (RGB) of the stream; returns the alarms it raised.
  std::vector<AlarmEvent> process(const Frame& frame);

  /// Per-frame debug records: track log lines, classifier outputs and verdict statistics.
  void set_debug_log(std::ostream* out) { debug_ = out; }
  /// Writes each frame's cleaned candidate mask as `mask_%06d.pbm` into `dir` (empty disables).
  void set_mask_dir(std::filesystem::path dir) { mask_dir_ = std::move(dir); }

  const StageTimings& timings() const { return timings_; }
  const Tracker& tracker() const { return tracker_; }
  const PipelineConfig& config() const { return config_; }

 private:
  PipelineConfig config_;
  Vocabulary vocab_;
  TrainedModel model_;
  std::string video_id_;
  Proposer proposer_;
  Tracker tracker_;
  StageTimings timings_;
  long processed_ = 0;
  std::ostream* debug_ = nullptr;
  std::filesystem::path mask_dir_;
};

/// Runs a detector over the `%06d.ppm` frames of `dir`. Unreadable frames are skipped with a
/// warning on `warnings`.
std::vector<AlarmEvent> detect_stream(const std::filesystem::path& dir, const PipelineConfig& config,
                                      const std::string& video_id, std::ostream* warnings = nullptr,
                                      StageTimings* timings = nullptr, std::ostream* debug = nullptr,
                                      const std::filesystem::path& mask_dir = {});

/// `video_id frame_index track_id x y w h margin`
void write_alarm(std::ostream& out, const AlarmEvent& alarm);
std::vector<AlarmEvent> read_alarm_log(std::istream& in);

void write_timings(std::ostream& out, const StageTimings& timings);

// --- Training -------------------------------------------------------------------

/// Sorted `.ppm` files of a directory.
std::vector<std::filesystem::path> list_patch_files(const std::filesystem::path& dir);
std::vector<Frame> load_patches(const std::filesystem::path& dir);

struct CodebookTraining {
  Codebook codebook;
  std::size_t patches = 0;
  std::size_t descriptors = 0;
  std::vector<double> sse_trace;
};

/// Samples every patch with `plan` and clusters the descriptors. Throws Errc::data with the
/// descriptor counts when fewer than k distinct descriptors are available.
CodebookTraining train_codebook(std::span<const Frame> patches, const SamplingPlan& plan, std::size_t k,
                                int iterations, std::uint64_t seed);

struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Random 4/5 : 1/5 partition of n items; the test part holds max(1, round(n/5)) items.
TrainTestSplit split_train_test(std::size_t n, std::uint64_t seed);

struct ModelTraining {
  TrainedModel model;
  std::optional<CVReport> cv;
  std::size_t train_fire = 0, train_nonfire = 0;
  std::size_t test_fire = 0, test_nonfire = 0;
  std::size_t test_correct = 0;
  double held_out_accuracy = 0.0;
};

/// Trains on 4/5 of each class (optionally grid-searching C and gamma first) and scores the
/// remaining 1/5. Needs at least 5 samples per class.
ModelTraining train_model(std::span<const BlobFeature> fire, std::span<const BlobFeature> nonfire,
                          const Fingerprint& codebook_fingerprint, const PipelineConfig& config);

/// Encodes the patches first; throws Errc::data listing every patch that failed to encode.
ModelTraining train_model(std::span<const Frame> fire, std::span<const Frame> nonfire, const Vocabulary& vocab,
                          const PipelineConfig& config, std::span<const std::string> fire_names = {},
                          std::span<const std::string> nonfire_names = {});

// --- Evaluation -----------------------------------------------------------------

inline constexpr std::int64_t kSectionLength = 200;

struct SectionLabel {
  std::string video_id;
  int section = 0;  // position within its video
  std::int64_t start = 0;
  std::int64_t end = 0;  // exclusive
  bool fire = false;
};

/// Lines `video_id start_frame end_frame fire|nofire`; `#` comments allowed. Validates the set.
std::vector<SectionLabel> read_labels(std::istream& in);
std::vector<SectionLabel> load_labels(const std::filesystem::path& path);
/// Throws Errc::data on overlapping ranges or sections longer than kSectionLength (only the
/// last section of a video may be shorter).
void validate_labels(std::span<const SectionLabel> labels);

struct SectionVerdict {
  SectionLabel label;
  bool predicted_fire = false;
  std::size_t alarms = 0;
};

struct EvalReport {
  long tp = 0, tn = 0, fp = 0, fn = 0;
  std::optional<double> precision;  // undefined when nothing was predicted fire
  std::optional<double> recall;     // undefined when no section is fire
  std::vector<SectionVerdict> sections;
};

EvalReport report_from_counts(long tp, long tn, long fp, long fn);

/// A section is predicted fire iff at least one alarm falls in [start, end).
/// Throws Errc::mismatch for alarms outside every labelled range.
EvalReport evaluate_alarms(std::span<const AlarmEvent> alarms, std::span<const SectionLabel> labels);

/// Runs detect_stream on `dataset_root/<video_id>/` for every labelled video and scores the alarms.
EvalReport evaluate(const std::filesystem::path& dataset_root, const PipelineConfig& config,
                    std::span<const SectionLabel> labels, std::ostream* warnings = nullptr,
                    std::vector<AlarmEvent>* alarms = nullptr);

/// "93.04%" with two decimals, or "n/a".
std::string format_rate(const std::optional<double>& rate);
/// Confusion counts and rates as a two-column table, then one line per section.
void write_report(std::ostream& out, const EvalReport& report);

}  // namespace pyrovis
