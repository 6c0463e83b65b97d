#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "pyrovis/imaging.hpp"

namespace pyrovis {

struct BackgroundParams {
  double learning_rate = 0.01;  // rho
  double lambda = 2.5;
  double std_floor = 4.0;       // lower bound on the per-pixel deviation used in the foreground test
  int warmup_frames = 25;
};

/// Single running Gaussian per pixel over gray intensity.
///
/// During warm-up every pixel is updated with rate max(rho, 1/(t+1)), so the mean starts as a
/// cumulative average, and the returned mask is empty. Afterwards only background pixels are
/// updated: mean += rho * d, var = (1 - rho) var + rho d^2 with d = I - mean.
class BackgroundModel {
 public:
  BackgroundModel(int width, int height, BackgroundParams params = {});

  /// Classifies `frame` (RGB or GRAY) against the model, then absorbs it. Returns the foreground mask.
  Mask update(const Frame& frame);

  int width() const { return width_; }
  int height() const { return height_; }
  long frames_absorbed() const { return frames_; }
  bool warmed_up() const { return frames_ >= params_.warmup_frames; }
  std::span<const double> mean() const { return mean_; }
  std::span<const double> variance() const { return var_; }
  const BackgroundParams& params() const { return params_; }

 private:
  int width_;
  int height_;
  BackgroundParams params_;
  long frames_ = 0;
  std::vector<double> mean_;
  std::vector<double> var_;
};

Mask update_background(BackgroundModel& model, const Frame& frame);

/// Descending intensity thresholds, brightest scenes picking the lowest rung.
struct ThresholdLadder {
  std::vector<double> rungs{220.0, 190.0, 160.0};

  void validate() const;
  /// T = T_1 - (T_1 - T_L) q snapped to the nearest rung (ties go to the higher threshold).
  double select(double q) const;
};

/// Rolling window of mean frame intensities.
class IntensityStats {
 public:
  explicit IntensityStats(std::size_t window = 25) : window_(window) {}
  void push(double mean_intensity);
  bool empty() const { return means_.empty(); }
  /// Mean intensity over the window divided by 255, clamped to [0, 1].
  double quantile() const;

 private:
  std::size_t window_;
  std::deque<double> means_;
};

double mean_intensity(const Frame& gray);

enum class MaskMethod { BG_SUBTRACTION, MULTI_LEVEL_THRESHOLD, INTERSECTION };

struct CandidateMask {
  Mask mask;
  std::int64_t frame_index = 0;
  MaskMethod method = MaskMethod::MULTI_LEVEL_THRESHOLD;
  double threshold = 0.0;
};

/// Pixels whose gray intensity is at least the ladder threshold chosen from `stats`.
CandidateMask multi_level_threshold(const Frame& frame, const IntensityStats& stats, const ThresholdLadder& ladder);

struct Point {
  int x;
  int y;
  friend bool operator==(const Point&, const Point&) = default;
};

/// An 8-connected component of the candidate mask.
struct Blob {
  std::vector<Point> pixels;  // row-major order
  Rect bbox;
  long area = 0;
  /// Number of unit pixel edges separating the blob from the outside.
  long perimeter = 0;
  double cx = 0.0;
  double cy = 0.0;

  Mask local_mask() const;  // bbox-sized
};

/// 3x3 erosion followed by 3x3 dilation; pixels beyond the border count as unset.
Mask morphological_open(const Mask& mask);

/// 8-connected components in raster discovery order.
std::vector<Blob> connected_components(const Mask& mask);

Blob make_blob(std::vector<Point> pixels);

enum class CameraMode { STATIC, MOVING };

struct ProposalConfig {
  CameraMode camera = CameraMode::STATIC;
  ThresholdLadder ladder;
  BackgroundParams background;
  std::size_t stats_window = 25;
  /// Minimum blob area at 320x240, scaled with frame area.
  double min_blob_area = 64.0;
};

struct Proposal {
  CandidateMask mask;  // after morphology
  std::vector<Blob> blobs;
};

long scaled_min_area(double min_area_320x240, int width, int height);

/// Candidate masks -> cleaned mask -> blobs sorted by area descending.
std::vector<Blob> extract_blobs(const Mask& mask, long min_area);

/// Stage-1 state for one stream: the background model (static cameras) and intensity statistics.
class Proposer {
 public:
  explicit Proposer(ProposalConfig config);

  Proposal propose(const Frame& frame);
  const ProposalConfig& config() const { return config_; }
  const std::optional<BackgroundModel>& background() const { return background_; }

 private:
  ProposalConfig config_;
  std::optional<BackgroundModel> background_;
  IntensityStats stats_;
};

/// Stateless form: `model` may be null (moving camera).
std::vector<Blob> propose(const Frame& frame, BackgroundModel* model, const IntensityStats& stats,
                          const ProposalConfig& config);

}  // namespace pyrovis
