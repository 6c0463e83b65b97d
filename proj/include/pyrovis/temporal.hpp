#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "pyrovis/proposal.hpp"

namespace pyrovis {

inline constexpr std::size_t kStabilityWindow = 25;

/// Blob pixel counts in the four quadrants of its bounding box: top-left, top-right,
/// bottom-left, bottom-right. Odd extents give the extra row/column to the bottom/right.
using Quadrants = std::array<long, 4>;
Quadrants spatial_distribution(const Blob& blob);

struct ShapeSample {
  double perimeter = 0.0;
  double area = 0.0;
  std::array<double, 4> d{};
};

ShapeSample shape_sample(const Blob& blob);

enum class TrackState { PENDING, FIRE_CONFIRMED, REJECTED };
enum class Stability { STABLE, UNSTABLE, UNDECIDED };

std::string_view to_string(TrackState state);
std::string_view to_string(Stability stability);

enum class Environment { INDOOR, OUTDOOR };

struct StabilityThresholds {
  double t1 = 0.15;
  double t2 = 0.40;
  Environment preset = Environment::INDOOR;
  /// Evaluate the instability test with its middle clause as `sigma_a < t2 mu_a`.
  bool eq6_literal = false;

  static StabilityThresholds for_environment(Environment env);
  void validate() const;
};

struct WindowStats {
  double mu_p = 0.0, mu_a = 0.0, sigma_p = 0.0, sigma_a = 0.0, sigma_d = 0.0;
};

/// Population statistics over the samples (two-pass).
WindowStats window_stats(std::span<const ShapeSample> samples);

struct BlobTrack {
  int id = 0;
  std::deque<ShapeSample> window;  // at most kStabilityWindow samples, oldest first
  long frames_observed = 0;
  std::int64_t first_seen = 0;
  std::int64_t last_seen = 0;
  int misses = 0;
  TrackState state = TrackState::PENDING;
  Rect bbox;
  // Latest classifier verdict for the blob this track follows.
  bool classified = false;
  bool fire = false;
  double margin = 0.0;

  bool window_full() const { return window.size() >= kStabilityWindow; }
  void observe(const Blob& blob, std::int64_t frame_index);
};

/// UNDECIDED unless the window holds exactly kStabilityWindow samples.
Stability stability(const BlobTrack& track, const StabilityThresholds& thresholds);
Stability classify_stats(const WindowStats& s, const StabilityThresholds& thresholds);

/// PENDING tracks with a full window: STABLE or UNSTABLE -> REJECTED, UNDECIDED -> FIRE_CONFIRMED.
/// Returns true when this call confirmed fire.
bool verdict(BlobTrack& track, Stability stability);

struct TrackerParams {
  double iou_threshold = 0.3;
  int max_misses = 5;
};

/// Greedy IoU association of per-frame blobs to tracks.
class Tracker {
 public:
  explicit Tracker(TrackerParams params = {}) : params_(params) {}

  /// Updates tracks with this frame's blobs; returns the track id assigned to each blob.
  /// Tracks unseen for max_misses consecutive frames are closed; pending ones are rejected on close.
  std::vector<int> associate(std::span<const Blob> blobs, std::int64_t frame_index);

  const std::vector<BlobTrack>& tracks() const { return tracks_; }
  std::vector<BlobTrack>& tracks() { return tracks_; }
  BlobTrack* find(int id);
  /// Tracks closed during the most recent associate() call.
  const std::vector<BlobTrack>& closed() const { return closed_; }

 private:
  TrackerParams params_;
  std::vector<BlobTrack> tracks_;
  std::vector<BlobTrack> closed_;
  int next_id_ = 1;
};

/// `frame track_id state perimeter area d1 d2 d3 d4`
void write_track_log_line(std::ostream& out, std::int64_t frame_index, const BlobTrack& track);

}  // namespace pyrovis
