#include "pyrovis/temporal.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <tuple>

#include "pyrovis/error.hpp"

namespace pyrovis {

Quadrants spatial_distribution(const Blob& blob) {
  const int left_w = blob.bbox.w / 2;
  const int top_h = blob.bbox.h / 2;
  Quadrants q{};
  for (const Point& p : blob.pixels) {
    const bool right = p.x - blob.bbox.x >= left_w;
    const bool bottom = p.y - blob.bbox.y >= top_h;
    ++q[(bottom ? 2 : 0) + (right ? 1 : 0)];
  }
  return q;
}

ShapeSample shape_sample(const Blob& blob) {
  ShapeSample s;
  s.perimeter = static_cast<double>(blob.perimeter);
  s.area = static_cast<double>(blob.area);
  const Quadrants q = spatial_distribution(blob);
  for (int i = 0; i < 4; ++i) s.d[i] = static_cast<double>(q[i]);
  return s;
}

std::string_view to_string(TrackState state) {
  switch (state) {
    case TrackState::PENDING: return "PENDING";
    case TrackState::FIRE_CONFIRMED: return "FIRE_CONFIRMED";
    case TrackState::REJECTED: return "REJECTED";
  }
  return "?";
}

std::string_view to_string(Stability stability) {
  switch (stability) {
    case Stability::STABLE: return "STABLE";
    case Stability::UNSTABLE: return "UNSTABLE";
    case Stability::UNDECIDED: return "UNDECIDED";
  }
  return "?";
}

StabilityThresholds StabilityThresholds::for_environment(Environment env) {
  // Calibrated on the synthetic flame generator; outdoor flames move more with air flow.
  if (env == Environment::OUTDOOR) return {0.25, 0.60, Environment::OUTDOOR, false};
  return {0.15, 0.40, Environment::INDOOR, false};
}

void StabilityThresholds::validate() const {
  if (!(t1 > 0.0 && t1 < t2)) fail(Errc::config, "stability thresholds need 0 < t1 < t2");
}

WindowStats window_stats(std::span<const ShapeSample> samples) {
  WindowStats s;
  if (samples.empty()) return s;
  const double n = static_cast<double>(samples.size());
  std::array<double, 4> mu_d{};
  for (const ShapeSample& x : samples) {
    s.mu_p += x.perimeter;
    s.mu_a += x.area;
    for (int i = 0; i < 4; ++i) mu_d[i] += x.d[i];
  }
  s.mu_p /= n;
  s.mu_a /= n;
  for (double& m : mu_d) m /= n;

  double vp = 0.0, va = 0.0;
  std::array<double, 4> vd{};
  for (const ShapeSample& x : samples) {
    vp += (x.perimeter - s.mu_p) * (x.perimeter - s.mu_p);
    va += (x.area - s.mu_a) * (x.area - s.mu_a);
    for (int i = 0; i < 4; ++i) vd[i] += (x.d[i] - mu_d[i]) * (x.d[i] - mu_d[i]);
  }
  s.sigma_p = std::sqrt(vp / n);
  s.sigma_a = std::sqrt(va / n);
  for (double v : vd) s.sigma_d += std::sqrt(v / n);
  return s;
}

Stability classify_stats(const WindowStats& s, const StabilityThresholds& t) {
  t.validate();
  // The spatial term is compared against the area mean in both tests.
  const bool stable = s.sigma_p < t.t1 * s.mu_p && s.sigma_a < t.t1 * s.mu_a && s.sigma_d < t.t1 * s.mu_a;
  if (stable) return Stability::STABLE;
  const bool area_term = t.eq6_literal ? s.sigma_a < t.t2 * s.mu_a : s.sigma_a > t.t2 * s.mu_a;
  const bool unstable = s.sigma_p > t.t2 * s.mu_p || area_term || s.sigma_d > t.t2 * s.mu_a;
  return unstable ? Stability::UNSTABLE : Stability::UNDECIDED;
}

Stability stability(const BlobTrack& track, const StabilityThresholds& thresholds) {
  if (track.window.size() != kStabilityWindow) return Stability::UNDECIDED;
  const std::vector<ShapeSample> samples(track.window.begin(), track.window.end());
  return classify_stats(window_stats(samples), thresholds);
}

bool verdict(BlobTrack& track, Stability s) {
  if (track.state != TrackState::PENDING || !track.window_full()) return false;
  if (s == Stability::UNDECIDED) {
    track.state = TrackState::FIRE_CONFIRMED;
    return true;
  }
  track.state = TrackState::REJECTED;
  return false;
}

void BlobTrack::observe(const Blob& blob, std::int64_t frame_index) {
  const ShapeSample s = shape_sample(blob);
  window.push_back(s);
  while (window.size() > kStabilityWindow) window.pop_front();
  if (frames_observed == 0) first_seen = frame_index;
  ++frames_observed;
  last_seen = frame_index;
  misses = 0;
  bbox = blob.bbox;
}

BlobTrack* Tracker::find(int id) {
  for (BlobTrack& t : tracks_) {
    if (t.id == id) return &t;
  }
  return nullptr;
}

std::vector<int> Tracker::associate(std::span<const Blob> blobs, std::int64_t frame_index) {
  closed_.clear();
  struct Pair {
    double iou;
    std::size_t track;
    std::size_t blob;
  };
  std::vector<Pair> pairs;
  for (std::size_t t = 0; t < tracks_.size(); ++t) {
    for (std::size_t b = 0; b < blobs.size(); ++b) {
      const double v = iou(tracks_[t].bbox, blobs[b].bbox);
      if (v >= params_.iou_threshold && v > 0.0) pairs.push_back({v, t, b});
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    return std::tie(b.iou, a.track, a.blob) < std::tie(a.iou, b.track, b.blob);
  });

  std::vector<int> assigned(blobs.size(), 0);
  std::vector<bool> track_used(tracks_.size(), false);
  for (const Pair& p : pairs) {
    if (track_used[p.track] || assigned[p.blob] != 0) continue;
    track_used[p.track] = true;
    assigned[p.blob] = tracks_[p.track].id;
    tracks_[p.track].observe(blobs[p.blob], frame_index);
  }

  std::vector<BlobTrack> kept;
  for (std::size_t t = 0; t < tracks_.size(); ++t) {
    BlobTrack& track = tracks_[t];
    if (!track_used[t] && ++track.misses >= params_.max_misses) {
      // A blob that vanishes is not fire: fire does not move by itself.
      if (track.state == TrackState::PENDING) track.state = TrackState::REJECTED;
      closed_.push_back(std::move(track));
    } else {
      kept.push_back(std::move(track));
    }
  }
  tracks_ = std::move(kept);

  for (std::size_t b = 0; b < blobs.size(); ++b) {
    if (assigned[b] != 0) continue;
    BlobTrack track;
    track.id = next_id_++;
    track.observe(blobs[b], frame_index);
    assigned[b] = track.id;
    tracks_.push_back(std::move(track));
  }
  return assigned;
}

void write_track_log_line(std::ostream& out, std::int64_t frame_index, const BlobTrack& track) {
  const ShapeSample s = track.window.empty() ? ShapeSample{} : track.window.back();
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld %d %s %.0f %.0f %.0f %.0f %.0f %.0f\n", static_cast<long long>(frame_index),
                track.id, std::string(to_string(track.state)).c_str(), s.perimeter, s.area, s.d[0], s.d[1], s.d[2],
                s.d[3]);
  out << buf;
}

}  // namespace pyrovis
