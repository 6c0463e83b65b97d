#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pyrovis/imaging.hpp"

namespace pyrovis {

inline constexpr int kGlobalBinsPerChannel = 32;
inline constexpr int kGlobalBins = 3 * kGlobalBinsPerChannel;
inline constexpr int kSurfDims = 64;
inline constexpr int kLocalColorBinsPerChannel = 8;
inline constexpr int kLocalColorBins = 3 * kLocalColorBinsPerChannel;
inline constexpr int kDescriptorDims = kSurfDims + kLocalColorBins;

/// 96 bins: three 32-bin per-channel blocks, each L1-normalized.
struct GlobalColorHistogram {
  std::array<double, kGlobalBins> bins{};
  ColorSpace space = ColorSpace::LAB;
};

/// Raw per-bin pixel counts, before normalization.
std::array<double, kGlobalBins> global_histogram_counts(const Frame& frame, ColorSpace space,
                                                        const Mask* mask = nullptr);

/// `frame` must be RGB or already in `space`. Throws when the mask selects no pixel.
GlobalColorHistogram global_histogram(const Frame& frame, ColorSpace space, const Mask* mask = nullptr);

/// 64-dim upright SURF plus a 24-bin LAB histogram of the kernel's square scope.
struct LocalDescriptor {
  std::array<double, kSurfDims> surf{};
  std::array<double, kLocalColorBins> color{};
  double x = 0.0;
  double y = 0.0;
  double scale = 0.0;

  std::array<double, kDescriptorDims> values() const;
};

/// Pixel rectangle read by surf_descriptor for a kernel of `scale` px at (cx, cy).
Rect surf_footprint(double cx, double cy, double scale);
bool surf_fits(int width, int height, double cx, double cy, double scale);

/// Upright SURF-64 over `ii` (a gray integral image). `scale` is the box-filter
/// size in pixels; 9 corresponds to the smallest SURF filter (sigma 1.2).
/// Flat neighbourhoods yield an all-zero vector.
std::array<double, kSurfDims> surf_descriptor(const IntegralImage& ii, double cx, double cy, double scale);

/// 8 bins per LAB channel over the clipped square of side `scale` centered on (cx, cy).
/// `frame` may be RGB (converted per pixel) or LAB.
std::array<double, kLocalColorBins> local_color_histogram(const Frame& frame, double cx, double cy, double scale);

enum class SamplingMode { DENSE, KEYPOINT };

struct SamplingPlan {
  SamplingMode mode = SamplingMode::DENSE;
  int interval = 9;
  std::vector<double> scales{9.0};
  double hessian_threshold = 100.0;

  void validate() const;
};

/// An RGB frame together with the derived views that descriptor extraction reads.
struct FeatureFrame {
  Frame rgb;
  Frame lab;
  IntegralImage gray;

  static FeatureFrame prepare(const Frame& rgb);
};

/// Restricts sampling: centers must lie inside `roi` (when set) and on a set mask pixel (when set).
struct SampleRegion {
  std::optional<Rect> roi;
  const Mask* mask = nullptr;
};

/// Dense grid positions along one axis: origin + interval/2 + i*interval inside [origin, origin+extent).
std::vector<int> dense_axis_positions(int origin, int extent, int interval);

/// Throws "no valid sample positions" when no kernel fits the frame at all.
std::vector<LocalDescriptor> sample(const FeatureFrame& frame, const SamplingPlan& plan,
                                    const SampleRegion& region = {});
std::vector<LocalDescriptor> sample(const Frame& rgb, const SamplingPlan& plan, const SampleRegion& region = {});

struct Keypoint {
  int x;
  int y;
  double scale;
  double response;
};

/// Fast-Hessian detector: box-filter Hessian determinant over two octaves, 3x3x3 non-maximum suppression.
std::vector<Keypoint> detect_keypoints(const IntegralImage& ii, double threshold);

/// `x y scale v1..v88` per line, 9 significant digits.
void write_descriptors(std::ostream& out, std::span<const LocalDescriptor> descriptors);

}  // namespace pyrovis
