#include "pyrovis/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "pyrovis/error.hpp"

namespace pyrovis {

namespace {

int bin_of(double value, ChannelDomain dom, int bins) {
  const int b = static_cast<int>(std::floor((value - dom.lo) / (dom.hi - dom.lo) * bins));
  return std::clamp(b, 0, bins - 1);
}

// Sub-region sample spacing of the SURF window; a 9-px box filter is sigma 1.2.
double surf_step(double scale) { return 1.2 * scale / 9.0; }

int haar_half(double step) { return std::max(1, static_cast<int>(std::lround(step))); }

void normalize_blocks(std::span<double> bins, int per_channel) {
  for (std::size_t start = 0; start < bins.size(); start += per_channel) {
    double total = 0.0;
    for (int i = 0; i < per_channel; ++i) total += bins[start + i];
    if (total > 0.0) {
      for (int i = 0; i < per_channel; ++i) bins[start + i] /= total;
    }
  }
}

}  // namespace

// --- Global histogram -------------------------------------------------------

std::array<double, kGlobalBins> global_histogram_counts(const Frame& frame, ColorSpace space, const Mask* mask) {
  if (space == ColorSpace::GRAY) fail(Errc::invalid_argument, "global histogram needs a 3-channel color space");
  if (mask && (mask->width() != frame.width() || mask->height() != frame.height())) {
    fail(Errc::invalid_argument, "histogram mask dimensions differ from frame");
  }
  const bool convert_pixels = frame.space() != space;
  if (convert_pixels && frame.space() != ColorSpace::RGB) {
    fail(Errc::invalid_argument, "cannot histogram a " + std::string(to_string(frame.space())) + " frame in " +
                                     std::string(to_string(space)));
  }
  const std::array<ChannelDomain, 3> dom{channel_domain(space, 0), channel_domain(space, 1), channel_domain(space, 2)};

  std::array<double, kGlobalBins> counts{};
  for (int y = 0; y < frame.height(); ++y) {
    for (int x = 0; x < frame.width(); ++x) {
      if (mask && !(*mask)(x, y)) continue;
      const auto px = frame.pixel(x, y);
      std::array<double, 3> v{px[0], px[1], px[2]};
      if (convert_pixels) {
        switch (space) {
          case ColorSpace::LAB: v = rgb_to_lab(v[0], v[1], v[2]); break;
          case ColorSpace::HSV: v = rgb_to_hsv(v[0], v[1], v[2]); break;
          case ColorSpace::YUV: v = rgb_to_yuv(v[0], v[1], v[2]); break;
          default: break;
        }
      }
      for (int c = 0; c < 3; ++c) counts[c * kGlobalBinsPerChannel + bin_of(v[c], dom[c], kGlobalBinsPerChannel)] += 1.0;
    }
  }
  return counts;
}

GlobalColorHistogram global_histogram(const Frame& frame, ColorSpace space, const Mask* mask) {
  GlobalColorHistogram h;
  h.space = space;
  h.bins = global_histogram_counts(frame, space, mask);
  double total = 0.0;
  for (int i = 0; i < kGlobalBinsPerChannel; ++i) total += h.bins[i];
  if (total == 0.0) fail(Errc::data, "empty mask region: no pixels to histogram");
  normalize_blocks(h.bins, kGlobalBinsPerChannel);
  return h;
}

// --- SURF ---------------------------------------------------------------------

std::array<double, kDescriptorDims> LocalDescriptor::values() const {
  std::array<double, kDescriptorDims> v{};
  std::copy(surf.begin(), surf.end(), v.begin());
  std::copy(color.begin(), color.end(), v.begin() + kSurfDims);
  return v;
}

Rect surf_footprint(double cx, double cy, double scale) {
  const double s = surf_step(scale);
  const int half = haar_half(s);
  const int x0 = static_cast<int>(std::lround(cx - 9.5 * s)) - half;
  const int x1 = static_cast<int>(std::lround(cx + 9.5 * s)) + half;
  const int y0 = static_cast<int>(std::lround(cy - 9.5 * s)) - half;
  const int y1 = static_cast<int>(std::lround(cy + 9.5 * s)) + half;
  return {x0, y0, x1 - x0, y1 - y0};
}

bool surf_fits(int width, int height, double cx, double cy, double scale) {
  const Rect r = surf_footprint(cx, cy, scale);
  return r.x >= 0 && r.y >= 0 && r.right() <= width && r.bottom() <= height;
}

std::array<double, kSurfDims> surf_descriptor(const IntegralImage& ii, double cx, double cy, double scale) {
  if (!(scale > 0.0)) fail(Errc::invalid_argument, "SURF scale must be positive");
  if (!surf_fits(ii.width(), ii.height(), cx, cy, scale)) {
    const Rect r = surf_footprint(cx, cy, scale);
    fail(Errc::invalid_argument, "SURF window [" + std::to_string(r.x) + "," + std::to_string(r.right()) + ")x[" +
                                     std::to_string(r.y) + "," + std::to_string(r.bottom()) + ") exits the " +
                                     std::to_string(ii.width()) + "x" + std::to_string(ii.height()) + " image");
  }
  const double s = surf_step(scale);
  const int half = haar_half(s);
  const double inv_two_sigma2 = 1.0 / (2.0 * (3.3 * s) * (3.3 * s));

  // 20x20 samples, 5x5 per sub-region.
  std::array<int, 20> xs{}, ys{};
  std::array<double, 20> offsets{};
  for (int i = 0; i < 20; ++i) {
    offsets[i] = (i - 10 + 0.5) * s;
    xs[i] = static_cast<int>(std::lround(cx + offsets[i]));
    ys[i] = static_cast<int>(std::lround(cy + offsets[i]));
  }

  std::array<double, kSurfDims> desc{};
  for (int j = 0; j < 20; ++j) {
    const int py = ys[j];
    for (int i = 0; i < 20; ++i) {
      const int px = xs[i];
      const double g = std::exp(-(offsets[i] * offsets[i] + offsets[j] * offsets[j]) * inv_two_sigma2);
      const double dx = ii.rect_sum_unchecked(px, py - half, half, 2 * half) -
                        ii.rect_sum_unchecked(px - half, py - half, half, 2 * half);
      const double dy = ii.rect_sum_unchecked(px - half, py, 2 * half, half) -
                        ii.rect_sum_unchecked(px - half, py - half, 2 * half, half);
      const int cell = ((j / 5) * 4 + i / 5) * 4;
      desc[cell + 0] += g * dx;
      desc[cell + 1] += g * dy;
      desc[cell + 2] += g * std::abs(dx);
      desc[cell + 3] += g * std::abs(dy);
    }
  }

  double norm2 = 0.0;
  for (double v : desc) norm2 += v * v;
  // Haar responses of a flat patch cancel up to rounding in the summed-area table.
  if (norm2 < 1e-6) return {};
  const double inv = 1.0 / std::sqrt(norm2);
  for (double& v : desc) v *= inv;
  return desc;
}

// --- Local color ----------------------------------------------------------------

std::array<double, kLocalColorBins> local_color_histogram(const Frame& frame, double cx, double cy, double scale) {
  if (frame.space() != ColorSpace::LAB && frame.space() != ColorSpace::RGB) {
    fail(Errc::invalid_argument, "local color histogram needs an RGB or LAB frame");
  }
  const int side = std::max(1, static_cast<int>(std::lround(scale)));
  const int x0 = static_cast<int>(std::lround(cx)) - side / 2;
  const int y0 = static_cast<int>(std::lround(cy)) - side / 2;
  const int xa = std::max(x0, 0), xb = std::min(x0 + side, frame.width());
  const int ya = std::max(y0, 0), yb = std::min(y0 + side, frame.height());
  if (xa >= xb || ya >= yb) fail(Errc::invalid_argument, "local color scope does not intersect the frame");

  const std::array<ChannelDomain, 3> dom{channel_domain(ColorSpace::LAB, 0), channel_domain(ColorSpace::LAB, 1),
                                         channel_domain(ColorSpace::LAB, 2)};
  std::array<double, kLocalColorBins> h{};
  const bool is_rgb = frame.space() == ColorSpace::RGB;
  for (int y = ya; y < yb; ++y) {
    for (int x = xa; x < xb; ++x) {
      const auto px = frame.pixel(x, y);
      const std::array<double, 3> lab = is_rgb ? rgb_to_lab(px[0], px[1], px[2]) : std::array<double, 3>{px[0], px[1], px[2]};
      for (int c = 0; c < 3; ++c) h[c * kLocalColorBinsPerChannel + bin_of(lab[c], dom[c], kLocalColorBinsPerChannel)] += 1.0;
    }
  }
  normalize_blocks(h, kLocalColorBinsPerChannel);
  return h;
}

// --- Sampling -------------------------------------------------------------------

void SamplingPlan::validate() const {
  if (interval < 1) fail(Errc::config, "sampling interval must be >= 1");
  if (scales.empty()) fail(Errc::config, "sampling plan needs at least one scale");
  for (double s : scales) {
    if (!(s > 0.0)) fail(Errc::config, "sampling scales must be positive");
  }
  if (!(hessian_threshold > 0.0)) fail(Errc::config, "hessian threshold must be positive");
}

FeatureFrame FeatureFrame::prepare(const Frame& rgb) {
  if (rgb.space() != ColorSpace::RGB) fail(Errc::invalid_argument, "feature extraction expects an RGB frame");
  return {rgb, convert(rgb, ColorSpace::LAB), integral(convert(rgb, ColorSpace::GRAY))};
}

std::vector<int> dense_axis_positions(int origin, int extent, int interval) {
  std::vector<int> out;
  for (int p = origin + interval / 2; p < origin + extent; p += interval) out.push_back(p);
  // Regions narrower than half an interval still get their middle sampled.
  if (out.empty() && extent > 0) out.push_back(origin + extent / 2);
  return out;
}

namespace {

LocalDescriptor describe(const FeatureFrame& frame, double x, double y, double scale) {
  LocalDescriptor d;
  d.x = x;
  d.y = y;
  d.scale = scale;
  d.surf = surf_descriptor(frame.gray, x, y, scale);
  d.color = local_color_histogram(frame.lab, x, y, scale);
  return d;
}

bool admitted(const SampleRegion& region, int x, int y) {
  if (region.roi && !region.roi->contains(x, y)) return false;
  if (region.mask && !(*region.mask)(x, y)) return false;
  return true;
}

}  // namespace

std::vector<LocalDescriptor> sample(const FeatureFrame& frame, const SamplingPlan& plan, const SampleRegion& region) {
  plan.validate();
  const int w = frame.rgb.width();
  const int h = frame.rgb.height();
  if (region.mask && (region.mask->width() != w || region.mask->height() != h)) {
    fail(Errc::invalid_argument, "sampling mask dimensions differ from frame");
  }
  std::vector<LocalDescriptor> out;

  if (plan.mode == SamplingMode::KEYPOINT) {
    if (!surf_fits(w, h, w / 2, h / 2, 9.0)) fail(Errc::data, "no valid sample positions");
    for (const Keypoint& kp : detect_keypoints(frame.gray, plan.hessian_threshold)) {
      if (!admitted(region, kp.x, kp.y) || !surf_fits(w, h, kp.x, kp.y, kp.scale)) continue;
      out.push_back(describe(frame, kp.x, kp.y, kp.scale));
    }
    return out;
  }

  const Rect roi = region.roi.value_or(Rect{0, 0, w, h});
  const auto xs = dense_axis_positions(roi.x, roi.w, plan.interval);
  const auto ys = dense_axis_positions(roi.y, roi.h, plan.interval);
  bool any_fit = false;
  for (double scale : plan.scales) {
    for (int y : ys) {
      for (int x : xs) {
        if (!surf_fits(w, h, x, y, scale)) continue;
        any_fit = true;
        if (region.mask && !(*region.mask)(x, y)) continue;
        out.push_back(describe(frame, x, y, scale));
      }
    }
  }
  if (!any_fit) fail(Errc::data, "no valid sample positions");
  return out;
}

std::vector<LocalDescriptor> sample(const Frame& rgb, const SamplingPlan& plan, const SampleRegion& region) {
  return sample(FeatureFrame::prepare(rgb), plan, region);
}

// --- Fast Hessian -----------------------------------------------------------------

namespace {

struct Box {
  int x0, y0, x1, y1;
  double weight;
};

// Box-filter layouts for the 9x9 filter, as (x0, y0, x1, y1, weight) within the window.
constexpr Box kDxx9[] = {{0, 2, 3, 7, 1}, {3, 2, 6, 7, -2}, {6, 2, 9, 7, 1}};
constexpr Box kDyy9[] = {{2, 0, 7, 3, 1}, {2, 3, 7, 6, -2}, {2, 6, 7, 9, 1}};
constexpr Box kDxy9[] = {{1, 1, 4, 4, 1}, {5, 1, 8, 4, -1}, {1, 5, 4, 8, -1}, {5, 5, 8, 8, 1}};

template <std::size_t N>
std::array<Box, N> resize_pattern(const Box (&src)[N], int size) {
  const double ratio = size / 9.0;
  std::array<Box, N> out{};
  for (std::size_t k = 0; k < N; ++k) {
    out[k] = {static_cast<int>(std::lround(src[k].x0 * ratio)), static_cast<int>(std::lround(src[k].y0 * ratio)),
              static_cast<int>(std::lround(src[k].x1 * ratio)), static_cast<int>(std::lround(src[k].y1 * ratio)),
              src[k].weight};
  }
  return out;
}

template <std::size_t N>
double apply(const IntegralImage& ii, const std::array<Box, N>& boxes, int wx, int wy) {
  double sum = 0.0;
  for (const Box& b : boxes) sum += b.weight * ii.rect_sum_unchecked(wx + b.x0, wy + b.y0, b.x1 - b.x0, b.y1 - b.y0);
  return sum;
}

struct Layer {
  int size;
  std::vector<double> det;  // indexed on the octave's sampling grid
};

}  // namespace

std::vector<Keypoint> detect_keypoints(const IntegralImage& ii, double threshold) {
  constexpr int kOctaves[2][4] = {{9, 15, 21, 27}, {15, 27, 39, 51}};
  const int w = ii.width(), h = ii.height();
  std::vector<Keypoint> out;

  for (int o = 0; o < 2; ++o) {
    const int step = 1 << o;
    const int gw = w / step, gh = h / step;
    if (gw < 3 || gh < 3) break;
    std::vector<Layer> layers;
    for (int size : kOctaves[o]) {
      Layer layer{size, std::vector<double>(static_cast<std::size_t>(gw) * gh, 0.0)};
      const auto dxx = resize_pattern(kDxx9, size);
      const auto dyy = resize_pattern(kDyy9, size);
      const auto dxy = resize_pattern(kDxy9, size);
      const double norm = 1.0 / (static_cast<double>(size) * size);
      const int r = (size - 1) / 2;
      for (int gy = 0; gy < gh; ++gy) {
        const int cy = gy * step;
        if (cy - r < 0 || cy - r + size > h) continue;
        for (int gx = 0; gx < gw; ++gx) {
          const int cx = gx * step;
          if (cx - r < 0 || cx - r + size > w) continue;
          const double xx = apply(ii, dxx, cx - r, cy - r) * norm;
          const double yy = apply(ii, dyy, cx - r, cy - r) * norm;
          const double xy = apply(ii, dxy, cx - r, cy - r) * norm;
          layer.det[static_cast<std::size_t>(gy) * gw + gx] = xx * yy - 0.81 * xy * xy;
        }
      }
      layers.push_back(std::move(layer));
    }

    for (int l = 1; l + 1 < static_cast<int>(layers.size()); ++l) {
      const int border = (layers[l + 1].size - 1) / 2 / step + 1;
      for (int gy = border; gy < gh - border; ++gy) {
        for (int gx = border; gx < gw - border; ++gx) {
          const double v = layers[l].det[static_cast<std::size_t>(gy) * gw + gx];
          if (v <= threshold) continue;
          bool is_max = true;
          for (int dl = -1; dl <= 1 && is_max; ++dl) {
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
              for (int dx = -1; dx <= 1; ++dx) {
                if (dl == 0 && dy == 0 && dx == 0) continue;
                if (layers[l + dl].det[static_cast<std::size_t>(gy + dy) * gw + gx + dx] >= v) {
                  is_max = false;
                  break;
                }
              }
            }
          }
          if (is_max) out.push_back({gx * step, gy * step, static_cast<double>(layers[l].size), v});
        }
      }
    }
  }
  std::sort(out.begin(), out.end(), [](const Keypoint& a, const Keypoint& b) {
    if (a.y != b.y) return a.y < b.y;
    if (a.x != b.x) return a.x < b.x;
    return a.scale < b.scale;
  });
  return out;
}

void write_descriptors(std::ostream& out, std::span<const LocalDescriptor> descriptors) {
  char buf[32];
  for (const LocalDescriptor& d : descriptors) {
    std::snprintf(buf, sizeof buf, "%.9g", d.x);
    out << buf;
    std::snprintf(buf, sizeof buf, " %.9g", d.y);
    out << buf;
    std::snprintf(buf, sizeof buf, " %.9g", d.scale);
    out << buf;
    for (double v : d.values()) {
      std::snprintf(buf, sizeof buf, " %.9g", v);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace pyrovis
