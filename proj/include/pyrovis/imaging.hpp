#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pyrovis {

enum class ColorSpace { RGB, HSV, YUV, LAB, GRAY };

std::string_view to_string(ColorSpace space);
ColorSpace parse_color_space(std::string_view name);
int channel_count(ColorSpace space);

/// Value domain [lo, hi] of one channel, used for histogram binning.
struct ChannelDomain {
  double lo;
  double hi;
};
ChannelDomain channel_domain(ColorSpace space, int channel);

struct Rect {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  int right() const { return x + w; }
  int bottom() const { return y + h; }
  long area() const { return static_cast<long>(w) * h; }
  bool contains(int px, int py) const { return px >= x && px < x + w && py >= y && py < y + h; }
  friend bool operator==(const Rect&, const Rect&) = default;
};

double iou(const Rect& a, const Rect& b);

/// Binary per-pixel mask, row-major, one byte per pixel (0 or 1).
class Mask {
 public:
  Mask() = default;
  Mask(int width, int height, std::uint8_t fill = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  std::uint8_t operator()(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  std::uint8_t& operator()(int x, int y) { return bits_[static_cast<std::size_t>(y) * width_ + x]; }
  std::span<const std::uint8_t> bits() const { return bits_; }
  std::span<std::uint8_t> bits() { return bits_; }
  std::size_t popcount() const;
  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// Decoded image. Pixels are row-major, interleaved channels.
///
/// Channel conventions: RGB in [0, 255]; HSV with H in [0, 360) and S, V in
/// [0, 1]; YUV full-range BT.601 with all channels in [0, 255]; LAB with L in
/// [0, 100] and a, b nominally in [-128, 127]; GRAY in [0, 255].
class Frame {
 public:
  Frame() = default;
  Frame(int width, int height, ColorSpace space, std::vector<double> pixels, std::int64_t index = 0);

  /// Frame filled with a single color.
  static Frame filled(int width, int height, ColorSpace space, std::span<const double> color,
                      std::int64_t index = 0);
  static Frame from_rgb8(int width, int height, std::span<const std::uint8_t> rgb, std::int64_t index = 0);

  int width() const { return width_; }
  int height() const { return height_; }
  int channels() const { return channel_count(space_); }
  ColorSpace space() const { return space_; }
  std::int64_t index() const { return index_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }

  double at(int x, int y, int c = 0) const {
    return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels() + c];
  }
  std::span<const double> pixel(int x, int y) const {
    return {pixels_.data() + (static_cast<std::size_t>(y) * width_ + x) * channels(),
            static_cast<std::size_t>(channels())};
  }
  std::span<const double> pixels() const { return pixels_; }

  friend bool operator==(const Frame&, const Frame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  ColorSpace space_ = ColorSpace::RGB;
  std::vector<double> pixels_;
  std::int64_t index_ = 0;
};

// Per-pixel conversions from 8-bit-range RGB.
std::array<double, 3> rgb_to_lab(double r, double g, double b);
std::array<double, 3> rgb_to_hsv(double r, double g, double b);
std::array<double, 3> rgb_to_yuv(double r, double g, double b);
inline double rgb_to_gray(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

/// Converts an RGB frame to `target`. Only RGB sources are supported.
Frame convert(const Frame& frame, ColorSpace target);

/// Copy of the pixels inside `roi` (clipped to the frame). Keeps space and index.
Frame crop(const Frame& frame, const Rect& roi);

/// Summed-area table of one channel: entry(x, y) is the sum over [0,x) x [0,y).
class IntegralImage {
 public:
  IntegralImage() = default;
  IntegralImage(const Frame& frame, int channel);

  int width() const { return width_; }
  int height() const { return height_; }
  std::int64_t source_index() const { return source_index_; }
  double entry(int x, int y) const { return table_[static_cast<std::size_t>(y) * (width_ + 1) + x]; }

  /// Sum over [x, x+w) x [y, y+h); throws on out-of-bounds rectangles.
  double rect_sum(int x, int y, int w, int h) const;

  /// Same as rect_sum without the bounds check.
  double rect_sum_unchecked(int x, int y, int w, int h) const {
    const std::size_t stride = width_ + 1;
    const std::size_t y0 = static_cast<std::size_t>(y) * stride;
    const std::size_t y1 = static_cast<std::size_t>(y + h) * stride;
    return table_[y1 + x + w] - table_[y1 + x] - table_[y0 + x + w] + table_[y0 + x];
  }

 private:
  int width_ = 0;
  int height_ = 0;
  std::int64_t source_index_ = 0;
  std::vector<double> table_;
};

/// Integral image of channel 0 (use on GRAY frames) or of the requested channel.
IntegralImage integral(const Frame& frame, int channel = 0);

// --- File formats -----------------------------------------------------------

/// Reads a binary PPM (P6, maxval 255) as an RGB frame.
Frame read_ppm(const std::filesystem::path& path, std::int64_t index = 0);
/// Writes an RGB frame as binary PPM; channel values are rounded and clamped to [0, 255].
void write_ppm(const std::filesystem::path& path, const Frame& frame);
/// Writes a mask as binary PBM (P4). Set pixels are written as 1 (black).
void write_pbm(const std::filesystem::path& path, const Mask& mask);
Mask read_pbm(const std::filesystem::path& path);

struct FrameFile {
  std::int64_t index;
  std::filesystem::path path;
};

/// Lists `%06d.ppm` files of a directory sorted by frame number.
std::vector<FrameFile> list_frame_files(const std::filesystem::path& dir);

}  // namespace pyrovis
