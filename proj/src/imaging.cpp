#include "pyrovis/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "pyrovis/error.hpp"

namespace pyrovis {

std::string_view to_string(ColorSpace space) {
  switch (space) {
    case ColorSpace::RGB: return "RGB";
    case ColorSpace::HSV: return "HSV";
    case ColorSpace::YUV: return "YUV";
    case ColorSpace::LAB: return "LAB";
    case ColorSpace::GRAY: return "GRAY";
  }
  return "?";
}

ColorSpace parse_color_space(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  if (upper == "RGB") return ColorSpace::RGB;
  if (upper == "HSV") return ColorSpace::HSV;
  if (upper == "YUV") return ColorSpace::YUV;
  if (upper == "LAB") return ColorSpace::LAB;
  if (upper == "GRAY") return ColorSpace::GRAY;
  fail(Errc::invalid_argument, "unknown color space '" + std::string(name) + "'");
}

int channel_count(ColorSpace space) { return space == ColorSpace::GRAY ? 1 : 3; }

ChannelDomain channel_domain(ColorSpace space, int channel) {
  switch (space) {
    case ColorSpace::RGB:
    case ColorSpace::YUV:
    case ColorSpace::GRAY:
      // 256 integer levels, so every bin of a power-of-two histogram holds the same number of levels.
      return {0.0, 256.0};
    case ColorSpace::HSV:
      return channel == 0 ? ChannelDomain{0.0, 360.0} : ChannelDomain{0.0, 1.0};
    case ColorSpace::LAB:
      return channel == 0 ? ChannelDomain{0.0, 100.0} : ChannelDomain{-128.0, 128.0};
  }
  return {0.0, 1.0};
}

double iou(const Rect& a, const Rect& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return 0.0;
  const double inter = static_cast<double>(x1 - x0) * (y1 - y0);
  return inter / (static_cast<double>(a.area()) + static_cast<double>(b.area()) - inter);
}

Mask::Mask(int width, int height, std::uint8_t fill)
    : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, fill) {
  if (width < 0 || height < 0) fail(Errc::invalid_argument, "negative mask dimensions");
}

std::size_t Mask::popcount() const {
  return static_cast<std::size_t>(std::count_if(bits_.begin(), bits_.end(), [](std::uint8_t b) { return b != 0; }));
}

// --- Frame ------------------------------------------------------------------

Frame::Frame(int width, int height, ColorSpace space, std::vector<double> pixels, std::int64_t index)
    : width_(width), height_(height), space_(space), pixels_(std::move(pixels)), index_(index) {
  if (width <= 0 || height <= 0) {
    fail(Errc::invalid_argument,
         "frame dimensions must be positive, got " + std::to_string(width) + "x" + std::to_string(height));
  }
  const std::size_t expected = static_cast<std::size_t>(width) * height * channel_count(space);
  if (pixels_.size() != expected) {
    fail(Errc::invalid_argument, "frame pixel buffer has " + std::to_string(pixels_.size()) + " values, expected " +
                                     std::to_string(expected));
  }
  if (space == ColorSpace::RGB || space == ColorSpace::GRAY) {
    for (double v : pixels_) {
      if (!(v >= 0.0 && v <= 255.0)) {
        fail(Errc::invalid_argument, std::string(to_string(space)) + " channel value out of [0, 255]");
      }
    }
  }
}

Frame Frame::filled(int width, int height, ColorSpace space, std::span<const double> color, std::int64_t index) {
  const int ch = channel_count(space);
  if (static_cast<int>(color.size()) != ch) fail(Errc::invalid_argument, "fill color has wrong channel count");
  std::vector<double> px(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0) * ch);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = color[i % ch];
  return Frame(width, height, space, std::move(px), index);
}

Frame Frame::from_rgb8(int width, int height, std::span<const std::uint8_t> rgb, std::int64_t index) {
  std::vector<double> px(rgb.begin(), rgb.end());
  return Frame(width, height, ColorSpace::RGB, std::move(px), index);
}

// --- Color conversion -------------------------------------------------------

namespace {

double srgb_decode(double c) {
  c /= 255.0;
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double srgb_to_linear(double c) {
  static const std::array<double, 256> table = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[i] = srgb_decode(i);
    return t;
  }();
  const int level = static_cast<int>(c);
  if (level >= 0 && level <= 255 && static_cast<double>(level) == c) return table[level];
  return srgb_decode(c);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace

std::array<double, 3> rgb_to_lab(double r, double g, double b) {
  // sRGB primaries, D65 reference white.
  const double rl = srgb_to_linear(r);
  const double gl = srgb_to_linear(g);
  const double bl = srgb_to_linear(b);
  const double x = 0.4124564 * rl + 0.3575761 * gl + 0.1804375 * bl;
  const double y = 0.2126729 * rl + 0.7151522 * gl + 0.0721750 * bl;
  const double z = 0.0193339 * rl + 0.1191920 * gl + 0.9503041 * bl;
  const double fx = lab_f(x / 0.95047);
  const double fy = lab_f(y / 1.00000);
  const double fz = lab_f(z / 1.08883);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  double h = 0.0;
  if (delta > 0.0) {
    if (mx == r) {
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    } else if (mx == g) {
      h = 60.0 * ((b - r) / delta + 2.0);
    } else {
      h = 60.0 * ((r - g) / delta + 4.0);
    }
    if (h < 0.0) h += 360.0;
    if (h >= 360.0) h -= 360.0;
  }
  const double s = mx > 0.0 ? delta / mx : 0.0;
  return {h, s, mx / 255.0};
}

std::array<double, 3> rgb_to_yuv(double r, double g, double b) {
  // BT.601 full range (JFIF), chroma offset by 128.
  const double y = 0.299 * r + 0.587 * g + 0.114 * b;
  const double u = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
  const double v = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
  return {y, u, v};
}

Frame convert(const Frame& frame, ColorSpace target) {
  if (frame.space() != ColorSpace::RGB) {
    fail(Errc::invalid_argument,
         "cannot convert from " + std::string(to_string(frame.space())) + ": only RGB sources are supported");
  }
  if (target == ColorSpace::RGB) return frame;

  const std::size_t n = frame.pixel_count();
  const auto src = frame.pixels();
  std::vector<double> out(n * channel_count(target));
  for (std::size_t i = 0; i < n; ++i) {
    const double r = src[3 * i], g = src[3 * i + 1], b = src[3 * i + 2];
    switch (target) {
      case ColorSpace::GRAY:
        out[i] = rgb_to_gray(r, g, b);
        break;
      case ColorSpace::LAB: {
        const auto v = rgb_to_lab(r, g, b);
        std::copy(v.begin(), v.end(), out.begin() + 3 * i);
        break;
      }
      case ColorSpace::HSV: {
        const auto v = rgb_to_hsv(r, g, b);
        std::copy(v.begin(), v.end(), out.begin() + 3 * i);
        break;
      }
      case ColorSpace::YUV: {
        const auto v = rgb_to_yuv(r, g, b);
        std::copy(v.begin(), v.end(), out.begin() + 3 * i);
        break;
      }
      case ColorSpace::RGB:
        break;
    }
  }
  return Frame(frame.width(), frame.height(), target, std::move(out), frame.index());
}

Frame crop(const Frame& frame, const Rect& roi) {
  const int x0 = std::max(roi.x, 0);
  const int y0 = std::max(roi.y, 0);
  const int x1 = std::min(roi.right(), frame.width());
  const int y1 = std::min(roi.bottom(), frame.height());
  if (x1 <= x0 || y1 <= y0) fail(Errc::invalid_argument, "crop rectangle does not intersect the frame");
  const int ch = frame.channels();
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(x1 - x0) * (y1 - y0) * ch);
  for (int y = y0; y < y1; ++y) {
    const auto row = frame.pixels().subspan((static_cast<std::size_t>(y) * frame.width() + x0) * ch,
                                            static_cast<std::size_t>(x1 - x0) * ch);
    out.insert(out.end(), row.begin(), row.end());
  }
  return Frame(x1 - x0, y1 - y0, frame.space(), std::move(out), frame.index());
}

// --- Integral image -----------------------------------------------------------

IntegralImage::IntegralImage(const Frame& frame, int channel)
    : width_(frame.width()), height_(frame.height()), source_index_(frame.index()) {
  if (channel < 0 || channel >= frame.channels()) fail(Errc::invalid_argument, "integral image channel out of range");
  const std::size_t stride = width_ + 1;
  table_.assign(stride * (height_ + 1), 0.0);
  for (int y = 0; y < height_; ++y) {
    double row = 0.0;
    for (int x = 0; x < width_; ++x) {
      row += frame.at(x, y, channel);
      table_[(y + 1) * stride + x + 1] = table_[y * stride + x + 1] + row;
    }
  }
}

double IntegralImage::rect_sum(int x, int y, int w, int h) const {
  if (x < 0 || y < 0 || w < 0 || h < 0 || x + w > width_ || y + h > height_) {
    std::ostringstream msg;
    msg << "rectangle (x=" << x << ", y=" << y << ", w=" << w << ", h=" << h << ") outside " << width_ << "x"
        << height_ << " image";
    fail(Errc::invalid_argument, msg.str());
  }
  if (w == 0 || h == 0) return 0.0;
  return rect_sum_unchecked(x, y, w, h);
}

IntegralImage integral(const Frame& frame, int channel) { return IntegralImage(frame, channel); }

// --- PPM / PBM ----------------------------------------------------------------

namespace {

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int parse_header_int(std::istream& in, const std::filesystem::path& path, const char* field) {
  const std::string tok = next_token(in);
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v <= 0) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    fail(Errc::data, path.string() + ": bad " + field + " '" + tok + "'");
  }
}

}  // namespace

Frame read_ppm(const std::filesystem::path& path, std::int64_t index) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  if (next_token(in) != "P6") fail(Errc::data, path.string() + ": not a binary PPM (P6)");
  const int w = parse_header_int(in, path, "width");
  const int h = parse_header_int(in, path, "height");
  const int maxval = parse_header_int(in, path, "maxval");
  if (maxval != 255) fail(Errc::data, path.string() + ": only maxval 255 is supported");
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size())) fail(Errc::data, path.string() + ": truncated pixel data");
  return Frame::from_rgb8(w, h, raw, index);
}

void write_ppm(const std::filesystem::path& path, const Frame& frame) {
  if (frame.space() != ColorSpace::RGB) fail(Errc::invalid_argument, "write_ppm expects an RGB frame");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out << "P6\n" << frame.width() << ' ' << frame.height() << "\n255\n";
  std::vector<std::uint8_t> raw(frame.pixels().size());
  std::transform(frame.pixels().begin(), frame.pixels().end(), raw.begin(),
                 [](double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); });
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

void write_pbm(const std::filesystem::path& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::io, "cannot write " + path.string());
  out << "P4\n" << mask.width() << ' ' << mask.height() << '\n';
  const int row_bytes = (mask.width() + 7) / 8;
  std::vector<std::uint8_t> row(row_bytes);
  for (int y = 0; y < mask.height(); ++y) {
    std::fill(row.begin(), row.end(), 0);
    for (int x = 0; x < mask.width(); ++x) {
      if (mask(x, y)) row[x / 8] |= static_cast<std::uint8_t>(0x80u >> (x % 8));
    }
    out.write(reinterpret_cast<const char*>(row.data()), row_bytes);
  }
  if (!out) fail(Errc::io, "write failed: " + path.string());
}

Mask read_pbm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::io, "cannot open " + path.string());
  if (next_token(in) != "P4") fail(Errc::data, path.string() + ": not a binary PBM (P4)");
  const int w = parse_header_int(in, path, "width");
  const int h = parse_header_int(in, path, "height");
  Mask mask(w, h);
  const int row_bytes = (w + 7) / 8;
  std::vector<std::uint8_t> row(row_bytes);
  for (int y = 0; y < h; ++y) {
    in.read(reinterpret_cast<char*>(row.data()), row_bytes);
    if (in.gcount() != row_bytes) fail(Errc::data, path.string() + ": truncated bitmap");
    for (int x = 0; x < w; ++x) mask(x, y) = (row[x / 8] >> (7 - x % 8)) & 1u;
  }
  return mask;
}

std::vector<FrameFile> list_frame_files(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) fail(Errc::io, "not a directory: " + dir.string());
  static const std::regex pattern(R"((\d{6})\.ppm)");
  std::vector<FrameFile> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    std::smatch m;
    if (std::regex_match(name, m, pattern)) files.push_back({std::stoll(m[1].str()), entry.path()});
  }
  std::sort(files.begin(), files.end(), [](const FrameFile& a, const FrameFile& b) { return a.index < b.index; });
  return files;
}

}  // namespace pyrovis
