#include "pyrovis/proposal.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pyrovis/error.hpp"

namespace pyrovis {

namespace {

Frame to_gray(const Frame& frame) {
  if (frame.space() == ColorSpace::GRAY) return frame;
  return convert(frame, ColorSpace::GRAY);
}

}  // namespace

// --- Background model ---------------------------------------------------------

BackgroundModel::BackgroundModel(int width, int height, BackgroundParams params)
    : width_(width), height_(height), params_(params) {
  if (width <= 0 || height <= 0) fail(Errc::invalid_argument, "background model needs positive dimensions");
  if (!(params.learning_rate > 0.0 && params.learning_rate <= 1.0)) fail(Errc::config, "learning rate must lie in (0, 1]");
  if (!(params.lambda > 0.0)) fail(Errc::config, "lambda must be positive");
  if (!(params.std_floor >= 0.0)) fail(Errc::config, "variance floor must be non-negative");
  if (params.warmup_frames < 0) fail(Errc::config, "warm-up must be non-negative");
  mean_.assign(static_cast<std::size_t>(width) * height, 0.0);
  var_.assign(mean_.size(), 0.0);
}

Mask BackgroundModel::update(const Frame& frame) {
  if (frame.width() != width_ || frame.height() != height_) {
    fail(Errc::invalid_argument, "frame " + std::to_string(frame.width()) + "x" + std::to_string(frame.height()) +
                                     " does not match background model " + std::to_string(width_) + "x" +
                                     std::to_string(height_));
  }
  const Frame gray = to_gray(frame);
  const auto px = gray.pixels();
  Mask fg(width_, height_);
  auto bits = fg.bits();

  const bool warm = frames_ >= params_.warmup_frames;
  const double rho = warm ? params_.learning_rate
                          : std::max(params_.learning_rate, 1.0 / static_cast<double>(frames_ + 1));
  for (std::size_t i = 0; i < mean_.size(); ++i) {
    const double d = px[i] - mean_[i];
    const bool foreground = warm && std::abs(d) > params_.lambda * std::max(std::sqrt(var_[i]), params_.std_floor);
    bits[i] = foreground ? 1 : 0;
    if (!foreground) {
      mean_[i] += rho * d;
      var_[i] = (1.0 - rho) * var_[i] + rho * d * d;
    }
  }
  ++frames_;
  return fg;
}

Mask update_background(BackgroundModel& model, const Frame& frame) { return model.update(frame); }

// --- Multi-level threshold ------------------------------------------------------

void ThresholdLadder::validate() const {
  if (rungs.empty()) fail(Errc::config, "threshold ladder is empty");
  for (std::size_t i = 1; i < rungs.size(); ++i) {
    if (!(rungs[i] < rungs[i - 1])) fail(Errc::config, "threshold ladder must be strictly descending");
  }
}

double ThresholdLadder::select(double q) const {
  validate();
  q = std::clamp(q, 0.0, 1.0);
  const double target = rungs.front() - (rungs.front() - rungs.back()) * q;
  double best = rungs.front();
  for (double r : rungs) {
    if (std::abs(r - target) < std::abs(best - target)) best = r;
  }
  return best;
}

void IntensityStats::push(double mean_intensity) {
  means_.push_back(mean_intensity);
  while (means_.size() > std::max<std::size_t>(window_, 1)) means_.pop_front();
}

double IntensityStats::quantile() const {
  if (means_.empty()) return 0.0;
  const double mean = std::accumulate(means_.begin(), means_.end(), 0.0) / static_cast<double>(means_.size());
  return std::clamp(mean / 255.0, 0.0, 1.0);
}

double mean_intensity(const Frame& gray) {
  const Frame g = to_gray(gray);
  const auto px = g.pixels();
  return std::accumulate(px.begin(), px.end(), 0.0) / static_cast<double>(px.size());
}

CandidateMask multi_level_threshold(const Frame& frame, const IntensityStats& stats, const ThresholdLadder& ladder) {
  const Frame gray = to_gray(frame);
  CandidateMask out;
  out.frame_index = frame.index();
  out.method = MaskMethod::MULTI_LEVEL_THRESHOLD;
  out.threshold = ladder.select(stats.quantile());
  out.mask = Mask(gray.width(), gray.height());
  auto bits = out.mask.bits();
  const auto px = gray.pixels();
  for (std::size_t i = 0; i < px.size(); ++i) bits[i] = px[i] >= out.threshold ? 1 : 0;
  return out;
}

// --- Morphology and components ----------------------------------------------------

Mask morphological_open(const Mask& mask) {
  const int w = mask.width(), h = mask.height();
  auto pass = [w, h](const Mask& in, bool erode, bool horizontal) {
    Mask out(w, h);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        int hits = 0, total = 0;
        for (int k = -1; k <= 1; ++k) {
          const int xx = horizontal ? x + k : x;
          const int yy = horizontal ? y : y + k;
          ++total;
          if (xx >= 0 && yy >= 0 && xx < w && yy < h && in(xx, yy)) ++hits;
        }
        out(x, y) = erode ? (hits == total) : (hits > 0);
      }
    }
    return out;
  };
  const Mask eroded = pass(pass(mask, true, true), true, false);
  return pass(pass(eroded, false, true), false, false);
}

Mask Blob::local_mask() const {
  Mask m(bbox.w, bbox.h);
  for (const Point& p : pixels) m(p.x - bbox.x, p.y - bbox.y) = 1;
  return m;
}

Blob make_blob(std::vector<Point> pixels) {
  if (pixels.empty()) fail(Errc::invalid_argument, "blob has no pixels");
  std::sort(pixels.begin(), pixels.end(), [](const Point& a, const Point& b) { return a.y != b.y ? a.y < b.y : a.x < b.x; });
  Blob b;
  int x0 = pixels.front().x, x1 = x0, y0 = pixels.front().y, y1 = y0;
  double sx = 0.0, sy = 0.0;
  for (const Point& p : pixels) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
    sx += p.x;
    sy += p.y;
  }
  b.bbox = {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
  b.area = static_cast<long>(pixels.size());
  b.cx = sx / static_cast<double>(b.area);
  b.cy = sy / static_cast<double>(b.area);
  b.pixels = std::move(pixels);

  const Mask local = b.local_mask();
  auto inside = [&](int x, int y) { return x >= 0 && y >= 0 && x < local.width() && y < local.height() && local(x, y); };
  for (const Point& p : b.pixels) {
    const int lx = p.x - b.bbox.x, ly = p.y - b.bbox.y;
    b.perimeter += !inside(lx - 1, ly) + !inside(lx + 1, ly) + !inside(lx, ly - 1) + !inside(lx, ly + 1);
  }
  return b;
}

std::vector<Blob> connected_components(const Mask& mask) {
  const int w = mask.width(), h = mask.height();
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(w) * h, 0);
  std::vector<Blob> blobs;
  std::vector<Point> stack;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t at = static_cast<std::size_t>(y) * w + x;
      if (!mask(x, y) || seen[at]) continue;
      std::vector<Point> pixels;
      seen[at] = 1;
      stack.push_back({x, y});
      while (!stack.empty()) {
        const Point p = stack.back();
        stack.pop_back();
        pixels.push_back(p);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const int nx = p.x + dx, ny = p.y + dy;
            if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
            const std::size_t n = static_cast<std::size_t>(ny) * w + nx;
            if (mask(nx, ny) && !seen[n]) {
              seen[n] = 1;
              stack.push_back({nx, ny});
            }
          }
        }
      }
      blobs.push_back(make_blob(std::move(pixels)));
    }
  }
  return blobs;
}

long scaled_min_area(double min_area_320x240, int width, int height) {
  const double scale = static_cast<double>(width) * height / (320.0 * 240.0);
  return std::max(1L, std::lround(min_area_320x240 * scale));
}

std::vector<Blob> extract_blobs(const Mask& mask, long min_area) {
  std::vector<Blob> blobs = connected_components(mask);
  std::erase_if(blobs, [min_area](const Blob& b) { return b.area < min_area; });
  std::stable_sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) { return a.area > b.area; });
  return blobs;
}

// --- Proposer -----------------------------------------------------------------------

namespace {

Proposal run_proposal(const Frame& frame, BackgroundModel* model, const IntensityStats& stats,
                      const ProposalConfig& config) {
  Proposal out;
  out.mask = multi_level_threshold(frame, stats, config.ladder);
  if (model) {
    const Mask fg = model->update(frame);
    auto bits = out.mask.mask.bits();
    const auto fgb = fg.bits();
    for (std::size_t i = 0; i < bits.size(); ++i) bits[i] &= fgb[i];
    out.mask.method = MaskMethod::INTERSECTION;
  }
  out.mask.mask = morphological_open(out.mask.mask);
  out.blobs = extract_blobs(out.mask.mask, scaled_min_area(config.min_blob_area, frame.width(), frame.height()));
  return out;
}

}  // namespace

Proposer::Proposer(ProposalConfig config) : config_(std::move(config)), stats_(config_.stats_window) {
  config_.ladder.validate();
  if (config_.min_blob_area < 0.0) fail(Errc::config, "min_blob_area must be non-negative");
}

Proposal Proposer::propose(const Frame& frame) {
  const Frame gray = to_gray(frame);
  stats_.push(mean_intensity(gray));
  if (config_.camera == CameraMode::STATIC && !background_) {
    background_.emplace(frame.width(), frame.height(), config_.background);
  }
  return run_proposal(gray, background_ ? &*background_ : nullptr, stats_, config_);
}

std::vector<Blob> propose(const Frame& frame, BackgroundModel* model, const IntensityStats& stats,
                          const ProposalConfig& config) {
  return run_proposal(frame, model, stats, config).blobs;
}

}  // namespace pyrovis
