#include "pyrovis/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "random.hpp"

namespace pyrovis::synthetic {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) { return detail::derive_seed(a, b); }

struct Canvas {
  int w, h;
  std::vector<double> px;

  Canvas(int width, int height) : w(width), h(height), px(static_cast<std::size_t>(width) * height * 3, 0.0) {}
  void set(int x, int y, double r, double g, double b) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    double* p = &px[(static_cast<std::size_t>(y) * w + x) * 3];
    p[0] = r;
    p[1] = g;
    p[2] = b;
  }
  void add_noise(detail::Rng& rng, double sigma) {
    for (double& v : px) v = std::clamp(v + sigma * rng.normal(), 0.0, 255.0);
  }
  Frame frame(std::int64_t index) && {
    for (double& v : px) v = std::clamp(std::round(v), 0.0, 255.0);
    return Frame(w, h, ColorSpace::RGB, std::move(px), index);
  }
};

struct Box {
  int x0 = 1 << 30, y0 = 1 << 30, x1 = -1, y1 = -1;
  void add(int x, int y) {
    x0 = std::min(x0, x);
    y0 = std::min(y0, y);
    x1 = std::max(x1, x);
    y1 = std::max(y1, y);
  }
  Rect rect() const { return x1 < 0 ? Rect{} : Rect{x0, y0, x1 - x0 + 1, y1 - y0 + 1}; }
};

struct FlameDraw {
  double height, sway, phase;
  double core_r = 255, core_g = 235, core_b = 150;
};

// Rounded base, linear taper to the tip, rippled by moving tongues.
double half_width(const FlameShape& s, const FlameDraw& d, double r) {
  const double profile = r < 0.3 ? std::sqrt(std::max(0.0, 1.0 - std::pow((0.3 - r) / 0.3, 2.0))) : (1.0 - r) / 0.7;
  const double ripple = 1.0 + s.tongue_amplitude * std::sin(2.0 * std::numbers::pi * (3.0 * r + d.phase));
  return 0.5 * s.width * std::max(0.0, profile) * ripple;
}

Rect draw_flame(Canvas* canvas, const FlameShape& s, const FlameDraw& d) {
  Box core;
  const int top = static_cast<int>(std::floor(s.base_y - d.height)) - 1;
  const int bottom = static_cast<int>(std::floor(s.base_y));
  const int reach = static_cast<int>(std::ceil(0.5 * s.width * 1.6 + s.sway)) + 4;
  for (int y = top; y <= bottom; ++y) {
    const double r = (s.base_y - y) / d.height;
    if (r < 0.0 || r > 1.0) continue;
    const double xc = s.base_x + d.sway * std::pow(r, 1.5);
    const double hw = half_width(s, d, r);
    for (int x = static_cast<int>(s.base_x) - reach; x <= static_cast<int>(s.base_x) + reach; ++x) {
      const double off = std::abs(x + 0.5 - xc);
      if (off <= 0.7 * hw && r < 0.92) {
        core.add(x, y);
        if (canvas) canvas->set(x, y, d.core_r, d.core_g, d.core_b);
      } else if (off <= hw) {
        if (canvas) canvas->set(x, y, 250, 150, 40);
      } else if (off <= 1.35 * hw + 2.0) {
        if (canvas) canvas->set(x, y, 160, 60, 20);
      }
    }
  }
  return core.rect();
}

FlameDraw flame_draw(const FlameShape& s, detail::Rng& rng) {
  FlameDraw d;
  d.height = s.height * (1.0 + s.height_jitter * rng.uniform(-1.0, 1.0));
  d.sway = s.sway * rng.uniform(-1.0, 1.0);
  d.phase = rng.uniform();
  return d;
}

Rect draw_disk(Canvas& c, double cx, double cy, double radius, const double core[3], const double halo[3]) {
  Box box;
  const int reach = static_cast<int>(std::ceil(radius + 4));
  for (int y = static_cast<int>(cy) - reach; y <= static_cast<int>(cy) + reach; ++y) {
    for (int x = static_cast<int>(cx) - reach; x <= static_cast<int>(cx) + reach; ++x) {
      const double dist = std::hypot(x + 0.5 - cx, y + 0.5 - cy);
      if (dist <= radius) {
        c.set(x, y, core[0], core[1], core[2]);
        box.add(x, y);
      } else if (dist <= radius + 3.0) {
        c.set(x, y, halo[0], halo[1], halo[2]);
      }
    }
  }
  return box.rect();
}

Rect draw_ellipse(Canvas* c, double cx, double cy, double ax, double ay) {
  Box box;
  for (int y = static_cast<int>(cy - ay * 1.4) - 1; y <= static_cast<int>(cy + ay * 1.4) + 1; ++y) {
    for (int x = static_cast<int>(cx - ax * 1.4) - 1; x <= static_cast<int>(cx + ax * 1.4) + 1; ++x) {
      const double u = (x + 0.5 - cx) / ax, v = (y + 0.5 - cy) / ay;
      const double q = u * u + v * v;
      if (q <= 1.0) {
        if (c) c->set(x, y, 255, 250, 210);
        if (x >= 0 && y >= 0 && (!c || (x < c->w && y < c->h))) box.add(x, y);
      } else if (q <= 1.9 && c) {
        c->set(x, y, 200, 190, 150);
      }
    }
  }
  return box.rect();
}

void draw_background(Canvas& c, std::uint64_t seed, double level) {
  for (int y = 0; y < c.h; ++y) {
    for (int x = 0; x < c.w; ++x) {
      c.set(x, y, level + 20.0 * x / c.w, level + 15.0 * y / c.h, level + 5.0);
    }
  }
  detail::Rng rng(mix(seed, 0xB6));
  const int pieces = 6;
  for (int i = 0; i < pieces; ++i) {
    const int w = 10 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, c.w / 4))));
    const int h = 10 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, c.h / 4))));
    const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.w)));
    const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(c.h)));
    const double v = rng.uniform(level + 10.0, level + 60.0);
    for (int y = y0; y < std::min(c.h, y0 + h); ++y) {
      for (int x = x0; x < std::min(c.w, x0 + w); ++x) c.set(x, y, v, v * 0.95, v * 0.9);
    }
  }
}

int car_start(const SceneSpec& spec, int index) {
  if (!spec.car || index < spec.car_first || index > spec.car_last || spec.car_period <= 0) return -1;
  const int start = spec.car_first + (index - spec.car_first) / spec.car_period * spec.car_period;
  const double x = -10.0 + spec.car_speed * (index - start);
  return x < spec.width + 10.0 ? start : -1;
}

Frame crop_around(Frame&& canvas, const Rect& core, int margin) {
  const Rect roi{core.x - margin, core.y - margin, core.w + 2 * margin, core.h + 2 * margin};
  return crop(canvas, roi);
}

}  // namespace

Frame render_scene(const SceneSpec& spec, int index) {
  Canvas c(spec.width, spec.height);
  draw_background(c, spec.seed, 30.0);
  detail::Rng rng(mix(spec.seed, static_cast<std::uint64_t>(index) + 1));
  if (spec.lamp && index >= spec.lamp_onset) {
    const double core[3] = {250, 250, 255}, halo[3] = {190, 190, 200};
    draw_disk(c, spec.lamp_x, spec.lamp_y, spec.lamp_radius, core, halo);
  }
  if (const int start = car_start(spec, index); start >= 0) {
    draw_ellipse(&c, -10.0 + spec.car_speed * (index - start), spec.car_y, 8.0, 4.0);
  }
  if (spec.flame && index >= spec.flame_onset) {
    const FlameDraw d = flame_draw(spec.flame_shape, rng);
    draw_flame(&c, spec.flame_shape, d);
  }
  c.add_noise(rng, spec.noise_sigma);
  return std::move(c).frame(index);
}

Rect flame_core_box(const SceneSpec& spec, int index) {
  if (!spec.flame || index < spec.flame_onset) return {};
  detail::Rng rng(mix(spec.seed, static_cast<std::uint64_t>(index) + 1));
  return draw_flame(nullptr, spec.flame_shape, flame_draw(spec.flame_shape, rng));
}

Rect lamp_box(const SceneSpec& spec) {
  const int r = static_cast<int>(std::ceil(spec.lamp_radius));
  return {static_cast<int>(spec.lamp_x) - r, static_cast<int>(spec.lamp_y) - r, 2 * r + 1, 2 * r + 1};
}

Rect car_box(const SceneSpec& spec, int index) {
  const int start = car_start(spec, index);
  if (start < 0) return {};
  Rect r = draw_ellipse(nullptr, -10.0 + spec.car_speed * (index - start), spec.car_y, 8.0, 4.0);
  const int x0 = std::max(0, r.x), x1 = std::min(spec.width, r.right());
  return x1 > x0 ? Rect{x0, r.y, x1 - x0, r.h} : Rect{};
}

std::vector<Frame> fire_patches(int count, std::uint64_t seed, int margin) {
  std::vector<Frame> out;
  for (int i = 0; i < count; ++i) {
    detail::Rng rng(mix(seed, 0xF1E0000ULL + static_cast<std::uint64_t>(i)));
    FlameShape s;
    s.height = rng.uniform(30.0, 56.0);
    s.width = rng.uniform(14.0, 28.0);
    s.sway = rng.uniform(0.0, 8.0);
    const int w = static_cast<int>(s.width * 2 + 2 * margin + 24);
    const int h = static_cast<int>(s.height + 2 * margin + 20);
    s.base_x = w / 2.0;
    s.base_y = h - margin - 6.0;
    Canvas c(w, h);
    draw_background(c, mix(seed, static_cast<std::uint64_t>(i)), rng.uniform(15.0, 70.0));
    FlameDraw d = flame_draw(s, rng);
    d.core_g = rng.uniform(215.0, 250.0);
    d.core_b = rng.uniform(110.0, 190.0);
    const Rect core = draw_flame(&c, s, d);
    c.add_noise(rng, rng.uniform(1.0, 3.0));
    out.push_back(crop_around(std::move(c).frame(i), core, margin));
  }
  return out;
}

std::vector<Frame> nonfire_patches(int count, std::uint64_t seed, int margin) {
  std::vector<Frame> out;
  for (int i = 0; i < count; ++i) {
    detail::Rng rng(mix(seed, 0x0F1E000ULL + static_cast<std::uint64_t>(i)));
    const int kind = i % 4;
    const int size = 2 * margin + 60;
    Canvas c(size, size);
    draw_background(c, mix(seed, static_cast<std::uint64_t>(i) + 7), rng.uniform(15.0, 90.0));
    Rect core;
    if (kind <= 1) {
      const double t = rng.uniform(240.0, 255.0);
      const double core_rgb[3] = {kind == 0 ? t : t - 45.0, kind == 0 ? t : t - 20.0, 255.0};
      const double halo[3] = {core_rgb[0] * 0.75, core_rgb[1] * 0.75, core_rgb[2] * 0.78};
      core = draw_disk(c, size / 2.0, size / 2.0, rng.uniform(5.0, 14.0), core_rgb, halo);
    } else {
      const int bw = kind == 2 ? static_cast<int>(rng.uniform(20.0, 50.0)) : static_cast<int>(rng.uniform(15.0, 40.0));
      const int bh = kind == 2 ? static_cast<int>(rng.uniform(4.0, 10.0)) : static_cast<int>(rng.uniform(15.0, 40.0));
      const double v = rng.uniform(232.0, 252.0);
      const double tint = rng.uniform(-6.0, 3.0);
      const int x0 = (size - bw) / 2, y0 = (size - bh) / 2;
      for (int y = y0; y < y0 + bh; ++y) {
        for (int x = x0; x < x0 + bw; ++x) {
          const double shade = kind == 3 ? 4.0 * std::sin(0.3 * x) * std::cos(0.2 * y) : 0.0;
          c.set(x, y, v + tint + shade, v + shade, std::min(255.0, v - tint + shade + 2.0));
        }
      }
      core = {x0, y0, bw, bh};
    }
    c.add_noise(rng, rng.uniform(1.0, 3.0));
    out.push_back(crop_around(std::move(c).frame(i), core, margin));
  }
  return out;
}

Frame noise_patch(int size, double r, double g, double b, double noise, std::uint64_t seed) {
  Canvas c(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) c.set(x, y, r, g, b);
  }
  detail::Rng rng(seed);
  c.add_noise(rng, noise);
  return std::move(c).frame(0);
}

}  // namespace pyrovis::synthetic
