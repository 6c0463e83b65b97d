#pragma once

#include <cstdint>
#include <vector>

#include "pyrovis/imaging.hpp"

// Deterministic synthetic imagery: flickering flames, static lamps and moving car lights on a
// noisy indoor background, plus training patches cropped around such objects.
namespace pyrovis::synthetic {

struct FlameShape {
  double base_x = 100.0;  // bottom center
  double base_y = 200.0;
  double height = 44.0;
  double width = 22.0;
  double height_jitter = 0.10;  // relative, uniform per frame
  double sway = 10.0;           // tip displacement, px, uniform per frame
  double tongue_amplitude = 0.15;
};

struct SceneSpec {
  int width = 320;
  int height = 240;
  int frames = 500;
  std::uint64_t seed = 1;
  double noise_sigma = 2.0;

  bool flame = true;
  int flame_onset = 100;
  FlameShape flame_shape;

  bool lamp = true;
  int lamp_onset = 40;
  double lamp_x = 240.0, lamp_y = 70.0, lamp_radius = 8.0;

  bool car = true;
  int car_first = 150;
  int car_last = 450;
  int car_period = 60;     // a new car enters every period frames
  double car_speed = 12.0; // px per frame
  double car_y = 225.0;
};

/// Renders frame `index` of the scene; independent of call order.
Frame render_scene(const SceneSpec& spec, int index);

/// Bounding box of the flame core in the given frame, or an empty rect before onset.
Rect flame_core_box(const SceneSpec& spec, int index);
Rect lamp_box(const SceneSpec& spec);
/// Car light position (empty rect when no car is visible).
Rect car_box(const SceneSpec& spec, int index);

/// Flame-colored patches cropped around randomly shaped flames with `margin` px of context.
std::vector<Frame> fire_patches(int count, std::uint64_t seed, int margin = 13);
/// Bright non-fire patches (white and bluish lamps, fluorescent bars, bright walls).
std::vector<Frame> nonfire_patches(int count, std::uint64_t seed, int margin = 13);

/// Uniform-color square with Gaussian noise.
Frame noise_patch(int size, double r, double g, double b, double noise, std::uint64_t seed);

}  // namespace pyrovis::synthetic
