#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pyrovis/imaging.hpp"

namespace testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pyrovis-test-" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline pyrovis::Frame random_rgb(int w, int h, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  std::vector<double> px(static_cast<std::size_t>(w) * h * 3);
  for (double& v : px) v = d(rng);
  return pyrovis::Frame(w, h, pyrovis::ColorSpace::RGB, std::move(px));
}

inline pyrovis::Frame solid_rgb(int w, int h, double r, double g, double b) {
  const double c[3] = {r, g, b};
  return pyrovis::Frame::filled(w, h, pyrovis::ColorSpace::RGB, c);
}

// RGB frame whose pixels are produced by f(x, y) -> {r, g, b}.
template <typename F>
pyrovis::Frame paint(int w, int h, F f) {
  std::vector<double> px;
  px.reserve(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto c = f(x, y);
      px.insert(px.end(), {c[0], c[1], c[2]});
    }
  }
  return pyrovis::Frame(w, h, pyrovis::ColorSpace::RGB, std::move(px));
}

}  // namespace testing
