#include <cmath>
#include <fstream>
#include <random>

#include "doctest.h"
#include "helpers.hpp"
#include "pyrovis/error.hpp"
#include "pyrovis/imaging.hpp"

using namespace pyrovis;

namespace {

// Reference LAB values produced by scikit-image's rgb2lab (sRGB, D65) ahead of time.
struct LabRef {
  double r, g, b, L, a, bb;
};
constexpr LabRef kLabRefs[] = {
    {200, 30, 30, 43.22022473, 63.04024498, 45.22031567},
    {12, 200, 90, 70.95515778, -64.82005978, 43.0652283},
    {255, 0, 0, 53.24058794, 80.09230823, 67.20275104},
    {0, 255, 0, 87.73509949, -86.18302974, 83.17970318},
};

Frame gray_random(int w, int h, std::uint64_t seed, int hi = 255) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, hi);
  std::vector<double> px(static_cast<std::size_t>(w) * h);
  for (double& v : px) v = d(rng);
  return Frame(w, h, ColorSpace::GRAY, std::move(px));
}

double brute_sum(const Frame& f, int x, int y, int w, int h) {
  double s = 0.0;
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) s += f.at(xx, yy);
  return s;
}

}  // namespace

TEST_CASE("white maps to L=100 with neutral a and b") {
  const auto lab = rgb_to_lab(255, 255, 255);
  CHECK(std::abs(lab[0] - 100.0) <= 0.5);
  CHECK(std::abs(lab[1]) <= 0.5);
  CHECK(std::abs(lab[2]) <= 0.5);
}

TEST_CASE("LAB conversion matches an external reference implementation") {
  for (const LabRef& ref : kLabRefs) {
    const auto lab = rgb_to_lab(ref.r, ref.g, ref.b);
    CAPTURE(ref.r);
    CAPTURE(ref.g);
    CAPTURE(ref.b);
    CHECK(std::abs(lab[0] - ref.L) < 0.01);
    CHECK(std::abs(lab[1] - ref.a) < 0.01);
    CHECK(std::abs(lab[2] - ref.bb) < 0.01);
  }
}

TEST_CASE("black has zero hue, saturation and value") {
  const auto hsv = rgb_to_hsv(0, 0, 0);
  CHECK(hsv[0] == 0.0);
  CHECK(hsv[1] == 0.0);
  CHECK(hsv[2] == 0.0);
}

TEST_CASE("hexcone HSV of saturated primaries") {
  auto hsv = rgb_to_hsv(0, 255, 0);
  CHECK(hsv[0] == doctest::Approx(120.0));
  CHECK(hsv[1] == doctest::Approx(1.0));
  CHECK(hsv[2] == doctest::Approx(1.0));
  hsv = rgb_to_hsv(12, 200, 90);
  CHECK(hsv[0] == doctest::Approx(0.40248227 * 360.0).epsilon(1e-6));
  CHECK(hsv[1] == doctest::Approx(0.94));
}

TEST_CASE("BT.601 full-range YUV and luma") {
  const auto yuv = rgb_to_yuv(255, 255, 255);
  CHECK(yuv[0] == doctest::Approx(255.0));
  CHECK(yuv[1] == doctest::Approx(128.0));
  CHECK(yuv[2] == doctest::Approx(128.0));
  CHECK(rgb_to_gray(255, 255, 255) == doctest::Approx(255.0));
  CHECK(rgb_to_gray(10, 20, 30) == doctest::Approx(0.299 * 10 + 0.587 * 20 + 0.114 * 30));
}

TEST_CASE("convert keeps dimensions and index and is deterministic") {
  const Frame f = testing::random_rgb(7, 5, 3);
  const Frame rgb(f.width(), f.height(), ColorSpace::RGB, {f.pixels().begin(), f.pixels().end()}, 42);
  for (ColorSpace s : {ColorSpace::LAB, ColorSpace::HSV, ColorSpace::YUV, ColorSpace::GRAY}) {
    const Frame a = convert(rgb, s);
    const Frame b = convert(rgb, s);
    CHECK(a.width() == 7);
    CHECK(a.height() == 5);
    CHECK(a.index() == 42);
    CHECK(a.space() == s);
    CHECK(a == b);
  }
  const Frame lab = convert(rgb, ColorSpace::LAB);
  CHECK(lab.at(3, 2, 1) == rgb_to_lab(rgb.at(3, 2, 0), rgb.at(3, 2, 1), rgb.at(3, 2, 2))[1]);
}

TEST_CASE("conversion from a non-RGB frame names the source space") {
  const Frame lab = convert(testing::random_rgb(4, 4, 1), ColorSpace::LAB);
  try {
    (void)convert(lab, ColorSpace::HSV);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("LAB") != std::string::npos);
  }
}

TEST_CASE("frame construction rejects bad buffers") {
  CHECK_THROWS_AS(Frame(2, 2, ColorSpace::RGB, std::vector<double>(11, 0.0)), Error);
  CHECK_THROWS_AS(Frame(1, 1, ColorSpace::RGB, {0.0, 300.0, 0.0}), Error);
}

TEST_CASE("integral image of a single pixel") {
  const Frame f(1, 1, ColorSpace::GRAY, {7.0});
  const IntegralImage ii = integral(f);
  CHECK(ii.rect_sum(0, 0, 1, 1) == 7.0);
}

TEST_CASE("integral image of an all-zero frame") {
  const Frame f(9, 6, ColorSpace::GRAY, std::vector<double>(54, 0.0));
  const IntegralImage ii = integral(f);
  for (int y = 0; y <= 6; ++y)
    for (int x = 0; x <= 9; ++x) CHECK(ii.entry(x, y) == 0.0);
}

TEST_CASE("first row and column of the table are zero") {
  const IntegralImage ii = integral(gray_random(8, 8, 5));
  for (int i = 0; i <= 8; ++i) {
    CHECK(ii.entry(i, 0) == 0.0);
    CHECK(ii.entry(0, i) == 0.0);
  }
}

TEST_CASE("rect sums equal brute-force double loops on random rectangles") {
  const Frame f = gray_random(16, 16, 11);
  const IntegralImage ii = integral(f);
  std::mt19937_64 rng(99);
  for (int t = 0; t < 50; ++t) {
    const int x = static_cast<int>(rng() % 16), y = static_cast<int>(rng() % 16);
    const int w = static_cast<int>(rng() % (17 - x)), h = static_cast<int>(rng() % (17 - y));
    CHECK(ii.rect_sum(x, y, w, h) == brute_sum(f, x, y, w, h));
  }
}

TEST_CASE("zero-area and full rectangles") {
  const Frame f = gray_random(10, 7, 2);
  const IntegralImage ii = integral(f);
  CHECK(ii.rect_sum(3, 3, 0, 4) == 0.0);
  CHECK(ii.rect_sum(3, 3, 4, 0) == 0.0);
  CHECK(ii.rect_sum(0, 0, 10, 7) == brute_sum(f, 0, 0, 10, 7));
}

TEST_CASE("nested rectangles never decrease the sum for non-negative pixels") {
  const Frame f = gray_random(20, 20, 8);
  const IntegralImage ii = integral(f);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    const int x = static_cast<int>(rng() % 10), y = static_cast<int>(rng() % 10);
    const int w = 1 + static_cast<int>(rng() % (20 - x)), h = 1 + static_cast<int>(rng() % (20 - y));
    const int ix = x + static_cast<int>(rng() % w), iy = y + static_cast<int>(rng() % h);
    const int iw = static_cast<int>(rng() % (x + w - ix + 1)), ih = static_cast<int>(rng() % (y + h - iy + 1));
    CHECK(ii.rect_sum(x, y, w, h) >= ii.rect_sum(ix, iy, iw, ih));
  }
}

TEST_CASE("integral image is linear in the source") {
  const Frame f = gray_random(12, 9, 21, 100);
  std::vector<double> scaled(f.pixels().begin(), f.pixels().end());
  for (double& v : scaled) v *= 2.5;
  const IntegralImage a = integral(f);
  const IntegralImage b = integral(Frame(12, 9, ColorSpace::GRAY, scaled));
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const int x = static_cast<int>(rng() % 12), y = static_cast<int>(rng() % 9);
    const int w = static_cast<int>(rng() % (13 - x)), h = static_cast<int>(rng() % (10 - y));
    const double expect = 2.5 * a.rect_sum(x, y, w, h);
    CHECK(std::abs(b.rect_sum(x, y, w, h) - expect) <= 1e-9 * std::max(1.0, std::abs(expect)));
  }
}

TEST_CASE("out-of-bounds rectangles report their coordinates") {
  const IntegralImage ii = integral(gray_random(5, 5, 1));
  try {
    (void)ii.rect_sum(3, 1, 4, 2);
    FAIL("expected an error");
  } catch (const Error& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }
  CHECK_THROWS_AS((void)ii.rect_sum(-1, 0, 1, 1), Error);
}

TEST_CASE("PPM round trip is bit exact") {
  const auto dir = testing::scratch_dir("ppm");
  const Frame f = testing::random_rgb(13, 7, 17);
  write_ppm(dir / "000003.ppm", f);
  const Frame g = read_ppm(dir / "000003.ppm", 3);
  CHECK(g.index() == 3);
  CHECK(std::equal(f.pixels().begin(), f.pixels().end(), g.pixels().begin(), g.pixels().end()));
}

TEST_CASE("PBM round trip and frame listing") {
  const auto dir = testing::scratch_dir("pbm");
  Mask m(11, 3);
  m(0, 0) = 1;
  m(10, 2) = 1;
  m(5, 1) = 1;
  write_pbm(dir / "mask.pbm", m);
  CHECK(read_pbm(dir / "mask.pbm") == m);

  const Frame f = testing::solid_rgb(2, 2, 1, 2, 3);
  write_ppm(dir / "000010.ppm", f);
  write_ppm(dir / "000002.ppm", f);
  std::ofstream(dir / "notes.txt") << "x";
  const auto files = list_frame_files(dir);
  REQUIRE(files.size() == 2);
  CHECK(files[0].index == 2);
  CHECK(files[1].index == 10);
}

TEST_CASE("malformed PPM is a data error") {
  const auto dir = testing::scratch_dir("badppm");
  std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  try {
    (void)read_ppm(dir / "bad.ppm");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::data);
  }
  CHECK_THROWS_AS((void)read_ppm(dir / "missing.ppm"), Error);
}

TEST_CASE("IoU of rectangles") {
  CHECK(iou({0, 0, 10, 10}, {0, 0, 10, 10}) == 1.0);
  CHECK(iou({0, 0, 10, 10}, {20, 20, 5, 5}) == 0.0);
  CHECK(iou({0, 0, 10, 10}, {5, 0, 10, 10}) == doctest::Approx(50.0 / 150.0));
}
