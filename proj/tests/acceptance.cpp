// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit when any fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>

#include "helpers.hpp"
#include "pyrovis/classifier.hpp"
#include "pyrovis/codebook.hpp"
#include "pyrovis/features.hpp"
#include "pyrovis/pipeline.hpp"
#include "pyrovis/selftest.hpp"
#include "pyrovis/temporal.hpp"

using namespace pyrovis;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

char buf[512];

template <typename... A>
std::string format(const char* f, A... a) {
  std::snprintf(buf, sizeof buf, f, a...);
  return buf;
}

Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> d(rows * cols);
  for (double& v : d) v = u(rng);
  return Matrix(rows, cols, std::move(d));
}

std::vector<std::pair<double, std::size_t>> brute_knn(const Matrix& pts, std::span<const double> q, std::size_t m) {
  std::vector<std::pair<double, std::size_t>> all;
  for (std::size_t i = 0; i < pts.rows(); ++i) {
    double d2 = 0.0;
    for (std::size_t d = 0; d < pts.cols(); ++d) d2 += (pts.row(i)[d] - q[d]) * (pts.row(i)[d] - q[d]);
    all.emplace_back(d2, i);
  }
  std::sort(all.begin(), all.end());
  all.resize(m);
  return all;
}

std::vector<double> descriptors_of(const Frame& f) {
  std::vector<double> out;
  for (const auto& d : sample(f, SamplingPlan{})) {
    const auto v = d.values();
    out.insert(out.end(), v.begin(), v.end());
  }
  return out;
}

// --- 1 ---------------------------------------------------------------------------

Outcome metric_arithmetic() {
  Outcome o;
  const EvalReport r = report_from_counts(361, 305, 27, 81);
  const double p = r.precision ? 100.0 * *r.precision : -1.0;
  const double rc = r.recall ? 100.0 * *r.recall : -1.0;
  o.expect(std::abs(p - 93.04) <= 0.01, format("precision %.4f%%", p));
  o.expect(std::abs(rc - 81.67) <= 0.01, format("recall %.4f%%", rc));
  if (o.pass) o.detail = format("precision %s recall %s", format_rate(r.precision).c_str(), format_rate(r.recall).c_str());
  return o;
}

// --- 2 ---------------------------------------------------------------------------

Outcome oracle_equivalence() {
  Outcome o;
  const Matrix centers = random_matrix(500, kDescriptorDims, 1);
  const NNIndex idx(centers);
  const Matrix queries = random_matrix(200, kDescriptorDims, 2);
  std::size_t mismatched = 0;
  for (std::size_t q = 0; q < queries.rows(); ++q) {
    const auto got = idx.query(queries.row(q), 10);
    const auto want = brute_knn(centers, queries.row(q), 10);
    for (std::size_t i = 0; i < 10; ++i) mismatched += got[i].index != want[i].second;
  }
  o.expect(mismatched == 0, format("k-d tree disagrees on %zu neighbours", mismatched));

  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pix(0, 255);
  std::vector<double> px(97 * 61);
  for (double& v : px) v = pix(rng);
  const Frame gray(97, 61, ColorSpace::GRAY, px);
  const IntegralImage ii = integral(gray);
  std::size_t bad_rects = 0;
  for (int i = 0; i < 50; ++i) {
    const int x = std::uniform_int_distribution<int>(0, 96)(rng), y = std::uniform_int_distribution<int>(0, 60)(rng);
    const int w = std::uniform_int_distribution<int>(0, 97 - x)(rng), h = std::uniform_int_distribution<int>(0, 61 - y)(rng);
    double s = 0.0;
    for (int yy = y; yy < y + h; ++yy)
      for (int xx = x; xx < x + w; ++xx) s += gray.at(xx, yy);
    bad_rects += ii.rect_sum(x, y, w, h) != s;
  }
  o.expect(bad_rects == 0, format("%zu integral-image rectangles differ", bad_rects));

  // Encoding of real descriptors against a trained vocabulary.
  const std::vector<double> train = descriptors_of(testing::random_rgb(120, 120, 4));
  const Matrix train_m(train.size() / kDescriptorDims, kDescriptorDims, train);
  const Codebook cb = kmeans(train_m, 60, 20, 5).codebook;
  const std::vector<double> blob = descriptors_of(testing::random_rgb(80, 70, 6));
  const Matrix desc(blob.size() / kDescriptorDims, kDescriptorDims, blob);
  const std::size_t m = 10;
  const auto got = accumulate_histogram(desc, index(cb), {m, cb.sigma});
  std::vector<double> want(cb.k(), 0.0);
  for (std::size_t j = 0; j < desc.rows(); ++j) {
    const auto nn = brute_knn(cb.centers, desc.row(j), m);
    std::vector<double> w;
    double z = 0.0;
    for (const auto& [d2, c] : nn) {
      w.push_back(std::exp(-d2 / (2.0 * cb.sigma * cb.sigma)) / std::sqrt(2.0 * M_PI * cb.sigma));
      z += w.back();
    }
    for (std::size_t i = 0; i < nn.size(); ++i) want[nn[i].second] += w[i] / z;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < want.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
  o.expect(worst <= 1e-9, format("encoding differs by %.3g", worst));
  if (o.pass) o.detail = format("200 queries, 50 rects, %zu descriptors encoded (max diff %.2g)", desc.rows(), worst);
  return o;
}

// --- 3 ---------------------------------------------------------------------------

double min_eigenvalue(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-22) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  double lo = a[0][0];
  for (std::size_t i = 1; i < n; ++i) lo = std::min(lo, a[i][i]);
  return lo;
}

Outcome svm_correctness() {
  Outcome o;
  const std::vector<LabeledSample> two{{{1.0, 0.0}, 1}, {{-1.0, 0.0}, -1}};
  TrainOptions hard;
  hard.C = 100.0;
  const auto lin = train(two, {KernelKind::LINEAR, 1.0}, hard).model;
  const double mp = lin.decision(two[0].x), mn = lin.decision(two[1].x);
  o.expect(std::abs(mp - 1.0) <= 1e-6 && std::abs(mn + 1.0) <= 1e-6, format("2-point margins %.9f %.9f", mp, mn));

  const std::vector<LabeledSample> xr{{{0, 0}, -1}, {{1, 1}, -1}, {{0, 1}, 1}, {{1, 0}, 1}};
  TrainOptions c10;
  c10.C = 10.0;
  const auto rbf = train(xr, {KernelKind::RBF, 1.0}, c10).model;
  int correct = 0;
  for (const auto& s : xr) correct += rbf.predict(s.x).label == s.label;
  o.expect(correct == 4, format("XOR train accuracy %d/4", correct));

  std::mt19937_64 rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<LabeledSample> noisy;
  for (int i = 0; i < 80; ++i) noisy.push_back({{n(rng) + (i % 2 ? 0.8 : -0.8), n(rng), n(rng)}, i % 2 ? 1 : -1});
  TrainOptions traced;
  traced.C = 2.0;
  traced.trace_objective = true;
  const auto tr = train(noisy, {KernelKind::RBF, 0.5}, traced);
  std::size_t drops = 0;
  for (std::size_t i = 1; i < tr.objective_trace.size(); ++i) {
    const double prev = tr.objective_trace[i - 1];
    drops += tr.objective_trace[i] < prev - 1e-12 * std::max(1.0, std::abs(prev));
  }
  o.expect(drops == 0, format("dual objective decreased %zu times", drops));

  std::vector<LabeledSample> twenty(noisy.begin(), noisy.begin() + 20);
  const Matrix g = gram_matrix({KernelKind::RBF, 0.5}, twenty);
  std::vector<std::vector<double>> a(g.rows());
  for (std::size_t i = 0; i < g.rows(); ++i) a[i].assign(g.row(i).begin(), g.row(i).end());
  const double lo = min_eigenvalue(a);
  o.expect(lo >= -1e-8, format("Gram min eigenvalue %.3g", lo));
  if (o.pass) {
    o.detail = format("margins %+.9f %+.9f, XOR 4/4, %zu SMO steps monotone, Gram min eigenvalue %.3g", mp, mn,
                      tr.objective_trace.size() - 1, lo);
  }
  return o;
}

// --- 4 ---------------------------------------------------------------------------

Outcome normalization_invariants() {
  Outcome o;
  const std::vector<double> train = descriptors_of(testing::random_rgb(100, 100, 11));
  const Vocabulary vocab(kmeans(Matrix(train.size() / kDescriptorDims, kDescriptorDims, train), 50, 15, 12).codebook);
  std::mt19937_64 rng(13);
  double worst_global = 0.0, worst_bow = 0.0, worst_mass = 0.0;
  for (int i = 0; i < 100; ++i) {
    const int w = std::uniform_int_distribution<int>(27, 70)(rng), h = std::uniform_int_distribution<int>(27, 70)(rng);
    const Frame patch = testing::random_rgb(w, h, 1000 + i);
    for (ColorSpace s : {ColorSpace::LAB, ColorSpace::RGB, ColorSpace::HSV, ColorSpace::YUV}) {
      const auto gh = global_histogram(patch, s);
      double sum = 0.0;
      for (double v : gh.bins) sum += v;
      worst_global = std::max(worst_global, std::abs(sum - 3.0));
    }
    const BlobFeature f = encode_patch(patch, SamplingPlan{}, vocab, 10);
    double bow = 0.0;
    for (double v : f.bow) bow += v;
    worst_bow = std::max(worst_bow, std::abs(bow - 1.0));

    const std::vector<double> d = descriptors_of(patch);
    const Matrix dm(d.size() / kDescriptorDims, kDescriptorDims, d);
    const auto raw = accumulate_histogram(dm, vocab.index, {10, vocab.codebook.sigma});
    double mass = 0.0;
    for (double v : raw) mass += v;
    worst_mass = std::max(worst_mass, std::abs(mass - static_cast<double>(dm.rows())));
  }
  o.expect(worst_global <= 1e-9, format("global histogram off by %.3g", worst_global));
  o.expect(worst_bow <= 1e-9, format("bow block off by %.3g", worst_bow));
  o.expect(worst_mass <= 1e-9, format("pre-normalization mass off by %.3g", worst_mass));
  if (o.pass) o.detail = format("100 blobs, max deviations %.2g / %.2g / %.2g", worst_global, worst_bow, worst_mass);
  return o;
}

// --- 5 ---------------------------------------------------------------------------

ShapeSample with_area(double area) {
  ShapeSample s;
  s.area = area;
  s.perimeter = 40.0;
  s.d = {area / 4, area / 4, area / 4, area / 4};
  return s;
}

BlobTrack three_level(double mu, double delta) {
  BlobTrack t;
  for (int i = 0; i < 8; ++i) t.window.push_back(with_area(mu + delta));
  for (int i = 0; i < 8; ++i) t.window.push_back(with_area(mu - delta));
  for (int i = 0; i < 9; ++i) t.window.push_back(with_area(mu));
  return t;
}

Outcome temporal_logic() {
  Outcome o;
  BlobTrack constant;
  constant.window.assign(25, with_area(150.0));
  for (double t1 : {1e-12, 1e-6, 0.01, 0.15, 0.25, 0.5, 0.9}) {
    o.expect(stability(constant, {t1, t1 + 1.0, Environment::INDOOR, false}) == Stability::STABLE,
             format("constant blob not stable at t1 = %g", t1));
  }
  // sigma_a = 0.8 delta with mu = 200: thresholds 0.25 and 0.5 sit at delta = 62.5 and 125.
  const StabilityThresholds th{0.25, 0.5, Environment::INDOOR, false};
  const std::pair<double, Stability> cases[] = {{62.4, Stability::STABLE},
                                                {62.5, Stability::UNDECIDED},
                                                {125.0, Stability::UNDECIDED},
                                                {125.1, Stability::UNSTABLE}};
  for (const auto& [delta, want] : cases) {
    const Stability got = stability(three_level(200.0, delta), th);
    o.expect(got == want, format("delta %.1f gave %s", delta, std::string(to_string(got)).c_str()));
  }
  std::mt19937_64 rng(17);
  long blobs = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Mask m(40, 40);
    for (auto& b : m.bits()) b = rng() % 3 != 0;
    for (const Blob& b : connected_components(m)) {
      const Quadrants q = spatial_distribution(b);
      o.expect(q[0] + q[1] + q[2] + q[3] == b.area, "quadrants do not sum to the area");
      ++blobs;
    }
  }
  if (o.pass) o.detail = format("boundaries exact, quadrant sums checked on %ld blobs", blobs);
  return o;
}

// --- 6, 7, 8 -----------------------------------------------------------------------

std::string bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

SelftestResult run_e2e(const std::string& name) {
  SelftestOptions opt;
  opt.work_dir = testing::scratch_dir(name);
  opt.config.cross_validate = true;
  return run_selftest(opt);
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const char* name, double limit, const std::function<Outcome()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (limit > 0.0 && secs > limit) o.expect(false, format("took %.2f s (limit %.0f s)", secs, limit));
    std::printf("%s %d %s: %s [%.2f s]\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failures += !o.pass;
  };

  report(1, "metric arithmetic", 1.0, metric_arithmetic);
  report(2, "oracle equivalence", 10.0, oracle_equivalence);
  report(3, "svm correctness", 5.0, svm_correctness);
  report(4, "normalization invariants", 5.0, normalization_invariants);
  report(5, "temporal logic", 2.0, temporal_logic);

  std::optional<SelftestResult> first;
  report(6, "end-to-end synthetic", 60.0, [&] {
    first = run_e2e("acceptance-a");
    Outcome o;
    o.expect(first->first_flame_alarm >= 0, "no alarm on the flame");
    o.expect(first->false_alarms == 0, format("%ld alarms on the lamp or car lights", first->false_alarms));
    o.expect(first->passed, format("first flame alarm at frame %lld, onset 100", static_cast<long long>(first->first_flame_alarm)));
    if (o.pass) {
      o.detail = format("flame alarm at frame %lld (onset 100), %ld false alarms, held-out accuracy %.3f",
                        static_cast<long long>(first->first_flame_alarm), first->false_alarms,
                        first->model.held_out_accuracy);
    }
    return o;
  });
  report(7, "real-time throughput", 0.0, [&] {
    Outcome o;
    if (!first) return Outcome{false, "no end-to-end run"};
    const double fps = first->fps();
    o.expect(fps >= 15.0, format("%.1f fps", fps));
    if (o.pass) o.detail = format("%.1f fps over %ld frames of 320x240", fps, first->timings.frames);
    return o;
  });
  report(8, "determinism", 0.0, [&] {
    Outcome o;
    if (!first) return Outcome{false, "no end-to-end run"};
    const SelftestResult second = run_e2e("acceptance-b");
    o.expect(bytes_of(first->codebook_path) == bytes_of(second.codebook_path), "codebook files differ");
    o.expect(bytes_of(first->model_path) == bytes_of(second.model_path), "model files differ");
    o.expect(bytes_of(first->alarm_log_path) == bytes_of(second.alarm_log_path), "alarm logs differ");
    if (o.pass) o.detail = "codebook, model and alarm log bit-identical across two runs";
    return o;
  });
  return failures == 0 ? 0 : 1;
}
