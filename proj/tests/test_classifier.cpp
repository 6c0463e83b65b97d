#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "pyrovis/classifier.hpp"
#include "pyrovis/error.hpp"

using namespace pyrovis;

namespace {

std::vector<LabeledSample> gaussian_classes(std::size_t per_class, std::size_t dim, double separation,
                                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<LabeledSample> out;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    LabeledSample s;
    s.label = i % 2 ? -1 : 1;
    for (std::size_t d = 0; d < dim; ++d) s.x.push_back(n(rng) + (d == 0 ? s.label * separation / 2 : 0.0));
    out.push_back(std::move(s));
  }
  return out;
}

// Cyclic Jacobi rotations; returns the eigenvalues of a symmetric matrix.
std::vector<double> jacobi_eigenvalues(std::vector<std::vector<double>> a) {
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
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  return ev;
}

}  // namespace

TEST_CASE("kernel values") {
  const std::vector<double> a{0.2, 0.0, 0.5, 0.3}, b{0.1, 0.0, 0.6, 0.3};
  CHECK(kernel_eval({KernelKind::RBF, 0.7}, a, a) == 1.0);
  CHECK(kernel_eval({KernelKind::CHI2, 0.7}, a, a) == 1.0);
  const std::vector<double> e1{1, 0}, e2{0, 1};
  CHECK(kernel_eval({KernelKind::LINEAR, 1}, e1, e2) == 0.0);
  CHECK(kernel_eval({KernelKind::LINEAR, 1}, a, b) == doctest::Approx(0.02 + 0.30 + 0.09));
  // (0.1)^2/0.3 + (0.1)^2/1.1, the zero bins skipped.
  const double chi = 0.01 / 0.3 + 0.01 / 1.1;
  CHECK(kernel_eval({KernelKind::CHI2, 0.5}, a, b) == doctest::Approx(std::exp(-0.5 * chi)).epsilon(1e-14));
  CHECK(kernel_eval({KernelKind::RBF, 2.0}, a, b) == doctest::Approx(std::exp(-2.0 * 0.02)).epsilon(1e-14));
  CHECK_THROWS_AS((void)kernel_eval({KernelKind::RBF, 1}, a, e1), Error);
  CHECK(parse_kernel_kind("chi2") == KernelKind::CHI2);
  CHECK_THROWS_AS((void)parse_kernel_kind("poly"), Error);
}

TEST_CASE("two points, linear kernel: analytic hard-margin solution") {
  const std::vector<LabeledSample> s{{{1.0, 0.0}, 1}, {{-1.0, 0.0}, -1}};
  TrainOptions opt;
  opt.C = 100.0;
  const auto r = train(s, {KernelKind::LINEAR, 1.0}, opt);
  // w = (1, 0), b = 0, both points on the margin with alpha = 1/2.
  CHECK(r.alphas[0] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.alphas[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(r.model.decision(std::vector<double>{1.0, 0.0}) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(r.model.decision(std::vector<double>{-1.0, 0.0}) == doctest::Approx(-1.0).epsilon(1e-9));
  CHECK(std::abs(r.model.decision(std::vector<double>{0.0, 5.0})) <= 1e-9);
  CHECK(r.model.support_vectors.rows() == 2);
}

TEST_CASE("XOR is separated by an RBF machine") {
  const std::vector<LabeledSample> s{{{0, 0}, -1}, {{1, 1}, -1}, {{0, 1}, 1}, {{1, 0}, 1}};
  TrainOptions opt;
  opt.C = 10.0;
  const auto r = train(s, {KernelKind::RBF, 1.0}, opt);
  for (const auto& x : s) CHECK(r.model.predict(x.x).label == x.label);
}

TEST_CASE("duplicating every sample keeps the hard-margin boundary") {
  const auto s = gaussian_classes(15, 2, 8.0, 4);
  std::vector<LabeledSample> twice(s);
  twice.insert(twice.end(), s.begin(), s.end());
  TrainOptions opt;
  opt.C = 1e4;
  opt.tolerance = 1e-6;
  const Kernel k{KernelKind::LINEAR, 1.0};
  const auto a = train(s, k, opt);
  const auto b = train(twice, k, opt);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-6, 6);
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> x{u(rng), u(rng)};
    const double da = a.model.decision(x), db = b.model.decision(x);
    CHECK(std::abs(da - db) <= 1e-4 * std::max(1.0, std::abs(da)));
    if (std::abs(da) > 1e-3) CHECK(a.model.predict(x).label == b.model.predict(x).label);
  }
}

TEST_CASE("RBF Gram matrix is positive semidefinite") {
  const auto s = gaussian_classes(10, 5, 1.0, 7);
  for (double gamma : {0.01, 0.5, 4.0}) {
    const Matrix g = gram_matrix({KernelKind::RBF, gamma}, s);
    std::vector<std::vector<double>> a(g.rows());
    for (std::size_t i = 0; i < g.rows(); ++i) a[i].assign(g.row(i).begin(), g.row(i).end());
    const auto ev = jacobi_eigenvalues(a);
    CHECK(*std::min_element(ev.begin(), ev.end()) >= -1e-8);
  }
}

TEST_CASE("SMO: dual objective never decreases; KKT and box constraints hold") {
  const auto s = gaussian_classes(40, 3, 1.5, 9);
  TrainOptions opt;
  opt.C = 2.0;
  opt.trace_objective = true;
  const auto r = train(s, {KernelKind::RBF, 0.5}, opt);
  REQUIRE(r.objective_trace.size() > 10);
  for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
    const double prev = r.objective_trace[i - 1];
    CHECK(r.objective_trace[i] >= prev - 1e-12 * std::max(1.0, std::abs(prev)));
  }
  double signed_sum = 0.0;
  for (std::size_t t = 0; t < s.size(); ++t) {
    const double upper = opt.C * (s[t].label > 0 ? r.model.weight_pos : r.model.weight_neg);
    const double a = r.alphas[t];
    CHECK(a >= 0.0);
    CHECK(a <= upper);
    signed_sum += a * s[t].label;
    const double yf = s[t].label * r.model.decision(s[t].x);
    if (a > 1e-9 && a < upper - 1e-9) CHECK(std::abs(yf - 1.0) <= 2e-3);
    else if (a <= 1e-9) CHECK(yf >= 1.0 - 2e-3);
    else CHECK(yf <= 1.0 + 2e-3);
  }
  CHECK(std::abs(signed_sum) <= 1e-9);
}

TEST_CASE("balanced weights downweight the majority class") {
  auto s = gaussian_classes(10, 2, 3.0, 2);
  const auto extra = gaussian_classes(20, 2, 3.0, 3);
  for (const auto& e : extra)
    if (e.label < 0) s.push_back(e);
  const auto r = train(s, {KernelKind::RBF, 1.0}, {});
  CHECK(r.model.weight_pos == 1.0);
  CHECK(r.model.weight_neg == doctest::Approx(10.0 / 30.0));
}

TEST_CASE("margin is zero-tie positive, scales with the coefficients, ignores SV order") {
  TrainedModel empty;
  empty.support_vectors = Matrix(0, 3);
  CHECK(empty.predict(std::vector<double>{1, 2, 3}).label == 1);

  const auto s = gaussian_classes(20, 3, 2.0, 5);
  const auto m = train(s, {KernelKind::RBF, 0.3}, {}).model;
  TrainedModel doubled = m;
  for (double& c : doubled.coefficients) c *= 2;
  doubled.bias *= 2;
  TrainedModel reversed = m;
  reversed.support_vectors = Matrix();
  reversed.coefficients.clear();
  for (std::size_t i = m.coefficients.size(); i-- > 0;) {
    reversed.support_vectors.append_row(m.support_vectors.row(i));
    reversed.coefficients.push_back(m.coefficients[i]);
  }
  for (const auto& x : gaussian_classes(10, 3, 0.0, 6)) {
    const auto p = m.predict(x.x);
    const auto pd = doubled.predict(x.x);
    const auto pr = reversed.predict(x.x);
    CHECK(pd.label == p.label);
    CHECK(pd.margin == doctest::Approx(2 * p.margin).epsilon(1e-12));
    CHECK(pr.label == p.label);
    CHECK(std::abs(pr.margin - p.margin) <= 1e-12);
  }
}

TEST_CASE("training rejects bad input and reports non-convergence") {
  std::vector<LabeledSample> one_class{{{1.0}, 1}, {{2.0}, 1}};
  CHECK_THROWS_AS((void)train(one_class, {}, {}), Error);
  std::vector<LabeledSample> nan{{{1.0}, 1}, {{std::nan("")}, -1}};
  CHECK_THROWS_AS((void)train(nan, {}, {}), Error);
  TrainOptions bad_c;
  bad_c.C = 0.0;
  CHECK_THROWS_AS((void)train(gaussian_classes(3, 2, 1, 1), {}, bad_c), Error);

  TrainOptions capped;
  capped.max_iterations = 1;
  try {
    (void)train(gaussian_classes(30, 3, 0.5, 8), {KernelKind::RBF, 1.0}, capped);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::convergence);
    CHECK(std::string(e.what()).find("violation") != std::string::npos);
  }
}

TEST_CASE("prediction checks the codebook fingerprint") {
  const auto s = gaussian_classes(5, 2, 4.0, 1);
  auto m = train(s, {KernelKind::LINEAR, 1}, {}).model;
  m.codebook_fingerprint[0] = 7;
  BlobFeature f{{0.5}, {0.5}};
  Fingerprint other{};
  try {
    (void)predict(m, f, other);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::mismatch);
  }
  other[0] = 7;
  CHECK_NOTHROW((void)predict(m, f, other));
}

TEST_CASE("cross validation") {
  SUBCASE("separable data reaches full accuracy and the report is consistent") {
    const auto s = gaussian_classes(30, 2, 12.0, 3);
    const CVGrid grid = CVGrid::powers_of_two(-2, 2);
    const auto rep = cross_validate(s, KernelKind::RBF, 5, grid, 1);
    CHECK(rep.best_accuracy == 1.0);
    CHECK(rep.cells.size() == 25);
    double best = 0.0;
    for (const auto& c : rep.cells) best = std::max(best, c.accuracy);
    CHECK(best == rep.best_accuracy);
    // Among the perfect cells the one nearest C = gamma = 1 in log2 space wins, first in scan order.
    const CVCell* want = nullptr;
    auto dist = [](const CVCell& c) { return std::abs(std::log2(c.C)) + std::abs(std::log2(c.gamma)); };
    for (const auto& c : rep.cells) {
      if (c.accuracy == 1.0 && (!want || dist(c) < dist(*want))) want = &c;
    }
    REQUIRE(want);
    CHECK(rep.best_C == want->C);
    CHECK(rep.best_gamma == want->gamma);
    const auto again = cross_validate(s, KernelKind::RBF, 5, grid, 1);
    CHECK(again.best_C == rep.best_C);
    CHECK(again.best_gamma == rep.best_gamma);
  }
  SUBCASE("shuffled labels stay near chance") {
    auto s = gaussian_classes(100, 10, 0.0, 11);
    const auto rep = cross_validate(s, KernelKind::RBF, 5, CVGrid::powers_of_two(-4, 4), 2);
    CHECK(rep.best_accuracy <= 0.65);
    double best = 0.0;
    for (const auto& c : rep.cells) best = std::max(best, c.accuracy);
    CHECK(best == rep.best_accuracy);
  }
  SUBCASE("folds are stratified and deterministic") {
    const auto s = gaussian_classes(23, 2, 1.0, 5);
    const auto f = stratified_folds(s, 5, 9);
    CHECK(f == stratified_folds(s, 5, 9));
    for (int label : {1, -1}) {
      std::array<int, 5> counts{};
      for (std::size_t t = 0; t < s.size(); ++t)
        if (s[t].label == label) ++counts[f[t]];
      CHECK(*std::max_element(counts.begin(), counts.end()) - *std::min_element(counts.begin(), counts.end()) <= 1);
    }
    CHECK_THROWS_AS((void)stratified_folds(gaussian_classes(2, 2, 1, 1), 5, 1), Error);
  }
}

TEST_CASE("model files round-trip") {
  auto s = gaussian_classes(10, 4, 2.0, 12);
  for (auto& x : s)
    for (double& v : x.x) v = std::abs(v);
  auto m = train(s, {KernelKind::CHI2, 0.25}, {}).model;
  m.codebook_fingerprint[5] = 0xab;
  const auto bytes = serialize(m);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PVSM");
  const auto back = deserialize_model(bytes);
  CHECK(back.kernel.kind == KernelKind::CHI2);
  CHECK(back.kernel.gamma == 0.25);
  CHECK(back.support_vectors == m.support_vectors);
  CHECK(back.coefficients == m.coefficients);
  CHECK(back.bias == m.bias);
  CHECK(back.codebook_fingerprint == m.codebook_fingerprint);
  CHECK(serialize(back) == bytes);
  auto bad = bytes;
  bad[1] = 'Q';
  CHECK_THROWS_AS((void)deserialize_model(bad), Error);
}
