#include "pyrovis/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "binio.hpp"
#include "pyrovis/error.hpp"
#include "random.hpp"

namespace pyrovis {

std::string_view to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::LINEAR: return "linear";
    case KernelKind::RBF: return "rbf";
    case KernelKind::CHI2: return "chi2";
  }
  return "?";
}

KernelKind parse_kernel_kind(std::string_view name) {
  if (name == "linear" || name == "LINEAR") return KernelKind::LINEAR;
  if (name == "rbf" || name == "RBF") return KernelKind::RBF;
  if (name == "chi2" || name == "CHI2") return KernelKind::CHI2;
  fail(Errc::config, "unknown kernel '" + std::string(name) + "' (expected linear, rbf or chi2)");
}

void Kernel::validate() const {
  if (kind != KernelKind::LINEAR && !(gamma > 0.0)) fail(Errc::config, "kernel gamma must be positive");
}

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double chi2_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = a[i] + b[i];
    if (den == 0.0) continue;
    const double d = a[i] - b[i];
    s += d * d / den;
  }
  return s;
}

// Kernel-specific pre-image of the kernel value: dot product or (chi-square) distance.
double kernel_base(KernelKind kind, std::span<const double> a, std::span<const double> b) {
  switch (kind) {
    case KernelKind::LINEAR: return dot(a, b);
    case KernelKind::RBF: return squared_distance(a, b);
    case KernelKind::CHI2: return chi2_distance(a, b);
  }
  return 0.0;
}

double kernel_from_base(const Kernel& kernel, double base) {
  return kernel.kind == KernelKind::LINEAR ? base : std::exp(-kernel.gamma * base);
}

Matrix base_matrix(KernelKind kind, std::span<const LabeledSample> samples) {
  const std::size_t n = samples.size();
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const double v = kernel_base(kind, samples[i].x, samples[j].x);
      m.row(i)[j] = v;
      m.row(j)[i] = v;
    }
  }
  return m;
}

struct SolverOutput {
  std::vector<double> alpha;
  double rho = 0.0;
  std::size_t iterations = 0;
  double violation = 0.0;
  bool converged = false;
  std::vector<double> trace;
};

// Dual objective in maximization form: sum(alpha) - 1/2 alpha' Q alpha, with G = Q alpha - 1.
double dual_objective(std::span<const double> alpha, std::span<const double> grad) {
  double s = 0.0;
  for (std::size_t i = 0; i < alpha.size(); ++i) s += alpha[i] - 0.5 * alpha[i] * (grad[i] + 1.0);
  return s;
}

// SMO with first-order (maximal violating pair) working set selection.
// `kmat` is the n x n kernel matrix, `upper` the per-sample box bound.
SolverOutput solve(const Matrix& kmat, std::span<const int> y, std::span<const double> upper, const TrainOptions& opt) {
  constexpr double kTau = 1e-12;
  const std::size_t n = y.size();
  const std::size_t cap = opt.max_iterations ? opt.max_iterations : std::max<std::size_t>(100000, 100 * n);
  auto q = [&](std::size_t i, std::size_t j) { return y[i] * y[j] * kmat.row(i)[j]; };

  SolverOutput out;
  std::vector<double>& alpha = out.alpha;
  alpha.assign(n, 0.0);
  std::vector<double> grad(n, -1.0);
  auto at_upper = [&](std::size_t i) { return alpha[i] >= upper[i]; };
  auto at_lower = [&](std::size_t i) { return alpha[i] <= 0.0; };

  if (opt.trace_objective) out.trace.push_back(0.0);
  while (true) {
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -y[t] * grad[t];
      const bool in_up = y[t] > 0 ? !at_upper(t) : !at_lower(t);
      const bool in_low = y[t] > 0 ? !at_lower(t) : !at_upper(t);
      if (in_up && v > gmax) {
        gmax = v;
        i = t;
      }
      if (in_low && v < gmin) {
        gmin = v;
        j = t;
      }
    }
    out.violation = (i == n || j == n) ? 0.0 : gmax - gmin;
    if (i == n || j == n || gmax - gmin < opt.tolerance) {
      out.converged = true;
      break;
    }
    if (out.iterations >= cap) break;
    ++out.iterations;

    const double ci = upper[i], cj = upper[j];
    const double old_i = alpha[i], old_j = alpha[j];
    const double qii = q(i, i), qjj = q(j, j), qij = q(i, j);
    if (y[i] != y[j]) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) {
          alpha[j] = 0.0;
          alpha[i] = diff;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = -diff;
      }
      if (diff > ci - cj) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = ci - diff;
        }
      } else if (alpha[j] > cj) {
        alpha[j] = cj;
        alpha[i] = cj + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = kTau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > ci) {
        if (alpha[i] > ci) {
          alpha[i] = ci;
          alpha[j] = sum - ci;
        }
      } else if (alpha[j] < 0.0) {
        alpha[j] = 0.0;
        alpha[i] = sum;
      }
      if (sum > cj) {
        if (alpha[j] > cj) {
          alpha[j] = cj;
          alpha[i] = sum - cj;
        }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0;
        alpha[j] = sum;
      }
    }

    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(i, t) * di + q(j, t) * dj;
    if (opt.trace_objective) out.trace.push_back(dual_objective(alpha, grad));
  }

  // Bias from free vectors, or the midpoint of the feasible interval when none are free.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t free_count = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = y[t] * grad[t];
    if (at_upper(t)) {
      if (y[t] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (at_lower(t)) {
      if (y[t] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free_count;
      sum_free += yg;
    }
  }
  out.rho = free_count > 0 ? sum_free / static_cast<double>(free_count) : (ub + lb) / 2.0;
  return out;
}

struct ClassWeights {
  double pos = 1.0;
  double neg = 1.0;
};

ClassWeights class_weights(std::span<const int> y, bool balance) {
  const auto n_pos = static_cast<double>(std::count(y.begin(), y.end(), 1));
  const auto n_neg = static_cast<double>(y.size()) - n_pos;
  if (!balance || n_pos == 0.0 || n_neg == 0.0) return {};
  return {std::min(1.0, n_neg / n_pos), std::min(1.0, n_pos / n_neg)};
}

void check_samples(std::span<const LabeledSample> samples) {
  if (samples.empty()) fail(Errc::data, "no training samples");
  const std::size_t dim = samples.front().x.size();
  bool has_pos = false, has_neg = false;
  for (const auto& s : samples) {
    if (s.x.size() != dim) fail(Errc::data, "training samples differ in dimension");
    if (s.label != 1 && s.label != -1) fail(Errc::data, "labels must be +1 or -1");
    for (double v : s.x) {
      if (!std::isfinite(v)) fail(Errc::data, "non-finite feature value in training data");
    }
    (s.label > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) fail(Errc::data, "training needs at least one sample of each label");
}

TrainResult assemble(std::span<const LabeledSample> samples, const Kernel& kernel, const TrainOptions& options,
                     const ClassWeights& w, SolverOutput&& sol) {
  TrainResult result;
  TrainedModel& m = result.model;
  m.kernel = kernel;
  m.C = options.C;
  m.weight_pos = w.pos;
  m.weight_neg = w.neg;
  m.bias = -sol.rho;
  for (std::size_t t = 0; t < samples.size(); ++t) {
    if (sol.alpha[t] <= 0.0) continue;
    m.support_vectors.append_row(samples[t].x);
    m.coefficients.push_back(sol.alpha[t] * samples[t].label);
  }
  if (m.support_vectors.rows() == 0) m.support_vectors = Matrix(0, samples.front().x.size());
  result.alphas = std::move(sol.alpha);
  result.objective_trace = std::move(sol.trace);
  result.iterations = sol.iterations;
  result.final_violation = sol.violation;
  result.converged = sol.converged;
  return result;
}

TrainResult train_on_kernel(std::span<const LabeledSample> samples, const Matrix& kmat, const Kernel& kernel,
                            const TrainOptions& options) {
  std::vector<int> y(samples.size());
  for (std::size_t t = 0; t < samples.size(); ++t) y[t] = samples[t].label;
  const ClassWeights w = class_weights(y, options.balance);
  std::vector<double> upper(samples.size());
  for (std::size_t t = 0; t < samples.size(); ++t) upper[t] = options.C * (y[t] > 0 ? w.pos : w.neg);
  return assemble(samples, kernel, options, w, solve(kmat, y, upper, options));
}

}  // namespace

double kernel_eval(const Kernel& kernel, std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    fail(Errc::invalid_argument,
         "kernel dimension mismatch: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  return kernel_from_base(kernel, kernel_base(kernel.kind, a, b));
}

Matrix gram_matrix(const Kernel& kernel, std::span<const LabeledSample> samples) {
  Matrix m = base_matrix(kernel.kind, samples);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (double& v : m.row(i)) v = kernel_from_base(kernel, v);
  }
  return m;
}

TrainResult train(std::span<const LabeledSample> samples, const Kernel& kernel, const TrainOptions& options) {
  kernel.validate();
  if (!(options.C > 0.0)) fail(Errc::config, "C must be positive");
  check_samples(samples);
  TrainResult result = train_on_kernel(samples, gram_matrix(kernel, samples), kernel, options);
  if (!result.converged) {
    fail(Errc::convergence, "SMO did not converge after " + std::to_string(result.iterations) +
                                " iterations; residual KKT violation " + std::to_string(result.final_violation));
  }
  return result;
}

double TrainedModel::decision(std::span<const double> x) const {
  if (x.size() != dim()) {
    fail(Errc::invalid_argument,
         "feature dimension " + std::to_string(x.size()) + " does not match model dimension " + std::to_string(dim()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < coefficients.size(); ++i) s += coefficients[i] * kernel_eval(kernel, support_vectors.row(i), x);
  return s + bias;
}

Prediction TrainedModel::predict(std::span<const double> x) const {
  const double margin = decision(x);
  return {margin >= 0.0 ? 1 : -1, margin};
}

Prediction predict(const TrainedModel& model, const BlobFeature& feature, const Fingerprint& codebook_fingerprint) {
  if (model.codebook_fingerprint != codebook_fingerprint) {
    fail(Errc::mismatch, "model was trained against a different codebook");
  }
  return model.predict(feature.combined());
}

// --- Cross validation -------------------------------------------------------------

CVGrid CVGrid::powers_of_two(int lo, int hi) {
  CVGrid g;
  for (int e = lo; e <= hi; ++e) {
    g.C_values.push_back(std::ldexp(1.0, e));
    g.gamma_values.push_back(std::ldexp(1.0, e));
  }
  return g;
}

std::vector<int> stratified_folds(std::span<const LabeledSample> samples, int folds, std::uint64_t seed) {
  if (folds < 2) fail(Errc::config, "cross validation needs at least 2 folds");
  detail::Rng rng(seed);
  std::vector<int> fold(samples.size(), 0);
  for (int label : {1, -1}) {
    std::vector<std::size_t> idx;
    for (std::size_t t = 0; t < samples.size(); ++t) {
      if (samples[t].label == label) idx.push_back(t);
    }
    if (static_cast<int>(idx.size()) < folds) {
      fail(Errc::data, "too few samples for " + std::to_string(folds) + "-fold cross validation: class " +
                           std::to_string(label) + " has " + std::to_string(idx.size()));
    }
    rng.shuffle(idx.begin(), idx.end());
    for (std::size_t r = 0; r < idx.size(); ++r) fold[idx[r]] = static_cast<int>(r % folds);
  }
  return fold;
}

CVReport cross_validate(std::span<const LabeledSample> samples, KernelKind kind, int folds, const CVGrid& grid,
                        std::uint64_t seed, bool balance) {
  check_samples(samples);
  if (grid.C_values.empty()) fail(Errc::config, "empty C grid");
  const auto fold = stratified_folds(samples, folds, seed);
  const Matrix base = base_matrix(kind, samples);
  const std::vector<double> gammas =
      kind == KernelKind::LINEAR || grid.gamma_values.empty() ? std::vector<double>{1.0} : grid.gamma_values;

  // Per-fold index sets and the fold's training subset.
  struct FoldData {
    std::vector<std::size_t> train, test;
    std::vector<LabeledSample> train_samples;
  };
  std::vector<FoldData> fd(folds);
  for (std::size_t t = 0; t < samples.size(); ++t) {
    for (int f = 0; f < folds; ++f) {
      if (fold[t] == f) {
        fd[f].test.push_back(t);
      } else {
        fd[f].train.push_back(t);
        fd[f].train_samples.push_back(samples[t]);
      }
    }
  }

  CVReport report;
  report.folds = folds;
  report.best_accuracy = -1.0;
  double best_dist = 0.0;
  for (double C : grid.C_values) {
    for (double gamma : gammas) {
      const Kernel kernel{kind, gamma};
      TrainOptions opt;
      opt.C = C;
      opt.balance = balance;
      double acc_sum = 0.0;
      for (const FoldData& f : fd) {
        const std::size_t n = f.train.size();
        Matrix kmat(n, n);
        for (std::size_t a = 0; a < n; ++a) {
          for (std::size_t b = 0; b < n; ++b) kmat.row(a)[b] = kernel_from_base(kernel, base.row(f.train[a])[f.train[b]]);
        }
        // Unconverged folds are still scored, as the reference SVM tools do.
        const TrainResult r = train_on_kernel(f.train_samples, kmat, kernel, opt);
        std::size_t correct = 0;
        for (std::size_t t : f.test) {
          double s = r.model.bias;
          for (std::size_t a = 0; a < n; ++a) {
            if (r.alphas[a] > 0.0) s += r.alphas[a] * samples[f.train[a]].label * kernel_from_base(kernel, base.row(f.train[a])[t]);
          }
          if ((s >= 0.0 ? 1 : -1) == samples[t].label) ++correct;
        }
        acc_sum += static_cast<double>(correct) / static_cast<double>(f.test.size());
      }
      const double acc = acc_sum / folds;
      report.cells.push_back({C, gamma, acc});
      // Equal accuracies go to the cell closest to C = gamma = 1 in log space.
      const double dist = std::abs(std::log2(C)) + std::abs(std::log2(gamma));
      if (acc > report.best_accuracy || (acc == report.best_accuracy && dist < best_dist)) {
        best_dist = dist;
        report.best_accuracy = acc;
        report.best_C = C;
        report.best_gamma = gamma;
      }
    }
  }
  return report;
}

// --- Serialization ------------------------------------------------------------------

namespace {
constexpr std::uint32_t kModelVersion = 1;
}

std::vector<std::uint8_t> serialize(const TrainedModel& model) {
  detail::Writer w;
  w.magic("PVSM");
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(model.kernel.kind));
  w.f64(model.kernel.gamma);
  w.f64(model.C);
  w.f64(model.weight_pos);
  w.f64(model.weight_neg);
  w.u32(static_cast<std::uint32_t>(model.support_vectors.rows()));
  w.u32(static_cast<std::uint32_t>(model.support_vectors.cols()));
  for (double v : model.support_vectors.data()) w.f64(v);
  for (double v : model.coefficients) w.f64(v);
  w.f64(model.bias);
  w.raw(model.codebook_fingerprint);
  return w.take();
}

TrainedModel deserialize_model(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes, "model");
  r.expect_magic("PVSM");
  const std::uint32_t version = r.u32();
  if (version != kModelVersion) fail(Errc::data, "unsupported model version " + std::to_string(version));
  TrainedModel m;
  const std::uint32_t kind = r.u32();
  if (kind > static_cast<std::uint32_t>(KernelKind::CHI2)) fail(Errc::data, "model: unknown kernel kind");
  m.kernel.kind = static_cast<KernelKind>(kind);
  m.kernel.gamma = r.f64();
  m.C = r.f64();
  m.weight_pos = r.f64();
  m.weight_neg = r.f64();
  const std::uint32_t count = r.u32();
  const std::uint32_t dim = r.u32();
  if (r.remaining() != (static_cast<std::size_t>(count) * dim + count + 1) * 8 + 32) {
    fail(Errc::data, "model: payload size mismatch");
  }
  std::vector<double> sv(static_cast<std::size_t>(count) * dim);
  for (double& v : sv) v = r.f64();
  m.support_vectors = Matrix(count, dim, std::move(sv));
  m.coefficients.resize(count);
  for (double& v : m.coefficients) v = r.f64();
  m.bias = r.f64();
  const auto fp = r.raw(32);
  std::copy(fp.begin(), fp.end(), m.codebook_fingerprint.begin());
  r.expect_end();
  return m;
}

void save_model(const std::filesystem::path& path, const TrainedModel& model) {
  detail::write_file(path, serialize(model));
}

TrainedModel load_model(const std::filesystem::path& path) { return deserialize_model(detail::read_file(path)); }

}  // namespace pyrovis
