#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include "pyrovis/codebook.hpp"

namespace pyrovis {

enum class KernelKind : std::uint32_t { LINEAR = 0, RBF = 1, CHI2 = 2 };

std::string_view to_string(KernelKind kind);
KernelKind parse_kernel_kind(std::string_view name);

struct Kernel {
  KernelKind kind = KernelKind::RBF;
  double gamma = 1.0;

  void validate() const;
};

/// LINEAR: a.b; RBF: exp(-gamma |a-b|^2); CHI2: exp(-gamma sum (a-b)^2/(a+b)), 0/0 terms skipped.
double kernel_eval(const Kernel& kernel, std::span<const double> a, std::span<const double> b);

struct LabeledSample {
  std::vector<double> x;
  int label = 1;  // +1 fire, -1 non-fire
};

struct TrainOptions {
  double C = 1.0;
  bool balance = true;
  double tolerance = 1e-3;
  /// 0 selects max(100000, 100 n).
  std::size_t max_iterations = 0;
  /// Record the dual objective after every SMO step.
  bool trace_objective = false;
};

using Fingerprint = std::array<std::uint8_t, 32>;

struct Prediction {
  int label;
  double margin;
};

struct TrainedModel {
  Kernel kernel;
  double C = 1.0;
  double weight_pos = 1.0;
  double weight_neg = 1.0;
  Matrix support_vectors;
  std::vector<double> coefficients;  // alpha_i * y_i
  double bias = 0.0;
  Fingerprint codebook_fingerprint{};

  std::size_t dim() const { return support_vectors.cols(); }
  double decision(std::span<const double> x) const;
  /// Ties (margin exactly 0) resolve to +1: a missed fire costs more than a false alarm.
  Prediction predict(std::span<const double> x) const;
};

struct TrainResult {
  TrainedModel model;
  std::vector<double> alphas;  // one per training sample, unsigned
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
  double final_violation = 0.0;
  bool converged = false;
};

/// SMO on the soft-margin dual with maximal-violating-pair selection.
/// With `balance`, per-class penalties are C*w with w_pos / w_neg = n_neg / n_pos, the majority class downweighted.
/// Throws Errc::convergence (carrying the residual violation) when the iteration cap is hit.
TrainResult train(std::span<const LabeledSample> samples, const Kernel& kernel, const TrainOptions& options);

/// Rejects a feature when the model was trained against a different codebook.
Prediction predict(const TrainedModel& model, const BlobFeature& feature, const Fingerprint& codebook_fingerprint);

/// Full kernel matrix; used for the positive-semidefiniteness check.
Matrix gram_matrix(const Kernel& kernel, std::span<const LabeledSample> samples);

struct CVGrid {
  std::vector<double> C_values;
  std::vector<double> gamma_values;

  /// {2^lo, ..., 2^hi} on both axes.
  static CVGrid powers_of_two(int lo = -8, int hi = 8);
};

struct CVCell {
  double C;
  double gamma;
  double accuracy;
};

struct CVReport {
  std::vector<CVCell> cells;
  double best_C = 0.0;
  double best_gamma = 0.0;
  double best_accuracy = 0.0;
  int folds = 0;
};

/// Stratified fold index per sample, deterministic for a seed.
std::vector<int> stratified_folds(std::span<const LabeledSample> samples, int folds, std::uint64_t seed);

/// Grid search scored by mean fold accuracy; ties go to the cell nearest C = gamma = 1 in log2 space.
/// For LINEAR kernels gamma is not searched (reported as 1).
CVReport cross_validate(std::span<const LabeledSample> samples, KernelKind kind, int folds, const CVGrid& grid,
                        std::uint64_t seed, bool balance = true);

// --- File format ------------------------------------------------------------

/// "PVSM", u32 version, u32 kernel kind, f64 gamma, f64 C, f64 w_pos, f64 w_neg, u32 sv count, u32 dim,
/// support vectors, coefficients, f64 bias, 32-byte codebook fingerprint. Little endian.
std::vector<std::uint8_t> serialize(const TrainedModel& model);
TrainedModel deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const std::filesystem::path& path, const TrainedModel& model);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace pyrovis
