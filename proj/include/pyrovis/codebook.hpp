#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace pyrovis {

/// Row-major set of equal-length vectors.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> data() const { return data_; }
  void append_row(std::span<const double> values);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double squared_distance(std::span<const double> a, std::span<const double> b);

/// Visual vocabulary: k cluster centers plus the Gaussian bandwidth used for soft assignment.
struct Codebook {
  Matrix centers;
  double sigma = 1.0;
  // Provenance, kept in memory only.
  std::size_t trained_descriptors = 0;
  std::string plan_fingerprint;

  std::size_t k() const { return centers.rows(); }
  std::size_t dim() const { return centers.cols(); }
  /// Throws on NaN entries or duplicate centers.
  void validate() const;
};

struct KMeansResult {
  Codebook codebook;
  /// Sum of squared distances to the nearest center after each iteration.
  std::vector<double> sse_trace;
  std::vector<std::size_t> assignment;
  int iterations_run = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Stops after `iterations` or when no assignment changes.
/// Sets the codebook sigma to the mean distance of each point to its nearest center.
KMeansResult kmeans(const Matrix& points, std::size_t k, int iterations, std::uint64_t seed);

/// Exact k-d tree over a fixed set of points (Euclidean metric).
class NNIndex {
 public:
  struct Neighbor {
    std::size_t index;
    double distance;
    friend bool operator==(const Neighbor&, const Neighbor&) = default;
  };

  explicit NNIndex(Matrix points, std::size_t leaf_size = 8);

  /// The m nearest points sorted by (distance, index) ascending.
  std::vector<Neighbor> query(std::span<const double> q, std::size_t m) const;

  std::size_t size() const { return points_.rows(); }
  std::size_t dim() const { return points_.cols(); }
  const Matrix& points() const { return points_; }

 private:
  struct Node {
    int split_dim = -1;  // -1 marks a leaf
    double split_value = 0.0;
    int left = -1;
    int right = -1;
    std::size_t begin = 0;
    std::size_t end = 0;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, std::span<const double> q, std::size_t m,
              std::vector<std::pair<double, std::size_t>>& heap) const;

  Matrix points_;
  std::size_t leaf_size_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

NNIndex index(const Codebook& codebook);

/// Brute-force m-NN with the same ordering contract as NNIndex::query.
std::vector<NNIndex::Neighbor> linear_scan(const Matrix& points, std::span<const double> q, std::size_t m);

struct EncoderParams {
  std::size_t m = 10;
  double sigma = 1.0;

  void validate(std::size_t k) const;
};

/// Gaussian kernel (1 / sqrt(2 pi sigma)) exp(-x^2 / (2 sigma^2)).
double gaussian_kernel(double x, double sigma);

struct SoftWeight {
  std::size_t center;
  double weight;
};

/// Kernel-weighted vote over the m nearest centers; weights sum to 1.
/// When every kernel value underflows, the nearest center gets weight 1.
std::vector<SoftWeight> soft_assign(std::span<const double> descriptor, const NNIndex& index,
                                    const EncoderParams& params);

/// Weights for a descriptor whose m nearest neighbours are already known.
std::vector<SoftWeight> soft_weights(std::span<const NNIndex::Neighbor> neighbors, double sigma);

struct BlobFeature {
  std::vector<double> bow;     // k bins, L1-normalized
  std::vector<double> global;  // 96 bins
  std::vector<double> combined() const;
};

/// Unnormalized soft-assignment histogram; bins sum to descriptors.rows().
std::vector<double> accumulate_histogram(const Matrix& descriptors, const NNIndex& index, const EncoderParams& params);

/// Throws "empty blob" when there are no descriptors.
BlobFeature encode(const Matrix& descriptors, const NNIndex& index, const EncoderParams& params,
                   std::span<const double> global);

// --- File formats -----------------------------------------------------------

/// Binary layout: "PVCB", u32 version, u32 k, u32 dim, k*dim f64, f64 sigma (little endian).
std::vector<std::uint8_t> serialize(const Codebook& codebook);
Codebook deserialize_codebook(std::span<const std::uint8_t> bytes);
void save_codebook(const std::filesystem::path& path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& path);
/// One center per line, then a `sigma <value>` line; 17 significant digits.
void export_codebook_text(std::ostream& out, const Codebook& codebook);

/// SHA-256 of the serialized codebook; binds trained models to their vocabulary.
std::array<std::uint8_t, 32> fingerprint(const Codebook& codebook);

}  // namespace pyrovis
