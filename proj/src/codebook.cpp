#include "pyrovis/codebook.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "binio.hpp"
#include "pyrovis/error.hpp"
#include "random.hpp"

namespace pyrovis {

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) fail(Errc::invalid_argument, "matrix data size does not match its shape");
}

void Matrix::append_row(std::span<const double> values) {
  if (rows_ == 0 && cols_ == 0) cols_ = values.size();
  if (values.size() != cols_) fail(Errc::invalid_argument, "row length does not match matrix width");
  data_.insert(data_.end(), values.begin(), values.end());
  ++rows_;
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

void Codebook::validate() const {
  if (k() == 0 || dim() == 0) fail(Errc::data, "codebook is empty");
  for (double v : centers.data()) {
    if (!std::isfinite(v)) fail(Errc::data, "codebook contains non-finite entries");
  }
  for (std::size_t i = 0; i < k(); ++i) {
    for (std::size_t j = i + 1; j < k(); ++j) {
      if (squared_distance(centers.row(i), centers.row(j)) == 0.0) {
        fail(Errc::data, "codebook centers " + std::to_string(i) + " and " + std::to_string(j) + " are identical");
      }
    }
  }
  if (!(sigma > 0.0) || !std::isfinite(sigma)) fail(Errc::data, "codebook sigma must be positive");
}

// --- k-means ------------------------------------------------------------------

namespace {

struct Nearest {
  std::size_t center;
  double d2;
};

Nearest nearest_center(std::span<const double> p, const Matrix& centers) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    const double d2 = squared_distance(p, centers.row(c));
    if (d2 < best.d2) best = {c, d2};
  }
  return best;
}

Matrix seed_plus_plus(const Matrix& points, std::size_t k, detail::Rng& rng) {
  const std::size_t n = points.rows();
  Matrix centers;
  centers.append_row(points.row(rng.below(n)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(points.row(i), centers.row(0));

  while (centers.rows() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    if (!(total > 0.0)) {
      fail(Errc::data, "insufficient distinct descriptors: only " + std::to_string(centers.rows()) +
                           " distinct values for k=" + std::to_string(k));
    }
    const double target = rng.uniform() * total;
    double run = 0.0;
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (d2[i] <= 0.0) continue;
      run += d2[i];
      pick = i;
      if (run > target) break;
    }
    centers.append_row(points.row(pick));
    const auto added = centers.row(centers.rows() - 1);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(points.row(i), added));
  }
  return centers;
}

}  // namespace

KMeansResult kmeans(const Matrix& points, std::size_t k, int iterations, std::uint64_t seed) {
  if (k == 0) fail(Errc::invalid_argument, "k must be positive");
  if (iterations < 1) fail(Errc::invalid_argument, "k-means needs at least one iteration");
  if (points.rows() < k) {
    fail(Errc::data, "k-means needs at least k=" + std::to_string(k) + " descriptors, got " +
                         std::to_string(points.rows()));
  }
  for (double v : points.data()) {
    if (!std::isfinite(v)) fail(Errc::data, "k-means input contains non-finite values");
  }

  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  detail::Rng rng(seed);
  KMeansResult result;
  Matrix centers = seed_plus_plus(points, k, rng);

  std::vector<std::size_t> assign(n);
  std::vector<double> dist2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Nearest nn = nearest_center(points.row(i), centers);
    assign[i] = nn.center;
    dist2[i] = nn.d2;
  }

  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  for (int it = 0; it < iterations; ++it) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = points.row(i);
      double* s = sums.data() + assign[i] * dim;
      for (std::size_t d = 0; d < dim; ++d) s[d] += p[d];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto row = centers.row(c);
      for (std::size_t d = 0; d < dim; ++d) row[d] = sums[c * dim + d] / static_cast<double>(counts[c]);
    }
    // Empty clusters move to the point farthest from its (updated) center.
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d2 = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d2 = squared_distance(points.row(i), centers.row(assign[i]));
        if (d2 > far_d2) {
          far_d2 = d2;
          far = i;
        }
      }
      std::copy(points.row(far).begin(), points.row(far).end(), centers.row(c).begin());
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
    }

    bool changed = false;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Nearest nn = nearest_center(points.row(i), centers);
      if (nn.center != assign[i]) changed = true;
      assign[i] = nn.center;
      dist2[i] = nn.d2;
      sse += nn.d2;
    }
    result.sse_trace.push_back(sse);
    result.iterations_run = it + 1;
    if (!changed) break;
  }

  double mean_dist = 0.0;
  for (double d2 : dist2) mean_dist += std::sqrt(d2);
  mean_dist /= static_cast<double>(n);

  result.codebook.centers = std::move(centers);
  // Every point coincides with a center (n == k distinct points): no spread to measure.
  result.codebook.sigma = mean_dist > 0.0 ? mean_dist : 1.0;
  result.codebook.trained_descriptors = n;
  result.assignment = std::move(assign);
  result.codebook.validate();
  return result;
}

// --- k-d tree -----------------------------------------------------------------

NNIndex::NNIndex(Matrix points, std::size_t leaf_size) : points_(std::move(points)), leaf_size_(std::max<std::size_t>(leaf_size, 1)) {
  order_.resize(points_.rows());
  std::iota(order_.begin(), order_.end(), 0);
  if (!order_.empty()) build(0, order_.size());
}

int NNIndex::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{-1, 0.0, -1, -1, begin, end});
  if (end - begin <= leaf_size_) return id;

  int best_dim = -1;
  double best_spread = 0.0;
  for (std::size_t d = 0; d < points_.cols(); ++d) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = begin; i < end; ++i) {
      const double v = points_.row(order_[i])[d];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo > best_spread) {
      best_spread = hi - lo;
      best_dim = static_cast<int>(d);
    }
  }
  if (best_dim < 0) return id;  // all points identical

  const std::size_t mid = begin + (end - begin) / 2;
  const auto d = static_cast<std::size_t>(best_dim);
  std::nth_element(order_.begin() + static_cast<long>(begin), order_.begin() + static_cast<long>(mid),
                   order_.begin() + static_cast<long>(end), [&](std::size_t a, std::size_t b) {
                     const double va = points_.row(a)[d], vb = points_.row(b)[d];
                     return va < vb || (va == vb && a < b);
                   });
  const double split = points_.row(order_[mid])[d];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].split_dim = best_dim;
  nodes_[id].split_value = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {

using Candidate = std::pair<double, std::size_t>;  // (squared distance, index); lexicographic order

}  // namespace

void NNIndex::search(int node_id, std::span<const double> q, std::size_t m, std::vector<Candidate>& heap) const {
  const Node& node = nodes_[node_id];
  if (node.split_dim < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const Candidate c{squared_distance(q, points_.row(order_[i])), order_[i]};
      if (heap.size() < m) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end());
      } else if (c < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const double diff = q[node.split_dim] - node.split_value;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, m, heap);
  // Equal bounds are still visited so ties resolve to the lower index.
  if (heap.size() < m || diff * diff <= heap.front().first) search(far, q, m, heap);
}

std::vector<NNIndex::Neighbor> NNIndex::query(std::span<const double> q, std::size_t m) const {
  if (q.size() != dim()) fail(Errc::invalid_argument, "query dimension does not match index");
  m = std::min(m, size());
  std::vector<Candidate> heap;
  heap.reserve(m + 1);
  if (m > 0) search(0, q, m, heap);
  std::sort(heap.begin(), heap.end());
  std::vector<Neighbor> out;
  out.reserve(heap.size());
  for (const auto& [d2, i] : heap) out.push_back({i, std::sqrt(d2)});
  return out;
}

NNIndex index(const Codebook& codebook) { return NNIndex(codebook.centers); }

std::vector<NNIndex::Neighbor> linear_scan(const Matrix& points, std::span<const double> q, std::size_t m) {
  std::vector<Candidate> all(points.rows());
  for (std::size_t i = 0; i < points.rows(); ++i) all[i] = {squared_distance(q, points.row(i)), i};
  m = std::min(m, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(m), all.end());
  std::vector<NNIndex::Neighbor> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back({all[i].second, std::sqrt(all[i].first)});
  return out;
}

// --- Soft assignment ------------------------------------------------------------

void EncoderParams::validate(std::size_t k) const {
  if (m < 1 || m > k) fail(Errc::config, "encoder m must lie in [1, " + std::to_string(k) + "]");
  if (!(sigma > 0.0)) fail(Errc::config, "encoder sigma must be positive");
}

double gaussian_kernel(double x, double sigma) {
  constexpr double two_pi = 6.283185307179586;
  return 1.0 / std::sqrt(two_pi * sigma) * std::exp(-0.5 * x * x / (sigma * sigma));
}

std::vector<SoftWeight> soft_weights(std::span<const NNIndex::Neighbor> neighbors, double sigma) {
  std::vector<SoftWeight> out;
  out.reserve(neighbors.size());
  double total = 0.0;
  for (const auto& nb : neighbors) {
    const double k = gaussian_kernel(nb.distance, sigma);
    out.push_back({nb.index, k});
    total += k;
  }
  if (!(total > 0.0)) {
    // All kernel values underflowed: hard-assign to the nearest center.
    for (auto& w : out) w.weight = 0.0;
    if (!out.empty()) out.front().weight = 1.0;
    return out;
  }
  for (auto& w : out) w.weight /= total;
  return out;
}

std::vector<SoftWeight> soft_assign(std::span<const double> descriptor, const NNIndex& index,
                                    const EncoderParams& params) {
  params.validate(index.size());
  const auto neighbors = index.query(descriptor, params.m);
  return soft_weights(neighbors, params.sigma);
}

std::vector<double> BlobFeature::combined() const {
  std::vector<double> out(bow);
  out.insert(out.end(), global.begin(), global.end());
  return out;
}

std::vector<double> accumulate_histogram(const Matrix& descriptors, const NNIndex& index,
                                         const EncoderParams& params) {
  params.validate(index.size());
  // Neumaier-compensated bins keep the result independent of descriptor order.
  std::vector<double> sum(index.size(), 0.0), comp(index.size(), 0.0);
  for (std::size_t j = 0; j < descriptors.rows(); ++j) {
    for (const SoftWeight& w : soft_assign(descriptors.row(j), index, params)) {
      double& s = sum[w.center];
      const double t = s + w.weight;
      if (std::abs(s) >= std::abs(w.weight)) {
        comp[w.center] += (s - t) + w.weight;
      } else {
        comp[w.center] += (w.weight - t) + s;
      }
      s = t;
    }
  }
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += comp[i];
  return sum;
}

BlobFeature encode(const Matrix& descriptors, const NNIndex& index, const EncoderParams& params,
                   std::span<const double> global) {
  if (descriptors.rows() == 0) fail(Errc::data, "empty blob");
  if (descriptors.cols() != index.dim()) fail(Errc::invalid_argument, "descriptor dimension does not match codebook");
  BlobFeature f;
  f.bow = accumulate_histogram(descriptors, index, params);
  const double total = std::accumulate(f.bow.begin(), f.bow.end(), 0.0);
  for (double& v : f.bow) v /= total;
  f.global.assign(global.begin(), global.end());
  return f;
}

// --- Serialization --------------------------------------------------------------

namespace {
constexpr std::uint32_t kCodebookVersion = 1;
}

std::vector<std::uint8_t> serialize(const Codebook& codebook) {
  detail::Writer w;
  w.magic("PVCB");
  w.u32(kCodebookVersion);
  w.u32(static_cast<std::uint32_t>(codebook.k()));
  w.u32(static_cast<std::uint32_t>(codebook.dim()));
  for (double v : codebook.centers.data()) w.f64(v);
  w.f64(codebook.sigma);
  return w.take();
}

Codebook deserialize_codebook(std::span<const std::uint8_t> bytes) {
  detail::Reader r(bytes, "codebook");
  r.expect_magic("PVCB");
  const std::uint32_t version = r.u32();
  if (version != kCodebookVersion) fail(Errc::data, "unsupported codebook version " + std::to_string(version));
  const std::uint32_t k = r.u32();
  const std::uint32_t dim = r.u32();
  if (r.remaining() != (static_cast<std::size_t>(k) * dim + 1) * 8) fail(Errc::data, "codebook: payload size mismatch");
  std::vector<double> data(static_cast<std::size_t>(k) * dim);
  for (double& v : data) v = r.f64();
  Codebook cb;
  cb.centers = Matrix(k, dim, std::move(data));
  cb.sigma = r.f64();
  r.expect_end();
  cb.validate();
  return cb;
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  detail::write_file(path, serialize(codebook));
}

Codebook load_codebook(const std::filesystem::path& path) { return deserialize_codebook(detail::read_file(path)); }

void export_codebook_text(std::ostream& out, const Codebook& codebook) {
  char buf[40];
  for (std::size_t c = 0; c < codebook.k(); ++c) {
    const auto row = codebook.centers.row(c);
    for (std::size_t d = 0; d < row.size(); ++d) {
      std::snprintf(buf, sizeof buf, d == 0 ? "%.17g" : " %.17g", row[d]);
      out << buf;
    }
    out << '\n';
  }
  std::snprintf(buf, sizeof buf, "sigma %.17g\n", codebook.sigma);
  out << buf;
}

std::array<std::uint8_t, 32> fingerprint(const Codebook& codebook) {
  const auto bytes = serialize(codebook);
  std::array<std::uint8_t, 32> digest{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1 || len != 32) {
    fail(Errc::io, "SHA-256 computation failed");
  }
  return digest;
}

}  // namespace pyrovis
