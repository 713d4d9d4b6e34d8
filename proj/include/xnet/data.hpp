#pragma once

// MNIST IDX files, the synthetic regression target, and seeded splitting and
// batching.

#include "xnet/tensor.hpp"

#include <algorithm>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace xnet::data {

struct LabeledDataset {
  Tensor features;             // n x d
  std::vector<int> labels;     // classification
  std::vector<double> targets; // regression
  std::string provenance;

  [[nodiscard]] Index size() const { return features.rows(); }
  [[nodiscard]] bool is_classification() const { return !labels.empty(); }

  void validate() const {
    const auto n = static_cast<std::size_t>(features.rows());
    if (labels.size() != n && targets.size() != n) throw ShapeError("dataset: label count does not match rows");
  }
};

class IdxError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

namespace detail {

inline std::uint32_t read_be32(std::istream& in, const std::string& path) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) throw IdxError(path + ": truncated header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

inline void write_be32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

inline std::ifstream open_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(path + ": cannot open");
  return in;
}

inline std::vector<unsigned char> read_payload(std::istream& in, std::size_t n, const std::string& path) {
  std::vector<unsigned char> buf(n);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n))) {
    throw IdxError(path + ": truncated payload (expected " + std::to_string(n) + " bytes)");
  }
  return buf;
}

}  // namespace detail

struct IdxImages {
  std::uint32_t count = 0;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<unsigned char> pixels;
};

inline IdxImages read_idx_images(const std::string& path) {
  auto in = detail::open_binary(path);
  const auto magic = detail::read_be32(in, path);
  if (magic != kIdxImageMagic) throw IdxError(path + ": bad magic number " + std::to_string(magic) + " for images");
  IdxImages out;
  out.count = detail::read_be32(in, path);
  out.rows = detail::read_be32(in, path);
  out.cols = detail::read_be32(in, path);
  out.pixels = detail::read_payload(in, std::size_t{out.count} * out.rows * out.cols, path);
  return out;
}

inline std::vector<unsigned char> read_idx_labels(const std::string& path) {
  auto in = detail::open_binary(path);
  const auto magic = detail::read_be32(in, path);
  if (magic != kIdxLabelMagic) throw IdxError(path + ": bad magic number " + std::to_string(magic) + " for labels");
  const auto count = detail::read_be32(in, path);
  return detail::read_payload(in, count, path);
}

inline void write_idx_images(const std::string& path, const IdxImages& img) {
  std::ofstream out(path, std::ios::binary);
  detail::write_be32(out, kIdxImageMagic);
  detail::write_be32(out, img.count);
  detail::write_be32(out, img.rows);
  detail::write_be32(out, img.cols);
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IdxError(path + ": write failed");
}

inline void write_idx_labels(const std::string& path, const std::vector<unsigned char>& labels) {
  std::ofstream out(path, std::ios::binary);
  detail::write_be32(out, kIdxLabelMagic);
  detail::write_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
  if (!out) throw IdxError(path + ": write failed");
}

/// Images flattened row-major and scaled by 1/255; labels as integers.
inline LabeledDataset load_mnist_idx(const std::string& images_path, const std::string& labels_path) {
  const IdxImages img = read_idx_images(images_path);
  const auto lab = read_idx_labels(labels_path);
  if (lab.size() != img.count) {
    throw IdxError("image/label count mismatch: " + std::to_string(img.count) + " images, " +
                   std::to_string(lab.size()) + " labels");
  }
  LabeledDataset ds;
  const auto width = static_cast<Index>(img.rows) * img.cols;
  ds.features.resize(img.count, width);
  for (Index i = 0; i < ds.features.size(); ++i) ds.features.data()[i] = img.pixels[static_cast<std::size_t>(i)] / 255.0;
  ds.labels.assign(lab.begin(), lab.end());
  for (int l : ds.labels)
    if (l > 9) throw IdxError(labels_path + ": label " + std::to_string(l) + " outside 0..9");
  ds.provenance = "idx:" + images_path;
  return ds;
}

struct MnistFiles {
  std::string train_images, train_labels, test_images, test_labels;
};

/// Standard file names under `dir`; throws std::runtime_error naming the
/// first missing file.
inline MnistFiles locate_mnist(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path d(dir);
  MnistFiles f{(d / "train-images-idx3-ubyte").string(), (d / "train-labels-idx1-ubyte").string(),
               (d / "t10k-images-idx3-ubyte").string(), (d / "t10k-labels-idx1-ubyte").string()};
  for (const auto& p : {f.train_images, f.train_labels, f.test_images, f.test_labels}) {
    if (!fs::exists(p)) throw std::runtime_error("MNIST file not found: " + p);
  }
  return f;
}

/// x1^2 - x1 x2 + 3 x2 + x2^2 + 1/(5 + x1^2)
inline double regression_target(double x1, double x2) {
  return x1 * x1 - x1 * x2 + 3.0 * x2 + x2 * x2 + 1.0 / (5.0 + x1 * x1);
}

inline constexpr double kRegressionLo = -2.0;
inline constexpr double kRegressionHi = 2.0;

/// n points uniform on [-2, 2]^2 with targets plus N(0, sigma^2) noise.
inline LabeledDataset synth_regression(Index n, double noise_sigma, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("synth_regression: n must be >= 1");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("synth_regression: noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(kRegressionLo, kRegressionHi);
  std::normal_distribution<double> noise(0.0, 1.0);
  LabeledDataset ds;
  ds.features.resize(n, 2);
  ds.targets.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    const double x1 = u(rng);
    const double x2 = u(rng);
    ds.features.row(i) << x1, x2;
    ds.targets[static_cast<std::size_t>(i)] = regression_target(x1, x2) + noise_sigma * noise(rng);
  }
  ds.provenance = "synthetic regression, sigma=" + std::to_string(noise_sigma) + ", seed=" + std::to_string(seed);
  return ds;
}

/// Seeded train/validation split with per-epoch reshuffled batches.
class BatchPlan {
 public:
  BatchPlan(Index n, double val_fraction, Index batch_size, std::uint64_t seed) : batch_(batch_size), seed_(seed) {
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw std::invalid_argument("val_fraction must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n)));
    val_.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    train_.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
    if (train_.empty()) throw std::invalid_argument("split leaves an empty training set");
  }

  [[nodiscard]] const std::vector<Index>& train() const { return train_; }
  [[nodiscard]] const std::vector<Index>& validation() const { return val_; }

  /// Training batches for `epoch`; the order depends only on (seed, epoch).
  [[nodiscard]] std::vector<std::vector<Index>> epoch_batches(int epoch) const {
    std::vector<Index> order = train_;
    std::mt19937_64 rng(seed_ ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(epoch) + 1)));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<Index>> out;
    for (std::size_t i = 0; i < order.size(); i += static_cast<std::size_t>(batch_)) {
      const auto end = std::min(order.size(), i + static_cast<std::size_t>(batch_));
      out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
  }

 private:
  Index batch_;
  std::uint64_t seed_;
  std::vector<Index> train_;
  std::vector<Index> val_;
};

inline BatchPlan split_batches(const LabeledDataset& ds, double val_fraction, Index batch_size, std::uint64_t seed) {
  return BatchPlan(ds.size(), val_fraction, batch_size, seed);
}

inline Tensor gather_rows(const Tensor& x, const std::vector<Index>& idx) {
  Tensor out(static_cast<Index>(idx.size()), x.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Index>(i)) = x.row(idx[i]);
  return out;
}

inline LabeledDataset subset(const LabeledDataset& ds, const std::vector<Index>& idx) {
  LabeledDataset out;
  out.features = gather_rows(ds.features, idx);
  for (Index i : idx) {
    if (!ds.labels.empty()) out.labels.push_back(ds.labels[static_cast<std::size_t>(i)]);
    if (!ds.targets.empty()) out.targets.push_back(ds.targets[static_cast<std::size_t>(i)]);
  }
  out.provenance = ds.provenance + " (subset)";
  return out;
}

}  // namespace xnet::data
