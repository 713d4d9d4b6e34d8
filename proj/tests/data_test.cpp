#include "xnet/data.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>

namespace data = xnet::data;
namespace fs = std::filesystem;
using xnet::Index;

namespace {

fs::path temp_dir() {
  const auto d = fs::temp_directory_path() / ("xnet_data_test_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

void write_raw(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Idx, RoundTrip) {
  const auto d = temp_dir();
  data::IdxImages img;
  img.count = 3;
  img.rows = 2;
  img.cols = 2;
  img.pixels = {0, 255, 128, 1, 2, 3, 4, 5, 250, 251, 252, 253};
  data::write_idx_images((d / "img").string(), img);
  data::write_idx_labels((d / "lab").string(), {7, 0, 9});
  const auto ds = data::load_mnist_idx((d / "img").string(), (d / "lab").string());
  ASSERT_EQ(ds.size(), 3);
  ASSERT_EQ(ds.features.cols(), 4);
  for (Index i = 0; i < 12; ++i) EXPECT_DOUBLE_EQ(ds.features.data()[i], img.pixels[static_cast<std::size_t>(i)] / 255.0);
  EXPECT_EQ(ds.labels, (std::vector<int>{7, 0, 9}));
  const auto back = data::read_idx_images((d / "img").string());
  EXPECT_EQ(back.pixels, img.pixels);
  fs::remove_all(d);
}

TEST(Idx, Errors) {
  const auto d = temp_dir();
  data::IdxImages img{2, 1, 1, {1, 2}};
  data::write_idx_images((d / "img").string(), img);
  data::write_idx_labels((d / "lab3").string(), {1, 2, 3});
  EXPECT_THROW(data::load_mnist_idx((d / "img").string(), (d / "lab3").string()), data::IdxError);
  // Labels file passed as images: wrong magic.
  EXPECT_THROW(data::read_idx_images((d / "lab3").string()), data::IdxError);
  // Header claims 5 images of 1x1 but only 2 bytes follow.
  write_raw(d / "short", {0, 0, 8, 3, 0, 0, 0, 5, 0, 0, 0, 1, 0, 0, 0, 1, 9, 9});
  EXPECT_THROW(data::read_idx_images((d / "short").string()), data::IdxError);
  EXPECT_THROW(data::read_idx_labels((d / "missing").string()), data::IdxError);
  EXPECT_THROW(data::locate_mnist(d.string()), std::runtime_error);
  fs::remove_all(d);
}

TEST(Idx, RealMnistWhenAvailable) {
  const char* dir = std::getenv("XNET_DATA_DIR");
  if (dir == nullptr) GTEST_SKIP() << "XNET_DATA_DIR not set";
  data::MnistFiles f;
  try {
    f = data::locate_mnist((fs::path(dir) / "mnist").string());
  } catch (const std::runtime_error& e) {
    GTEST_SKIP() << e.what();
  }
  const auto train = data::load_mnist_idx(f.train_images, f.train_labels);
  const auto test = data::load_mnist_idx(f.test_images, f.test_labels);
  EXPECT_EQ(train.size(), 60000);
  EXPECT_EQ(train.features.cols(), 784);
  EXPECT_EQ(test.size(), 10000);
  EXPECT_GE(train.features.minCoeff(), 0.0);
  EXPECT_LE(train.features.maxCoeff(), 1.0);
  for (int l : test.labels) ASSERT_TRUE(l >= 0 && l <= 9);
}

TEST(Regression, TargetAndNoise) {
  EXPECT_DOUBLE_EQ(data::regression_target(0, 0), 0.2);
  EXPECT_NEAR(data::regression_target(1, 1), 4.0 + 1.0 / 6.0, 1e-15);
  const auto clean = data::synth_regression(10000, 0.0, 5);
  const auto noisy = data::synth_regression(10000, 0.1, 5);
  double s = 0, s2 = 0;
  for (Index i = 0; i < clean.size(); ++i) {
    ASSERT_EQ(clean.features.row(i), noisy.features.row(i));
    EXPECT_EQ(clean.targets[static_cast<std::size_t>(i)],
              data::regression_target(clean.features(i, 0), clean.features(i, 1)));
    const double e = noisy.targets[static_cast<std::size_t>(i)] - clean.targets[static_cast<std::size_t>(i)];
    s += e;
    s2 += e * e;
  }
  const double var = s2 / 10000 - (s / 10000) * (s / 10000);
  EXPECT_NEAR(var, 0.01, 0.001);
  EXPECT_GE(clean.features.minCoeff(), -2.0);
  EXPECT_LE(clean.features.maxCoeff(), 2.0);
  const auto again = data::synth_regression(10000, 0.0, 5);
  EXPECT_EQ(again.features, clean.features);
  EXPECT_EQ(again.targets, clean.targets);
  EXPECT_THROW(data::synth_regression(0, 0.0, 1), std::invalid_argument);
}

TEST(Split, DisjointSeededBatches) {
  const auto ds = data::synth_regression(100, 0.0, 1);
  const auto plan = data::split_batches(ds, 0.2, 16, 9);
  EXPECT_EQ(plan.train().size(), 80u);
  EXPECT_EQ(plan.validation().size(), 20u);
  std::set<Index> all(plan.train().begin(), plan.train().end());
  for (Index i : plan.validation()) EXPECT_TRUE(all.insert(i).second);
  EXPECT_EQ(all.size(), 100u);
  const auto again = data::split_batches(ds, 0.2, 16, 9);
  EXPECT_EQ(again.train(), plan.train());
  EXPECT_EQ(again.epoch_batches(3), plan.epoch_batches(3));
  EXPECT_NE(plan.epoch_batches(3), plan.epoch_batches(4));
  std::size_t covered = 0;
  for (const auto& b : plan.epoch_batches(0)) covered += b.size();
  EXPECT_EQ(covered, 80u);
  EXPECT_EQ(data::split_batches(ds, 0.0, 1000, 1).epoch_batches(0).size(), 1u);
  EXPECT_THROW(data::split_batches(ds, 1.0, 4, 1), std::invalid_argument);
  EXPECT_THROW(data::split_batches(ds, 0.2, 0, 1), std::invalid_argument);
}
