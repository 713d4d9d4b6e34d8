#include "xnet/experiment.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace ex = xnet::experiment;
namespace fs = std::filesystem;
using xnet::nn::Activation;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / "xnet_experiment_test" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::string first_line(const fs::path& p) {
  std::ifstream in(p);
  std::string s;
  std::getline(in, s);
  return s;
}

ex::ExperimentConfig small(ex::Kind kind, Activation a = Activation::Cauchy) {
  auto c = ex::defaults(kind);
  c.activation = a;
  c.seed = 5;
  c.epochs = 4;
  switch (kind) {
    case ex::Kind::Regression: c.samples = 64; c.hidden = {8}; break;
    case ex::Kind::Heat:
    case ex::Kind::Burgers:
      c.hidden = {6};
      c.interior = 40;
      c.boundary = 10;
      c.initial = 10;
      break;
    case ex::Kind::PoissonPinn: c.hidden = {6}; c.interior = 40; c.boundary = 20; break;
    case ex::Kind::PoissonLsq: c.interior = 300; c.boundary = 300; c.observers = 196; c.grid = 20; break;
    case ex::Kind::AllenCahn: c.dim = 4; c.time_steps = 3; c.batch = 8; c.hidden = {5}; break;
    default: break;
  }
  return c;
}

}  // namespace

TEST(ExperimentConfig, NamesRoundTrip) {
  for (auto [name, kind] : ex::kKindNames) EXPECT_EQ(ex::kind_name(ex::parse_kind(name)), name);
  EXPECT_THROW(ex::parse_kind("cifar"), std::invalid_argument);
}

TEST(ExperimentConfig, SeedRequiredAndValuesChecked) {
  auto c = small(ex::Kind::Regression);
  c.seed.reset();
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(ex::Kind::Regression);
  c.lr = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(ex::Kind::Regression);
  c.hidden = {4, 0};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(ex::Kind::Regression);
  c.schedule = {{5, 1e-3}, {3, 1e-4}};
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = small(ex::Kind::PoissonLsq);
  c.observers = 30;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_NO_THROW(small(ex::Kind::Regression).validate());
}

TEST(ExperimentConfig, DefaultsFollowPaperSettings) {
  const auto pinn = ex::defaults(ex::Kind::PoissonPinn);
  EXPECT_EQ(pinn.hidden, std::vector<xnet::Index>{200});
  EXPECT_EQ(pinn.epochs, 8000);
  EXPECT_DOUBLE_EQ(pinn.lr_schedule().rate(6999), 1e-3);
  EXPECT_DOUBLE_EQ(pinn.lr_schedule().rate(7000), 1e-4);
  EXPECT_EQ(ex::defaults(ex::Kind::Mnist).batch, 64);
  EXPECT_EQ(ex::defaults(ex::Kind::Regression).batch, 0);
  EXPECT_EQ(ex::defaults(ex::Kind::Regression).samples, 2500);
  EXPECT_EQ(ex::defaults(ex::Kind::PoissonLsq).observers, 400);
}

TEST(Run, MetricRunWritesArtifacts) {
  auto c = small(ex::Kind::Regression);
  c.out_dir = fresh_dir("metric").string();
  const auto r = ex::run(c);
  ASSERT_EQ(r.status, ex::kOk) << r.message;
  ASSERT_EQ(r.history.size(), 4u);
  EXPECT_EQ(first_line(fs::path(c.out_dir) / "history.csv"), ex::kMetricHeader);
  EXPECT_EQ(first_line(fs::path(c.out_dir) / "summary.csv"), ex::kSummaryHeader);
  EXPECT_EQ(slurp(fs::path(c.out_dir) / "config.resolved"), ex::resolved_config(c));
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / "timing.csv"));
  EXPECT_FALSE(fs::exists(fs::path(c.out_dir) / "error.txt"));
  // Metric columns for classification stay empty on regression; time_s is empty without record_time.
  std::ifstream in(fs::path(c.out_dir) / "history.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_EQ(std::count(line.begin(), line.end(), ','), 8);
  EXPECT_EQ(line.back(), ',');
}

TEST(Run, PdeRunsUseLossHeader) {
  for (auto k : {ex::Kind::Heat, ex::Kind::Burgers, ex::Kind::PoissonPinn, ex::Kind::PoissonLsq,
                 ex::Kind::AllenCahn}) {
    auto c = small(k);
    c.out_dir = fresh_dir("pde_" + std::string(ex::kind_name(k))).string();
    const auto r = ex::run(c);
    ASSERT_EQ(r.status, ex::kOk) << ex::kind_name(k) << ": " << r.message;
    EXPECT_EQ(first_line(fs::path(c.out_dir) / "history.csv"), ex::kLossHeader) << ex::kind_name(k);
    EXPECT_FALSE(r.history.empty());
  }
}

TEST(Run, KnownSolutionsReportGridError) {
  auto c = small(ex::Kind::PoissonLsq);
  const auto r = ex::run(c);
  ASSERT_TRUE(r.summary.l2_error.has_value());
  EXPECT_LT(*r.summary.l2_error, 0.5);
  EXPECT_FALSE(ex::run(small(ex::Kind::Burgers)).summary.l2_error.has_value());
  EXPECT_TRUE(ex::run(small(ex::Kind::AllenCahn)).summary.y0.has_value());
}

TEST(Run, RerunIsByteIdentical) {
  for (auto k : {ex::Kind::Regression, ex::Kind::Heat, ex::Kind::AllenCahn}) {
    std::string h[2];
    for (int rep = 0; rep < 2; ++rep) {
      auto c = small(k);
      c.out_dir = fresh_dir("det" + std::to_string(rep)).string();
      ASSERT_EQ(ex::run(c).status, ex::kOk);
      h[rep] = slurp(fs::path(c.out_dir) / "history.csv");
    }
    EXPECT_EQ(h[0], h[1]) << ex::kind_name(k);
  }
}

TEST(Run, RecordTimeFillsColumn) {
  auto c = small(ex::Kind::Heat);
  c.record_time = true;
  c.out_dir = fresh_dir("timed").string();
  ASSERT_EQ(ex::run(c).status, ex::kOk);
  std::ifstream in(fs::path(c.out_dir) / "history.csv");
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  EXPECT_NE(line.back(), ',');
}

TEST(Run, MissingMnistIsDataError) {
  auto c = ex::defaults(ex::Kind::Mnist);
  c.seed = 1;
  c.data_dir = fresh_dir("no_data").string();
  c.out_dir = fresh_dir("mnist_missing").string();
  const auto r = ex::run(c);
  EXPECT_EQ(r.status, ex::kDataMissing);
  EXPECT_NE(r.message.find("train-images-idx3-ubyte"), std::string::npos);
  EXPECT_NE(r.message.find("XNET_DATA_DIR"), std::string::npos);
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / "error.txt"));
}

TEST(Run, NumericAbortKeepsPartialHistory) {
  auto c = small(ex::Kind::Heat, Activation::Relu);
  c.epochs = 50;
  c.lr = 1e300;
  c.out_dir = fresh_dir("abort").string();
  const auto r = ex::run(c);
  ASSERT_EQ(r.status, ex::kNumericAbort);
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / "error.txt"));
  std::ifstream in(fs::path(c.out_dir) / "history.csv");
  const auto lines = std::count(std::istreambuf_iterator<char>(in), {}, '\n');
  EXPECT_EQ(lines, static_cast<long>(r.history.size()) + 1);
}

TEST(Compare, RanksAndFlagsWinner) {
  std::vector<ex::ExperimentConfig> cfgs{small(ex::Kind::Regression, Activation::Relu),
                                         small(ex::Kind::Regression, Activation::Cauchy),
                                         small(ex::Kind::Regression, Activation::Tanh)};
  const auto dir = fresh_dir("compare");
  const auto cmp = ex::compare(cfgs, dir.string());
  ASSERT_EQ(cmp.status, ex::kOk);
  ASSERT_EQ(cmp.ranking.size(), 3u);
  EXPECT_TRUE(cmp.ranking.front().winner);
  EXPECT_FALSE(cmp.ranking[1].winner || cmp.ranking[2].winner);
  for (std::size_t i = 1; i < cmp.ranking.size(); ++i) {
    EXPECT_LE(*cmp.ranking[i - 1].val_loss, *cmp.ranking[i].val_loss);
  }
  for (auto a : {"relu", "cauchy", "tanh"}) EXPECT_TRUE(fs::exists(dir / a / "history.csv"));
  std::ifstream in(dir / "summary.csv");
  EXPECT_EQ(std::count(std::istreambuf_iterator<char>(in), {}, '\n'), 4);
}

TEST(Compare, IdenticalConfigsGiveIdenticalRows) {
  const auto cmp = ex::compare({small(ex::Kind::Heat), small(ex::Kind::Heat)}, "");
  ASSERT_EQ(cmp.runs.size(), 2u);
  EXPECT_EQ(cmp.runs[0].summary.train_loss, cmp.runs[1].summary.train_loss);
}

TEST(Compare, RejectsNonComparable) {
  auto a = small(ex::Kind::Regression);
  auto b = small(ex::Kind::Regression, Activation::Relu);
  b.epochs = 5;
  EXPECT_THROW(ex::compare({a, b}, ""), std::invalid_argument);
  EXPECT_THROW(ex::compare({a}, ""), std::invalid_argument);
}
