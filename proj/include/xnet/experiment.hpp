#pragma once

// Seeded experiment runs writing history.csv, timing.csv, summary.csv and
// config.resolved into an output directory.

#include "xnet/cauchynet.hpp"
#include "xnet/data.hpp"
#include "xnet/metrics.hpp"
#include "xnet/nn.hpp"
#include "xnet/optim.hpp"
#include "xnet/pde.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace xnet::experiment {

/// Keeps large freed blocks on the heap instead of returning them to the OS,
/// so per-epoch temporaries do not page-fault on every allocation. Call once
/// at process start; a no-op off glibc.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

enum class Kind : std::uint8_t { Regression, Mnist, Heat, PoissonLsq, PoissonPinn, Burgers, AllenCahn, ActivationBench };

inline constexpr std::array<std::pair<std::string_view, Kind>, 8> kKindNames{{
    {"regression", Kind::Regression},
    {"mnist", Kind::Mnist},
    {"heat", Kind::Heat},
    {"poisson-lsq", Kind::PoissonLsq},
    {"poisson-pinn", Kind::PoissonPinn},
    {"burgers", Kind::Burgers},
    {"allen-cahn", Kind::AllenCahn},
    {"activation-bench", Kind::ActivationBench},
}};

inline std::string_view kind_name(Kind k) {
  for (auto [name, kind] : kKindNames)
    if (kind == k) return name;
  return "?";
}

inline Kind parse_kind(std::string_view s) {
  for (auto [name, kind] : kKindNames)
    if (name == s) return kind;
  throw std::invalid_argument("unknown experiment '" + std::string(s) + "'");
}

inline bool is_pde(Kind k) {
  return k == Kind::Heat || k == Kind::PoissonLsq || k == Kind::PoissonPinn || k == Kind::Burgers ||
         k == Kind::AllenCahn;
}

/// Exit statuses of the command-line runner.
enum ExitCode : int { kOk = 0, kUsage = 1, kDataMissing = 2, kNumericAbort = 3 };

class DataMissing : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  Kind kind = Kind::Regression;
  nn::Activation activation = nn::Activation::Cauchy;
  std::vector<Index> hidden;                  // hidden widths; input/output follow from the task
  std::vector<std::pair<int, double>> schedule;  // empty: constant lr
  double lr = 1e-3;
  int epochs = 0;
  Index batch = 0;  // 0: full batch
  std::optional<std::uint64_t> seed;
  std::string data_dir;
  std::string out_dir;
  bool record_time = false;

  // Regression
  Index samples = 2500;
  double noise = 0.0;
  // PINN collocation
  Index interior = 0;
  Index boundary = 0;
  Index initial = 0;
  // Kernel least squares
  int observers = 400;
  double ellipse_a = 0.75;
  double ellipse_b = 1.0;
  double ridge = 0.0;
  Index grid = 100;
  // BSDE
  int dim = 100;
  int time_steps = 20;

  [[nodiscard]] optim::LrSchedule lr_schedule() const {
    return schedule.empty() ? optim::LrSchedule::constant(lr) : optim::LrSchedule(schedule);
  }

  void validate() const {
    if (!seed) throw std::invalid_argument("a seed is required");
    if (!(lr > 0.0)) throw std::invalid_argument("learning rate must be positive");
    (void)lr_schedule();
    if (kind != Kind::PoissonLsq && epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    for (Index h : hidden)
      if (h < 1) throw std::invalid_argument("layer widths must be positive");
    if (batch < 0 || samples < 1 || noise < 0.0) throw std::invalid_argument("batch, samples and noise must be valid");
    if (kind == Kind::PoissonLsq) {
      const auto side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(observers))));
      if (observers < 1 || side * side != observers) {
        throw std::invalid_argument("poisson-lsq observers must be a perfect square (one ellipse per coordinate)");
      }
      if (grid < 2) throw std::invalid_argument("grid needs at least 2 points per axis");
    }
  }
};

/// Paper settings for each experiment; activation and seed are left to the caller.
inline ExperimentConfig defaults(Kind kind) {
  ExperimentConfig c;
  c.kind = kind;
  switch (kind) {
    case Kind::Regression:
    case Kind::ActivationBench:
      c.hidden = {400};
      c.epochs = 1000;
      c.lr = 1e-3;
      break;
    case Kind::Mnist:
      c.hidden = {100};
      c.epochs = 20;
      c.batch = 64;
      c.lr = 1e-3;
      break;
    case Kind::Heat:
      c.hidden = {20, 20, 20};
      c.epochs = 20000;
      c.interior = 1000;
      c.boundary = 200;
      c.initial = 200;
      break;
    case Kind::PoissonLsq:
      c.interior = 1000;
      c.boundary = 1000;
      break;
    case Kind::PoissonPinn:
      c.hidden = {200};
      c.epochs = 8000;
      c.schedule = {{0, 1e-3}, {7000, 1e-4}};
      c.interior = 1000;
      c.boundary = 1000;
      break;
    case Kind::Burgers:
      c.hidden = {20, 20, 20};
      c.epochs = 1000;
      c.interior = 2000;
      c.boundary = 100;
      c.initial = 100;
      break;
    case Kind::AllenCahn:
      c.hidden = {110};
      c.epochs = 2000;
      c.batch = 64;
      c.lr = 5e-3;
      break;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Records

inline constexpr std::string_view kMetricHeader = "epoch,train_loss,train_acc,val_loss,val_acc,f1,auc,gen_error,time_s";
inline constexpr std::string_view kLossHeader = "epoch,loss,lr,time_s";
inline constexpr std::string_view kSummaryHeader =
    "activation,epochs,train_loss,train_acc,val_loss,val_acc,f1,auc,gen_error,l2_error,y0,time_s,winner";

/// A history row; unset optionals print as empty cells.
struct Row {
  int epoch = 0;
  std::optional<double> train_loss, train_acc, val_loss, val_acc, f1, auc, gen_error;
  std::optional<double> loss, lr;
  double time_s = 0.0;
};

struct Summary {
  std::string activation;
  int epochs = 0;
  std::optional<double> train_loss, train_acc, val_loss, val_acc, f1, auc, gen_error, l2_error, y0;
  double time_s = 0.0;
  bool winner = false;
};

struct RunResult {
  int status = kOk;
  std::string message;
  std::vector<Row> history;
  Summary summary;
};

namespace detail {

inline std::string cell(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os << std::setprecision(std::numeric_limits<double>::max_digits10) << *v;
  return os.str();
}

inline std::string cell(double v) { return cell(std::optional<double>(v)); }

/// Streams history rows to disk as they arrive so an abort leaves them behind.
class HistoryWriter {
 public:
  HistoryWriter(const std::filesystem::path& dir, bool pde, bool record_time)
      : pde_(pde), record_time_(record_time), history_(dir / "history.csv"), timing_(dir / "timing.csv") {
    if (!history_ || !timing_) throw std::runtime_error("cannot write into " + dir.string());
    history_ << (pde ? kLossHeader : kMetricHeader) << '\n';
    timing_ << "epoch,time_s\n";
  }

  void write(const Row& r) {
    const std::string t = record_time_ ? cell(r.time_s) : "";
    if (pde_) {
      history_ << r.epoch << ',' << cell(r.loss) << ',' << cell(r.lr) << ',' << t << '\n';
    } else {
      history_ << r.epoch << ',' << cell(r.train_loss) << ',' << cell(r.train_acc) << ',' << cell(r.val_loss) << ','
               << cell(r.val_acc) << ',' << cell(r.f1) << ',' << cell(r.auc) << ',' << cell(r.gen_error) << ',' << t
               << '\n';
    }
    timing_ << r.epoch << ',' << cell(r.time_s) << '\n';
    history_.flush();
  }

 private:
  bool pde_;
  bool record_time_;
  std::ofstream history_;
  std::ofstream timing_;
};

inline void write_summary(const std::filesystem::path& file, const std::vector<Summary>& rows) {
  std::ofstream os(file);
  os << kSummaryHeader << '\n';
  for (const auto& s : rows) {
    os << s.activation << ',' << s.epochs << ',' << cell(s.train_loss) << ',' << cell(s.train_acc) << ','
       << cell(s.val_loss) << ',' << cell(s.val_acc) << ',' << cell(s.f1) << ',' << cell(s.auc) << ','
       << cell(s.gen_error) << ',' << cell(s.l2_error) << ',' << cell(s.y0) << ',' << cell(s.time_s) << ','
       << (s.winner ? "yes" : "") << '\n';
  }
}

inline std::string join_dims(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Every effective setting as key = value lines, sorted by key.
inline std::string resolved_config(const ExperimentConfig& c) {
  std::map<std::string, std::string> kv;
  kv["experiment"] = std::string(kind_name(c.kind));
  kv["activation"] = std::string(nn::activation_name(c.activation));
  kv["hidden"] = detail::join_dims(c.hidden);
  kv["lr"] = detail::cell(c.lr);
  std::string sched;
  for (auto [e, r] : c.schedule) sched += (sched.empty() ? "" : ";") + std::to_string(e) + ":" + detail::cell(r);
  kv["schedule"] = sched;
  kv["epochs"] = std::to_string(c.epochs);
  kv["batch"] = std::to_string(c.batch);
  kv["seed"] = c.seed ? std::to_string(*c.seed) : "";
  kv["data_dir"] = c.data_dir;
  kv["out_dir"] = c.out_dir;
  kv["record_time"] = c.record_time ? "true" : "false";
  kv["samples"] = std::to_string(c.samples);
  kv["noise"] = detail::cell(c.noise);
  kv["interior"] = std::to_string(c.interior);
  kv["boundary"] = std::to_string(c.boundary);
  kv["initial"] = std::to_string(c.initial);
  kv["observers"] = std::to_string(c.observers);
  kv["ellipse_a"] = detail::cell(c.ellipse_a);
  kv["ellipse_b"] = detail::cell(c.ellipse_b);
  kv["ridge"] = detail::cell(c.ridge);
  kv["grid"] = std::to_string(c.grid);
  kv["dim"] = std::to_string(c.dim);
  kv["time_steps"] = std::to_string(c.time_steps);
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Runners. Each emits rows through `emit` and returns the summary.

using Emit = std::function<void(const Row&)>;

namespace detail {

inline double mse(const Tensor& pred, const std::vector<double>& y) {
  double s = 0.0;
  for (Index i = 0; i < pred.rows(); ++i) {
    const double e = pred(i, 0) - y[static_cast<std::size_t>(i)];
    s += e * e;
  }
  return s / static_cast<double>(pred.rows());
}

inline Tensor column_of(const std::vector<double>& v) {
  return Eigen::Map<const Tensor>(v.data(), static_cast<Index>(v.size()), 1);
}

inline Summary run_regression(const ExperimentConfig& c, const Emit& emit) {
  const auto seed = *c.seed;
  const auto train = data::synth_regression(c.samples, c.noise, pde::derive_seed(seed, 1));
  const auto val = data::synth_regression(c.samples, c.noise, pde::derive_seed(seed, 2));
  std::vector<Index> dims{2};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(1);
  auto net = nn::init_mlp(dims, c.activation, seed);
  const auto plan = data::split_batches(train, 0.0, c.batch > 0 ? c.batch : train.size(), seed);

  autograd::Graph g;
  const Index first = std::min<Index>(train.size(), c.batch > 0 ? c.batch : train.size());
  auto x = g.input(train.features.topRows(first));
  auto y = g.input(column_of(train.targets).topRows(first));
  const auto bound = nn::mlp_forward(g, net, x);
  auto loss = autograd::mean(autograd::square(bound.output - y));
  const auto params = net.parameters();
  optim::Adam adam(c.lr);
  const auto sched = c.lr_schedule();
  const Tensor y_all = column_of(train.targets);
  Summary s;
  const auto t0 = std::chrono::steady_clock::now();
  for (int e = 0; e < c.epochs; ++e) {
    adam.set_lr(sched.rate(e));
    double sum = 0.0;
    for (const auto& b : plan.epoch_batches(e)) {
      g.bind(x, data::gather_rows(train.features, b));
      g.bind(y, data::gather_rows(y_all, b));
      nn::sync_parameters(g, bound, net);
      g.evaluate(loss);
      sum += loss.item() * static_cast<double>(b.size());
      const auto grads = g.backward(loss, bound.params);
      adam.step(params, grads.grads);
      net.clamp_cauchy();
    }
    Row r;
    r.epoch = e;
    r.train_loss = sum / static_cast<double>(plan.train().size());
    r.val_loss = mse(nn::predict(net, val.features), val.targets);
    r.time_s = seconds_since(t0);
    emit(r);
    s.val_loss = r.val_loss;
    s.time_s = r.time_s;
  }
  s.train_loss = mse(nn::predict(net, train.features), train.targets);
  return s;
}

inline Tensor one_hot(const std::vector<int>& labels, const std::vector<Index>& idx, Index classes) {
  Tensor t = Tensor::Zero(static_cast<Index>(idx.size()), classes);
  for (std::size_t i = 0; i < idx.size(); ++i) t(static_cast<Index>(i), labels[static_cast<std::size_t>(idx[i])]) = 1.0;
  return t;
}

/// Mean softmax cross-entropy of raw scores against integer labels.
inline double cross_entropy(const Tensor& scores, const std::vector<int>& labels) {
  double s = 0.0;
  for (Index i = 0; i < scores.rows(); ++i) {
    const double m = scores.row(i).maxCoeff();
    const double lse = m + std::log((scores.row(i).array() - m).exp().sum());
    s += lse - scores(i, labels[static_cast<std::size_t>(i)]);
  }
  return s / static_cast<double>(scores.rows());
}

inline Summary run_mnist(const ExperimentConfig& c, const Emit& emit) {
  data::MnistFiles files;
  try {
    files = data::locate_mnist((std::filesystem::path(c.data_dir) / "mnist").string());
  } catch (const std::runtime_error& e) {
    throw DataMissing(std::string(e.what()) +
                      " (place the four IDX files under <data_dir>/mnist or set XNET_DATA_DIR)");
  }
  const auto train = data::load_mnist_idx(files.train_images, files.train_labels);
  const auto val = data::load_mnist_idx(files.test_images, files.test_labels);
  const auto seed = *c.seed;
  constexpr Index classes = 10;
  std::vector<Index> dims{train.features.cols()};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(classes);
  auto net = nn::init_mlp(dims, c.activation, seed);
  const auto plan = data::split_batches(train, 0.0, c.batch > 0 ? c.batch : 64, seed);

  autograd::Graph g;
  const std::vector<Index> first(plan.train().begin(), plan.train().begin() + std::min<std::size_t>(
                                                                                 plan.train().size(), 64));
  auto x = g.input(data::gather_rows(train.features, first));
  auto t = g.input(one_hot(train.labels, first, classes));
  const auto bound = nn::mlp_forward(g, net, x);
  auto loss = autograd::mean(g.logsumexp_rows(bound.output) - g.row_sum(bound.output * t));
  const auto params = net.parameters();
  optim::Adam adam(c.lr);
  const auto sched = c.lr_schedule();
  Summary s;
  double train_time = 0.0;
  for (int e = 0; e < c.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    adam.set_lr(sched.rate(e));
    for (const auto& b : plan.epoch_batches(e)) {
      g.bind(x, data::gather_rows(train.features, b));
      g.bind(t, one_hot(train.labels, b, classes));
      nn::sync_parameters(g, bound, net);
      g.evaluate(loss);
      const auto grads = g.backward(loss, bound.params);
      adam.step(params, grads.grads);
      net.clamp_cauchy();
    }
    train_time += seconds_since(t0);
    const Tensor tr_scores = nn::predict(net, train.features);
    const Tensor va_scores = nn::predict(net, val.features);
    const auto tr = metrics::classification_metrics(tr_scores, train.labels);
    const auto va = metrics::classification_metrics(va_scores, val.labels);
    Row r;
    r.epoch = e;
    r.train_loss = cross_entropy(tr_scores, train.labels);
    r.train_acc = tr.accuracy;
    r.val_loss = cross_entropy(va_scores, val.labels);
    r.val_acc = va.accuracy;
    r.f1 = va.f1;
    r.auc = va.auc;
    r.gen_error = metrics::generalization_error(tr.accuracy, va.accuracy);
    r.time_s = train_time;
    emit(r);
    s.train_loss = r.train_loss;
    s.train_acc = r.train_acc;
    s.val_loss = r.val_loss;
    s.val_acc = r.val_acc;
    s.f1 = r.f1;
    s.auc = r.auc;
    s.gen_error = r.gen_error;
    s.time_s = train_time;
  }
  return s;
}

inline Row loss_row(const pde::LossRow& l) {
  Row r;
  r.epoch = l.epoch;
  r.loss = l.loss;
  r.lr = l.lr;
  r.time_s = l.time_s;
  return r;
}

inline Summary run_pinn(const ExperimentConfig& c, const Emit& emit) {
  const auto seed = *c.seed;
  pde::PDEProblem p;
  switch (c.kind) {
    case Kind::Heat: p = pde::heat_problem(); break;
    case Kind::PoissonPinn: p = pde::poisson_problem(); break;
    default: p = pde::burgers_problem(); break;
  }
  const auto col = pde::sample_collocation(p, c.interior, c.boundary, c.initial, seed);
  std::vector<Index> dims{2};
  dims.insert(dims.end(), c.hidden.begin(), c.hidden.end());
  dims.push_back(1);
  auto net = nn::init_mlp(dims, c.activation, seed);
  optim::Adam adam(c.lr);
  const auto hist =
      pde::pinn_train(p, net, adam, c.lr_schedule(), col, c.epochs, [&](const pde::LossRow& l) { emit(loss_row(l)); });
  Summary s;
  s.train_loss = hist.back().loss;
  s.time_s = hist.back().time_s;
  if (p.exact) {
    const Tensor grid = pde::uniform_grid(p.x, p.y, c.grid, c.grid);
    s.l2_error = pde::l2_grid_error(nn::predict(net, grid), pde::sample_field(p.exact, grid));
  }
  return s;
}

inline Summary run_poisson_lsq(const ExperimentConfig& c, const Emit& emit) {
  const auto p = pde::poisson_problem();
  const auto col = pde::sample_collocation(p, c.interior, c.boundary, 0, *c.seed);
  const auto t0 = std::chrono::steady_clock::now();
  const auto obs = cauchynet::place_observers_ellipse(c.observers, c.ellipse_a, c.ellipse_b, 0.5, 2);
  const auto model = cauchynet::poisson_lsq_solve(col.interior, col.source, col.boundary, col.boundary_values, obs,
                                                  c.ridge);
  const Tensor grid = pde::uniform_grid(p.x, p.y, c.grid, c.grid);
  Summary s;
  s.train_loss = model.diagnostics.residual_rms * model.diagnostics.residual_rms;
  s.l2_error = pde::l2_grid_error(cauchynet::kernel_eval(model, grid), pde::sample_field(p.exact, grid));
  s.time_s = seconds_since(t0);
  Row r;
  r.loss = s.train_loss;
  r.lr = 0.0;
  r.time_s = s.time_s;
  emit(r);
  if (!c.out_dir.empty()) {
    std::ofstream os(std::filesystem::path(c.out_dir) / "model.csv");
    cauchynet::write_model_csv(os, model);
  }
  return s;
}

inline Summary run_allen_cahn(const ExperimentConfig& c, const Emit& emit) {
  pde::BSDEConfig b;
  b.dim = c.dim;
  b.time_steps = c.time_steps;
  b.batch = c.batch > 0 ? c.batch : 64;
  b.hidden = c.hidden;
  b.activation = c.activation;
  b.lr = c.lr;
  const auto r = pde::bsde_train(b, c.epochs, *c.seed, [&](const pde::LossRow& l) { emit(loss_row(l)); });
  Summary s;
  s.train_loss = r.history.back().loss;
  s.y0 = r.y0;
  s.time_s = r.history.back().time_s;
  return s;
}

}  // namespace detail

/// Runs one configuration, returning its history and summary. Files are
/// written only when out_dir is set.
inline RunResult run(const ExperimentConfig& cfg) {
  cfg.validate();
  RunResult res;
  std::optional<detail::HistoryWriter> writer;
  if (!cfg.out_dir.empty()) {
    std::filesystem::create_directories(cfg.out_dir);
    std::ofstream(std::filesystem::path(cfg.out_dir) / "config.resolved") << resolved_config(cfg);
    writer.emplace(cfg.out_dir, is_pde(cfg.kind), cfg.record_time);
  }
  const Emit emit = [&](const Row& r) {
    res.history.push_back(r);
    if (writer) writer->write(r);
  };
  try {
    switch (cfg.kind) {
      case Kind::Regression:
      case Kind::ActivationBench: res.summary = detail::run_regression(cfg, emit); break;
      case Kind::Mnist: res.summary = detail::run_mnist(cfg, emit); break;
      case Kind::Heat:
      case Kind::PoissonPinn:
      case Kind::Burgers: res.summary = detail::run_pinn(cfg, emit); break;
      case Kind::PoissonLsq: res.summary = detail::run_poisson_lsq(cfg, emit); break;
      case Kind::AllenCahn: res.summary = detail::run_allen_cahn(cfg, emit); break;
    }
  } catch (const DataMissing& e) {
    res.status = kDataMissing;
    res.message = e.what();
  } catch (const data::IdxError& e) {
    res.status = kDataMissing;
    res.message = e.what();
  } catch (const pde::TrainingAborted& e) {
    res.status = kNumericAbort;
    res.message = e.what();
  } catch (const NonFiniteError& e) {
    res.status = kNumericAbort;
    res.message = e.what();
  }
  res.summary.activation = std::string(nn::activation_name(cfg.activation));
  res.summary.epochs = static_cast<int>(res.history.size());
  if (!cfg.out_dir.empty()) {
    if (res.status != kOk) std::ofstream(std::filesystem::path(cfg.out_dir) / "error.txt") << res.message << '\n';
    detail::write_summary(std::filesystem::path(cfg.out_dir) / "summary.csv", {res.summary});
  }
  return res;
}

/// Ranking key of a summary: higher is better.
inline double score(Kind kind, const Summary& s) {
  auto neg = [](const std::optional<double>& v) { return v ? -*v : -std::numeric_limits<double>::infinity(); };
  switch (kind) {
    case Kind::Mnist: return s.val_acc.value_or(-1.0);
    case Kind::Regression:
    case Kind::ActivationBench: return neg(s.val_loss);
    case Kind::PoissonLsq: return neg(s.l2_error);
    default: return neg(s.train_loss);
  }
}

struct Comparison {
  int status = kOk;
  std::vector<RunResult> runs;     // in input order
  std::vector<Summary> ranking;    // best first; ranking.front().winner is set
};

/// One run per config (each in <out_dir>/<activation>), then a merged,
/// ranked summary.csv in out_dir. Configs may differ only in activation.
inline Comparison compare(std::vector<ExperimentConfig> cfgs, const std::string& out_dir) {
  if (cfgs.size() < 2) throw std::invalid_argument("compare needs at least two configurations");
  for (const auto& c : cfgs) {
    auto a = c;
    auto b = cfgs.front();
    a.activation = b.activation;
    a.out_dir = b.out_dir;
    if (resolved_config(a) != resolved_config(b)) {
      throw std::invalid_argument("compare: configurations differ in more than the activation");
    }
  }
  Comparison out;
  for (auto& c : cfgs) {
    if (!out_dir.empty()) c.out_dir = (std::filesystem::path(out_dir) / nn::activation_name(c.activation)).string();
    out.runs.push_back(run(c));
    if (out.runs.back().status != kOk) {
      out.status = out.runs.back().status;
      return out;
    }
    out.ranking.push_back(out.runs.back().summary);
  }
  const Kind kind = cfgs.front().kind;
  std::stable_sort(out.ranking.begin(), out.ranking.end(),
                   [&](const Summary& a, const Summary& b) { return score(kind, a) > score(kind, b); });
  out.ranking.front().winner = true;
  if (!out_dir.empty()) detail::write_summary(std::filesystem::path(out_dir) / "summary.csv", out.ranking);
  return out;
}

/// Console table of summaries.
inline void print_summary(std::ostream& os, const std::vector<Summary>& rows) {
  os << std::left << std::setw(12) << "activation" << std::setw(8) << "epochs" << std::setw(14) << "train_loss"
     << std::setw(10) << "train_acc" << std::setw(14) << "val_loss" << std::setw(10) << "val_acc" << std::setw(9)
     << "f1" << std::setw(9) << "auc" << std::setw(10) << "gen_err" << std::setw(12) << "l2_error" << std::setw(10)
     << "y0" << std::setw(10) << "time_s" << '\n';
  auto f = [](const std::optional<double>& v, int prec) {
    if (!v) return std::string("-");
    std::ostringstream s;
    s << std::setprecision(prec) << *v;
    return s.str();
  };
  for (const auto& r : rows) {
    os << std::left << std::setw(12) << r.activation << std::setw(8) << r.epochs << std::setw(14) << f(r.train_loss, 6)
       << std::setw(10) << f(r.train_acc, 4) << std::setw(14) << f(r.val_loss, 6) << std::setw(10) << f(r.val_acc, 4)
       << std::setw(9) << f(r.f1, 4) << std::setw(9) << f(r.auc, 4) << std::setw(10) << f(r.gen_error, 4)
       << std::setw(12) << f(r.l2_error, 5) << std::setw(10) << f(r.y0, 5) << std::setw(10) << f(r.time_s, 4)
       << (r.winner ? " *" : "") << '\n';
  }
}

}  // namespace xnet::experiment
