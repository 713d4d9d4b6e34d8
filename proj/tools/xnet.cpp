// xnet: seeded experiment runner.
//
//   xnet regression --activation cauchy --hidden 400 --epochs 1000 --seed 1
//   xnet mnist --dims 100 --activation cauchy,sigmoid --seed 1 --out runs/mnist
//   xnet poisson-pinn --config poisson.ini --seed 3
//
// A comma-separated --activation list runs every activation on otherwise
// identical settings and writes a merged, ranked summary.csv.

#include "xnet/experiment.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace ex = xnet::experiment;

namespace {

struct Flags {
  std::vector<std::string> activations;
  std::optional<std::vector<xnet::Index>> hidden;
  std::optional<double> lr;
  std::optional<std::string> schedule;
  std::optional<int> epochs;
  std::optional<xnet::Index> batch;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> data_dir;
  std::optional<std::string> out_dir;
  bool record_time = false;
  std::optional<xnet::Index> samples, interior, boundary, initial, grid;
  std::optional<double> noise, ellipse_a, ellipse_b, ridge;
  std::optional<int> observers, dim, time_steps;
};

// "0:1e-3,7000:1e-4"
std::vector<std::pair<int, double>> parse_schedule(const std::string& text) {
  std::vector<std::pair<int, double>> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto end = std::min(text.find(',', pos), text.size());
    const std::string item = text.substr(pos, end - pos);
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw std::invalid_argument("schedule entries are epoch:rate, got '" + item + "'");
    out.emplace_back(std::stoi(item.substr(0, colon)), std::stod(item.substr(colon + 1)));
    pos = end + 1;
  }
  return out;
}

template <class T>
void apply(const std::optional<T>& v, T& dst) {
  if (v) dst = *v;
}

ex::ExperimentConfig resolve(ex::Kind kind, const Flags& f) {
  auto c = ex::defaults(kind);
  apply(f.hidden, c.hidden);
  if (f.lr) {
    c.lr = *f.lr;
    c.schedule.clear();
  }
  if (f.schedule) c.schedule = parse_schedule(*f.schedule);
  apply(f.epochs, c.epochs);
  apply(f.batch, c.batch);
  c.seed = f.seed;
  if (f.data_dir) {
    c.data_dir = *f.data_dir;
  } else if (const char* env = std::getenv("XNET_DATA_DIR")) {
    c.data_dir = env;
  } else {
    c.data_dir = "data";
  }
  c.out_dir = f.out_dir.value_or("runs/" + std::string(ex::kind_name(kind)));
  c.record_time = f.record_time;
  apply(f.samples, c.samples);
  apply(f.noise, c.noise);
  apply(f.interior, c.interior);
  apply(f.boundary, c.boundary);
  apply(f.initial, c.initial);
  apply(f.observers, c.observers);
  apply(f.ellipse_a, c.ellipse_a);
  apply(f.ellipse_b, c.ellipse_b);
  apply(f.ridge, c.ridge);
  apply(f.grid, c.grid);
  apply(f.dim, c.dim);
  apply(f.time_steps, c.time_steps);
  return c;
}

std::vector<xnet::nn::Activation> activation_list(ex::Kind kind, const std::vector<std::string>& names) {
  std::vector<xnet::nn::Activation> out;
  for (const auto& n : names) out.push_back(xnet::nn::parse_activation(n));
  if (out.empty()) {
    if (kind == ex::Kind::ActivationBench) {
      out.assign(xnet::nn::kBenchmarkActivations.begin(), xnet::nn::kBenchmarkActivations.end());
    } else {
      out.push_back(xnet::nn::Activation::Cauchy);
    }
  }
  return out;
}

int report_failure(int status, const std::string& message, const std::string& out_dir) {
  std::cerr << "xnet: " << message << '\n';
  if (status == ex::kNumericAbort) std::cerr << "partial history and error.txt left in " << out_dir << '\n';
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  xnet::experiment::tune_allocator();
  CLI::App app{"Seeded activation-function experiments with CSV output"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Flat key = value file; command-line flags take precedence");

  Flags f;
  app.add_option("--activation", f.activations, "Activation or comma-separated list (compare mode)")->delimiter(',');
  app.add_option("--hidden,--dims", f.hidden, "Hidden layer widths, e.g. 128,64")->delimiter(',');
  app.add_option("--lr", f.lr, "Constant learning rate");
  app.add_option("--schedule", f.schedule, "Piecewise rates epoch:rate,..., e.g. 0:1e-3,7000:1e-4");
  app.add_option("--epochs,--steps", f.epochs, "Training epochs (BSDE: steps)");
  app.add_option("--batch", f.batch, "Batch size, 0 for full batch");
  app.add_option("--seed", f.seed, "Random seed (required)");
  app.add_option("--data-dir", f.data_dir, "Directory holding mnist/ (default: $XNET_DATA_DIR)");
  app.add_option("--out", f.out_dir, "Output directory (default: runs/<experiment>)");
  app.add_flag("--record-time", f.record_time, "Fill time_s in history.csv (breaks byte-identical reruns)");
  app.add_option("--samples", f.samples, "Regression training samples");
  app.add_option("--noise", f.noise, "Regression noise standard deviation");
  app.add_option("--interior", f.interior, "Interior collocation points");
  app.add_option("--boundary", f.boundary, "Boundary collocation points");
  app.add_option("--initial", f.initial, "Initial-condition collocation points");
  app.add_option("--observers", f.observers, "Kernel observers (poisson-lsq)");
  app.add_option("--ellipse-a", f.ellipse_a, "Observer ellipse semi-axis along the real part");
  app.add_option("--ellipse-b", f.ellipse_b, "Observer ellipse semi-axis along the imaginary part");
  app.add_option("--ridge", f.ridge, "Ridge weight for the kernel least squares");
  app.add_option("--grid", f.grid, "Evaluation grid points per axis");
  app.add_option("--dim", f.dim, "BSDE state dimension");
  app.add_option("--time-steps", f.time_steps, "BSDE time steps");

  std::optional<ex::Kind> kind;
  for (auto [name, k] : ex::kKindNames) {
    auto* sub = app.add_subcommand(std::string(name), "Run the " + std::string(name) + " experiment");
    sub->fallthrough();
    sub->callback([&kind, k = k] { kind = k; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ex::kOk : ex::kUsage;
  }

  std::vector<ex::ExperimentConfig> cfgs;
  try {
    const auto acts = activation_list(*kind, f.activations);
    const auto base = resolve(*kind, f);
    for (auto a : acts) {
      auto c = base;
      c.activation = a;
      c.validate();
      cfgs.push_back(std::move(c));
    }
  } catch (const std::exception& e) {
    std::cerr << "xnet: " << e.what() << "\n" << app.help();
    return ex::kUsage;
  }

  try {
    if (cfgs.size() == 1) {
      const auto r = ex::run(cfgs.front());
      if (r.status != ex::kOk) return report_failure(r.status, r.message, cfgs.front().out_dir);
      ex::print_summary(std::cout, {r.summary});
      std::cout << "wrote " << cfgs.front().out_dir << '\n';
      return ex::kOk;
    }
    const std::string out = cfgs.front().out_dir;
    const auto cmp = ex::compare(cfgs, out);
    if (cmp.status != ex::kOk) {
      const auto& last = cmp.runs.back();
      return report_failure(cmp.status, last.message, out + "/" + last.summary.activation);
    }
    ex::print_summary(std::cout, cmp.ranking);
    std::cout << "wrote " << out << '\n';
    return ex::kOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "xnet: " << e.what() << '\n';
    return ex::kUsage;
  }
}
