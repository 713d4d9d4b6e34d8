#pragma once

#include "xnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace xnet::metrics {

struct ClassificationReport {
  double accuracy = 0.0;
  double f1 = 0.0;   // macro
  double auc = 0.0;  // macro one-vs-rest over classes with both labels present
  int auc_classes = 0;
  std::vector<int> auc_excluded;  // classes absent from (or filling) the labels
};

/// Area under the ROC curve of `scores` for the positives in `positive`,
/// with tied scores sharing their mid-rank. NaN if either class is empty.
inline double roc_auc(const std::vector<double>& scores, const std::vector<char>& positive) {
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  double n_pos = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) {
      if (positive[order[k]]) {
        rank_sum += mid;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) return std::nan("");
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

inline ClassificationReport classification_metrics(const Tensor& scores, const std::vector<int>& labels) {
  const Index n = scores.rows();
  const Index k = scores.cols();
  if (n < 1) throw std::invalid_argument("classification_metrics: no rows");
  if (static_cast<Index>(labels.size()) != n) throw ShapeError("classification_metrics: one label per row expected");
  if (!scores.allFinite()) throw NonFiniteError("classification_metrics: non-finite scores");
  for (int l : labels)
    if (l < 0 || l >= k) throw std::invalid_argument("classification_metrics: label out of range");

  std::vector<long> tp(static_cast<std::size_t>(k), 0), fp(tp), fn(tp);
  long correct = 0;
  for (Index i = 0; i < n; ++i) {
    Index pred = 0;
    scores.row(i).maxCoeff(&pred);
    const auto y = static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
    const auto p = static_cast<std::size_t>(pred);
    if (p == y) {
      ++correct;
      ++tp[y];
    } else {
      ++fp[p];
      ++fn[y];
    }
  }
  ClassificationReport r;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
    const long denom = 2 * tp[c] + fp[c] + fn[c];
    f1_sum += denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  r.f1 = f1_sum / static_cast<double>(k);

  double auc_sum = 0.0;
  std::vector<double> col(static_cast<std::size_t>(n));
  std::vector<char> pos(static_cast<std::size_t>(n));
  for (Index c = 0; c < k; ++c) {
    for (Index i = 0; i < n; ++i) {
      col[static_cast<std::size_t>(i)] = scores(i, c);
      pos[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == c;
    }
    const double a = roc_auc(col, pos);
    if (std::isnan(a)) {
      r.auc_excluded.push_back(static_cast<int>(c));
      continue;
    }
    auc_sum += a;
    ++r.auc_classes;
  }
  r.auc = r.auc_classes > 0 ? auc_sum / r.auc_classes : std::nan("");
  return r;
}

inline double generalization_error(double train_acc, double val_acc) {
  if (train_acc < 0.0 || train_acc > 1.0 || val_acc < 0.0 || val_acc > 1.0) {
    throw std::invalid_argument("generalization_error: accuracies must lie in [0, 1]");
  }
  return train_acc - val_acc;
}

struct OrderEstimate {
  double p = 0.0;
  bool reduced = false;  // the 1/N term exceeded the MSE and was dropped
};

/// Solves mse = 1/N + h^-p for p, or mse = h^-p when 1/N >= mse.
inline OrderEstimate estimate_order(double mse, double n_samples, double hidden) {
  if (!(mse > 0.0)) throw std::invalid_argument("estimate_order: mse must be positive");
  if (!(hidden >= 2.0)) throw std::invalid_argument("estimate_order: hidden must be >= 2");
  if (!(n_samples > 0.0)) throw std::invalid_argument("estimate_order: sample count must be positive");
  const double rest = mse - 1.0 / n_samples;
  if (rest > 0.0) return {-std::log(rest) / std::log(hidden), false};
  return {-std::log(mse) / std::log(hidden), true};
}

}  // namespace xnet::metrics
