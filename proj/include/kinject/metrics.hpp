#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "kinject/error.hpp"

namespace kinject {

/// Area under the ROC curve as the normalized Mann-Whitney statistic: the
/// fraction of (positive, negative) pairs ranked correctly, ties worth 1/2.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("auroc: " + std::to_string(scores.size()) + " scores vs " +
                        std::to_string(labels.size()) + " labels");
  const std::size_t n = scores.size();
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1)
      throw ContractError("auroc: labels must be 0 or 1");
    if (!std::isfinite(scores[i])) throw NumericError("auroc: non-finite score");
    positives += static_cast<std::size_t>(labels[i]);
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0)
    throw UndefinedMetricError("auroc is undefined when only one class is present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the mid-rank keeps tie ranks integral.
  double rank_sum2 = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double twice_rank = static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum2 += twice_rank;
    i = j;
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum2 / 2.0 - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

struct MeanAndError {
  double mean = 0.0;
  double standard_error = 0.0;
};

/// Mean and standard error (sample sd / sqrt(B)).
inline MeanAndError mean_and_standard_error(std::span<const double> values) {
  MeanAndError out;
  const double b = static_cast<double>(values.size());
  if (values.empty()) return out;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / b;
  if (values.size() < 2) return out;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.standard_error = std::sqrt(ss / (b - 1.0)) / std::sqrt(b);
  return out;
}

}  // namespace kinject
