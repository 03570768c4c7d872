#pragma once

// Synthetic credit-style benchmark: correlated raw features on different
// scales, a ground-truth logit that decreases in every feature, and an
// intercept tuned so a fixed share of rows is positive.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kinject/data.hpp"
#include "kinject/random.hpp"

namespace kinject::testing {

struct SyntheticOptions {
  std::size_t rows = 2000;
  std::size_t features = 4;
  double positive_rate = 0.07;
  /// Correlation between any two latent features.
  double correlation = 0.3;
  /// Multiplies the ground-truth effects; larger means easier ranking.
  double signal = 1.0;
  /// Raw feature scales cycle through 0.05, 0.5 and 5; otherwise all 1.
  bool mixed_scales = true;
  std::uint64_t seed = 1;
};

/// Increasing, bounded-slope shape for each feature's (negated) effect.
inline double synthetic_shape(double u, std::size_t j) {
  const double a = 0.6 + 0.3 * static_cast<double>(j % 3);
  return std::tanh(1.5 * u) + a * u;
}

struct SyntheticTruth {
  double intercept = 0.0;
  std::vector<double> weight;
  std::vector<double> offset;  // raw = offset + scale * latent
  std::vector<double> scale;

  double logit(const Eigen::RowVectorXd& raw) const {
    double s = intercept;
    for (std::size_t j = 0; j < weight.size(); ++j) {
      const double u = (raw(static_cast<Eigen::Index>(j)) - offset[j]) / scale[j];
      s -= weight[j] * synthetic_shape(u, j);
    }
    return s;
  }
};

struct SyntheticData {
  Dataset data;
  SyntheticTruth truth;
};

inline SyntheticData monotone_benchmark(const SyntheticOptions& opt) {
  Rng rng(derive_seed(opt.seed, {0x5717}));
  const std::size_t n = opt.rows, p = opt.features;
  SyntheticData out;
  SyntheticTruth& t = out.truth;
  for (std::size_t j = 0; j < p; ++j) {
    t.weight.push_back(opt.signal * (0.5 + 0.5 * static_cast<double>(j % 2)));
    t.offset.push_back(0.05 * static_cast<double>(j));
    t.scale.push_back(opt.mixed_scales ? std::pow(10.0, static_cast<double>(j % 3) - 1.0) * 0.5 : 1.0);
  }
  Dataset& d = out.data;
  d.label_name = "class";
  for (std::size_t j = 0; j < p; ++j) d.feature_names.push_back("Attr" + std::to_string(j + 1));
  d.raw.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  const double shared = std::sqrt(opt.correlation), own = std::sqrt(1.0 - opt.correlation);
  for (std::size_t i = 0; i < n; ++i) {
    const double common = normal01(rng);
    for (std::size_t j = 0; j < p; ++j)
      d.raw(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          t.offset[j] + t.scale[j] * (shared * common + own * normal01(rng));
  }
  // Intercept so the mean ground-truth probability equals the target rate.
  std::vector<double> base(n);
  for (std::size_t i = 0; i < n; ++i) base[i] = t.logit(d.raw.row(static_cast<Eigen::Index>(i)));
  double lo = -30.0, hi = 30.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (double b : base) mean += 1.0 / (1.0 + std::exp(-(b + mid)));
    (mean / static_cast<double>(n) < opt.positive_rate ? lo : hi) = mid;
  }
  t.intercept = 0.5 * (lo + hi);
  for (std::size_t i = 0; i < n; ++i) {
    const double prob = 1.0 / (1.0 + std::exp(-(base[i] + t.intercept)));
    d.labels.push_back(uniform01(rng) < prob ? 1 : 0);
  }
  return out;
}

}  // namespace kinject::testing
