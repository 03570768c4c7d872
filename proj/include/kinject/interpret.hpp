#pragma once

// Post-hoc feature-effect estimators: first-order accumulated local effects
// (finite-difference and gradient forms), saliency and integrated gradients.
//
// Estimators are templates over a model concept so they work equally on a
// trained network, on a closed-form test function, or on anything that can
// score a batch of raw rows.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "kinject/error.hpp"
#include "kinject/models.hpp"

namespace kinject {

/// Scores every row of an n x p raw matrix.
template <class M>
concept BatchModel = requires(const M& m, const Eigen::MatrixXd& x) {
  { m.predict(x) } -> std::convertible_to<Eigen::VectorXd>;
};

/// A BatchModel that also returns d(score)/d(row), n x p.
template <class M>
concept DifferentiableModel = BatchModel<M> && requires(const M& m, const Eigen::MatrixXd& x) {
  { m.gradient(x) } -> std::convertible_to<Eigen::MatrixXd>;
};

/// Wraps a pair of callables as a model.
struct FunctionModel {
  std::function<Eigen::VectorXd(const Eigen::MatrixXd&)> score;
  std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)> score_gradient;

  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const { return score(x); }
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& x) const {
    if (!score_gradient) throw ContractError("model has no gradient");
    return score_gradient(x);
  }

  /// Builds from per-row functions.
  static FunctionModel from_rows(std::function<double(const Eigen::RowVectorXd&)> f,
                                 std::function<Eigen::RowVectorXd(const Eigen::RowVectorXd&)> g = {}) {
    FunctionModel m;
    m.score = [f](const Eigen::MatrixXd& x) {
      Eigen::VectorXd out(x.rows());
      for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = f(x.row(i));
      return out;
    };
    if (g)
      m.score_gradient = [g](const Eigen::MatrixXd& x) {
        Eigen::MatrixXd out(x.rows(), x.cols());
        for (Eigen::Index i = 0; i < x.rows(); ++i) out.row(i) = g(x.row(i));
        return out;
      };
    return m;
  }
};

/// A trained network seen through its sigmoid output (ALE default).
struct ProbabilityView {
  const Model& model;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const { return model.probability(x); }
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& x) const { return model.input_gradient(x, true); }
};

/// A trained network seen through its logit (saliency and IG default).
struct LogitView {
  const Model& model;
  Eigen::VectorXd predict(const Eigen::MatrixXd& x) const { return model.logit(x); }
  Eigen::MatrixXd gradient(const Eigen::MatrixXd& x) const { return model.input_gradient(x, false); }
};

// ---------------------------------------------------------------------------
// Accumulated local effects

struct ALECurve {
  std::size_t feature = 0;
  /// z_0 <= ... <= z_K, raw units; z_0 is the feature minimum.
  std::vector<double> boundaries;
  /// Observations per bin (K entries); bin k covers (z_{k-1}, z_k], the first
  /// bin also includes z_0.
  std::vector<std::size_t> counts;
  /// Centered accumulated effect at each boundary (K + 1 entries).
  std::vector<double> effects;
  /// The constant subtracted to center the curve.
  double centering = 0.0;
  /// Number of requested bins dropped because they were empty (tied
  /// quantiles or gaps), each merged into its neighbor.
  std::size_t merged_bins = 0;
  std::size_t requested_bins = 0;

  std::size_t bins() const { return counts.size(); }

  /// Count-weighted mean of the bin-midpoint effects; zero for a centered curve.
  double weighted_mean_effect() const {
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < counts.size(); ++k) {
      s += static_cast<double>(counts[k]) * 0.5 * (effects[k] + effects[k + 1]);
      n += counts[k];
    }
    return n == 0 ? 0.0 : s / static_cast<double>(n);
  }
};

inline constexpr std::size_t kDefaultAleBins = 40;

namespace detail {

struct AleBinning {
  std::vector<double> boundaries;
  std::vector<std::size_t> bin_of;  // per observation, 0-based bin index
  std::vector<std::size_t> counts;
  std::size_t merged = 0;
};

/// Quantile boundaries (order statistics, as in the reference ALE
/// implementation), with empty bins merged away.
inline AleBinning ale_bins(const Eigen::VectorXd& x, std::size_t bins) {
  const std::size_t n = static_cast<std::size_t>(x.size());
  std::vector<double> sorted(x.data(), x.data() + n);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> z{sorted.front()};
  for (std::size_t k = 1; k <= bins; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(bins);
    auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    idx = std::clamp<std::size_t>(idx, 1, n) - 1;
    z.push_back(sorted[idx]);
  }
  AleBinning out;
  // Collapse tied boundaries, then drop boundaries whose bin holds nobody.
  std::vector<double> unique{z.front()};
  for (std::size_t k = 1; k < z.size(); ++k)
    if (z[k] > unique.back()) unique.push_back(z[k]);
  auto count_bins = [&](const std::vector<double>& b) {
    std::vector<std::size_t> c(b.size() - 1, 0);
    for (double v : sorted) {
      auto it = std::lower_bound(b.begin() + 1, b.end(), v);
      const std::size_t k = it == b.end() ? c.size() - 1 : static_cast<std::size_t>(it - b.begin()) - 1;
      ++c[k];
    }
    return c;
  };
  std::vector<std::size_t> c = count_bins(unique);
  std::vector<double> kept{unique.front()};
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (c[k] == 0 && k + 1 < c.size()) continue;  // merge into the next bin
    if (c[k] == 0 && kept.size() > 1) kept.pop_back();  // last bin: merge into previous
    kept.push_back(unique[k + 1]);
  }
  out.boundaries = std::move(kept);
  out.merged = bins - (out.boundaries.size() - 1);
  out.counts.assign(out.boundaries.size() - 1, 0);
  out.bin_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x(static_cast<Eigen::Index>(i));
    auto it = std::lower_bound(out.boundaries.begin() + 1, out.boundaries.end(), v);
    std::size_t k = it == out.boundaries.end()
                        ? out.counts.size() - 1
                        : static_cast<std::size_t>(it - out.boundaries.begin()) - 1;
    out.bin_of[i] = k;
    ++out.counts[k];
  }
  return out;
}

inline void check_ale_input(const Eigen::MatrixXd& x, std::size_t j, std::size_t bins) {
  if (j >= static_cast<std::size_t>(x.cols())) throw ContractError("ALE feature index out of range");
  if (bins < 1) throw ContractError("ALE needs at least one bin");
  if (static_cast<std::size_t>(x.rows()) < bins)
    throw ContractError("ALE needs at least as many observations as bins");
  if (!x.allFinite()) throw ContractError("ALE input must be complete (impute first)");
  const auto col = x.col(static_cast<Eigen::Index>(j));
  if (col.minCoeff() == col.maxCoeff())
    throw DegenerateFeatureError("feature " + std::to_string(j) + " is constant");
}

/// Accumulates per-bin local effects and centers the result.
inline ALECurve finish_curve(std::size_t j, std::size_t bins, AleBinning binning,
                             const std::vector<double>& local_mean) {
  ALECurve c;
  c.feature = j;
  c.requested_bins = bins;
  c.merged_bins = binning.merged;
  c.boundaries = std::move(binning.boundaries);
  c.counts = std::move(binning.counts);
  c.effects.assign(c.boundaries.size(), 0.0);
  for (std::size_t k = 0; k < local_mean.size(); ++k) c.effects[k + 1] = c.effects[k] + local_mean[k];
  double weighted = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < c.counts.size(); ++k) {
    weighted += static_cast<double>(c.counts[k]) * 0.5 * (c.effects[k] + c.effects[k + 1]);
    n += c.counts[k];
  }
  c.centering = weighted / static_cast<double>(n);
  for (double& e : c.effects) e -= c.centering;
  return c;
}

}  // namespace detail

/// Model-agnostic ALE of feature j: within each quantile bin, the mean of
/// f(z_k, x_rest) - f(z_{k-1}, x_rest) over the bin's observations,
/// accumulated across bins and centered.
template <BatchModel M>
ALECurve ale_agnostic(const M& model, const Eigen::MatrixXd& x, std::size_t j,
                      std::size_t bins = kDefaultAleBins) {
  detail::check_ale_input(x, j, bins);
  const auto col = static_cast<Eigen::Index>(j);
  detail::AleBinning binning = detail::ale_bins(x.col(col), bins);
  Eigen::MatrixXd upper = x, lower = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::size_t k = binning.bin_of[static_cast<std::size_t>(i)];
    lower(i, col) = binning.boundaries[k];
    upper(i, col) = binning.boundaries[k + 1];
  }
  const Eigen::VectorXd diff = model.predict(upper) - model.predict(lower);
  std::vector<double> local(binning.counts.size(), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) local[binning.bin_of[static_cast<std::size_t>(i)]] += diff(i);
  for (std::size_t k = 0; k < local.size(); ++k) local[k] /= static_cast<double>(binning.counts[k]);
  return detail::finish_curve(j, bins, std::move(binning), local);
}

/// Model-aware ALE of feature j: within each bin, the mean of df/dx_j at the
/// bin's observations with x_j moved to the bin midpoint, times the bin width.
template <DifferentiableModel M>
ALECurve ale_aware(const M& model, const Eigen::MatrixXd& x, std::size_t j,
                   std::size_t bins = kDefaultAleBins) {
  detail::check_ale_input(x, j, bins);
  const auto col = static_cast<Eigen::Index>(j);
  detail::AleBinning binning = detail::ale_bins(x.col(col), bins);
  Eigen::MatrixXd mid = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const std::size_t k = binning.bin_of[static_cast<std::size_t>(i)];
    mid(i, col) = 0.5 * (binning.boundaries[k] + binning.boundaries[k + 1]);
  }
  const Eigen::MatrixXd g = model.gradient(mid);
  if (!g.allFinite()) throw NumericError("ALE: non-finite model gradient");
  std::vector<double> local(binning.counts.size(), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) local[binning.bin_of[static_cast<std::size_t>(i)]] += g(i, col);
  for (std::size_t k = 0; k < local.size(); ++k)
    local[k] = local[k] / static_cast<double>(binning.counts[k]) *
               (binning.boundaries[k + 1] - binning.boundaries[k]);
  return detail::finish_curve(j, bins, std::move(binning), local);
}

// ---------------------------------------------------------------------------
// Gradient attributions

/// Input gradient of the model score at one instance.
template <DifferentiableModel M>
Eigen::VectorXd saliency(const M& model, const Eigen::RowVectorXd& x) {
  Eigen::MatrixXd row = x;
  Eigen::VectorXd g = model.gradient(row).row(0).transpose();
  if (!g.allFinite()) throw NumericError("saliency: non-finite gradient");
  return g;
}

struct IntegratedGradients {
  Eigen::VectorXd attributions;
  /// score(x) - score(baseline).
  double score_difference = 0.0;
  /// |sum(attributions) - score_difference|.
  double completeness_error = 0.0;
  std::size_t steps = 0;
};

inline constexpr std::size_t kDefaultIgSteps = 50;

/// Midpoint-rule integrated gradients along the straight path from
/// `baseline` to `x`.
template <DifferentiableModel M>
IntegratedGradients integrated_gradients(const M& model, const Eigen::RowVectorXd& x,
                                         const Eigen::RowVectorXd& baseline,
                                         std::size_t steps = kDefaultIgSteps) {
  if (x.size() != baseline.size()) throw ContractError("instance and baseline differ in length");
  if (steps < 1) throw ContractError("integrated gradients needs at least one step");
  const Eigen::RowVectorXd delta = x - baseline;
  Eigen::MatrixXd path(static_cast<Eigen::Index>(steps), x.size());
  for (std::size_t s = 0; s < steps; ++s) {
    const double alpha = (static_cast<double>(s) + 0.5) / static_cast<double>(steps);
    path.row(static_cast<Eigen::Index>(s)) = baseline + alpha * delta;
  }
  const Eigen::MatrixXd g = model.gradient(path);
  if (!g.allFinite()) throw NumericError("integrated gradients: non-finite gradient");
  IntegratedGradients out;
  out.steps = steps;
  out.attributions = (g.colwise().mean().array() * delta.array()).transpose();
  Eigen::MatrixXd ends(2, x.size());
  ends.row(0) = x;
  ends.row(1) = baseline;
  const Eigen::VectorXd s = model.predict(ends);
  out.score_difference = s(0) - s(1);
  out.completeness_error = std::abs(out.attributions.sum() - out.score_difference);
  return out;
}

}  // namespace kinject
