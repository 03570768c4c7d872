#pragma once

// Validation protocols: out-of-bag bootstrap, full-factorial search over the
// objective weights, hold-out testing and the training-fraction sweep.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "kinject/data.hpp"
#include "kinject/error.hpp"
#include "kinject/knowledge.hpp"
#include "kinject/losses.hpp"
#include "kinject/metrics.hpp"
#include "kinject/models.hpp"
#include "kinject/random.hpp"
#include "kinject/train.hpp"

namespace kinject {

/// Runs task(0..count-1) on up to `jobs` threads. The first exception (by
/// task index) is rethrown after all workers stop.
inline void parallel_for(std::size_t count, std::size_t jobs,
                         const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  if (jobs == 1) {
    for (std::size_t i = 0; i < count; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::vector<std::exception_ptr> errors(count);
  auto worker = [&] {
    for (std::size_t i; !failed && (i = next++) < count;) {
      try {
        task(i);
      } catch (...) {
        errors[i] = std::current_exception();
        failed = true;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < jobs; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

struct GridResult {
  LambdaWeights lambda;
  double mean_auroc = 0.0;
  double standard_error = 0.0;
  std::vector<double> aurocs;
};

/// In-bag and out-of-bag rows of one bootstrap resample.
struct Resample {
  std::vector<std::size_t> in_bag;
  std::vector<std::size_t> out_of_bag;
};

inline constexpr int kMaxResampleAttempts = 10;

/// Draws n rows with replacement, redrawing (up to 10 times) until the
/// out-of-bag rows contain both classes. Depends only on (seed, b).
inline Resample draw_resample(std::span<const int> labels, std::uint64_t seed, std::size_t b) {
  const std::size_t n = labels.size();
  if (n < 2) throw ContractError("bootstrap needs at least two rows");
  for (int attempt = 0; attempt < kMaxResampleAttempts; ++attempt) {
    Rng rng(derive_seed(seed, {0xb007, b, static_cast<std::uint64_t>(attempt)}));
    Resample r;
    std::vector<char> drawn(n, 0);
    r.in_bag.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      r.in_bag[i] = uniform_index(rng, n);
      drawn[r.in_bag[i]] = 1;
    }
    bool has[2] = {false, false};
    for (std::size_t i = 0; i < n; ++i)
      if (!drawn[i]) {
        r.out_of_bag.push_back(i);
        has[labels[i] != 0] = true;
      }
    if (has[0] && has[1]) return r;
  }
  throw UndefinedMetricError("bootstrap resample " + std::to_string(b) + ": out-of-bag rows held a single class in " +
                             std::to_string(kMaxResampleAttempts) + " attempts");
}

/// Out-of-bag bootstrap with a caller-supplied learner:
/// `fit_and_score(in_bag, out_of_bag, b)` returns scores for the out-of-bag
/// rows.
template <class FitScore>
GridResult bootstrap_validate_with(const LambdaWeights& lambda, std::span<const int> labels,
                                   std::size_t resamples, std::uint64_t seed,
                                   FitScore&& fit_and_score, std::size_t jobs = 1) {
  if (resamples < 2) throw ValidationError("bootstrap needs at least 2 resamples");
  GridResult out;
  out.lambda = lambda;
  out.aurocs.assign(resamples, 0.0);
  parallel_for(resamples, jobs, [&](std::size_t b) {
    const Resample r = draw_resample(labels, seed, b);
    const std::vector<double> scores = fit_and_score(r.in_bag, r.out_of_bag, b);
    std::vector<int> y;
    for (std::size_t i : r.out_of_bag) y.push_back(labels[i]);
    out.aurocs[b] = auroc(scores, y);
  });
  const MeanAndError me = mean_and_standard_error(out.aurocs);
  out.mean_auroc = me.mean;
  out.standard_error = me.standard_error;
  return out;
}

/// Everything a training run needs besides the weights and the data.
struct Experiment {
  NetworkSpec spec;
  KnowledgeSpec knowledge;
  TrainConfig train;
};

namespace detail {

inline TrainingData subset(const TrainingData& data, std::span<const std::size_t> rows) {
  TrainingData out;
  out.raw.resize(static_cast<Eigen::Index>(rows.size()), data.raw.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.raw.row(static_cast<Eigen::Index>(i)) = data.raw.row(static_cast<Eigen::Index>(rows[i]));
    out.y(static_cast<Eigen::Index>(i)) = data.y(static_cast<Eigen::Index>(rows[i]));
  }
  out.stats = data.stats;
  return out;
}

inline std::vector<int> int_labels(const Eigen::VectorXd& y) {
  std::vector<int> out(static_cast<std::size_t>(y.size()));
  for (Eigen::Index i = 0; i < y.size(); ++i) out[static_cast<std::size_t>(i)] = y(i) > 0.5;
  return out;
}

/// The network trained for resample b; the same for every weight cell.
inline TrainConfig resample_config(const TrainConfig& cfg, std::size_t b) {
  TrainConfig c = cfg;
  c.seed = derive_seed(cfg.seed, {0x7ea1, b});
  return c;
}

}  // namespace detail

/// Trains on each bootstrap resample of `data` and scores the out-of-bag
/// rows. Resamples depend only on (cfg.seed, b), so every weight cell sees
/// the same ones.
inline GridResult bootstrap_validate(const Experiment& ex, const LambdaWeights& lambda,
                                     const TrainingData& data, std::size_t resamples,
                                     std::size_t jobs = 1) {
  const std::vector<int> labels = detail::int_labels(data.y);
  return bootstrap_validate_with(
      lambda, labels, resamples, ex.train.seed,
      [&](const std::vector<std::size_t>& in_bag, const std::vector<std::size_t>& oob, std::size_t b) {
        const TrainingData bag = detail::subset(data, in_bag);
        const Params p = train(ex.spec, lambda, ex.knowledge, bag, detail::resample_config(ex.train, b)).params;
        const TrainingData held = detail::subset(data, oob);
        const Eigen::VectorXd s = forward_probability(ex.spec, p, held.stats.standardize(held.raw));
        return std::vector<double>(s.data(), s.data() + s.size());
      },
      jobs);
}

/// The 16 cells of lambda2, lambda3 in {0, 0.1, 0.2, 0.3} with lambda1
/// filling the remainder, lambda3 varying slowest.
inline std::vector<LambdaWeights> table1_grid() {
  std::vector<LambdaWeights> out;
  for (int k = 0; k <= 3; ++k)
    for (int c = 0; c <= 3; ++c)
      out.push_back(LambdaWeights::make((10 - c - k) / 10.0, c / 10.0, k / 10.0));
  return out;
}

/// Index of the best cell: highest mean AUROC, then larger lambda3, then
/// larger lambda2, then the earlier cell.
inline std::size_t best_cell(std::span<const GridResult> results) {
  if (results.empty()) throw ContractError("no grid results");
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    const GridResult& a = results[i];
    const GridResult& b = results[best];
    if (a.mean_auroc != b.mean_auroc) {
      if (a.mean_auroc > b.mean_auroc) best = i;
    } else if (a.lambda.knowledge != b.lambda.knowledge) {
      if (a.lambda.knowledge > b.lambda.knowledge) best = i;
    } else if (a.lambda.complexity > b.lambda.complexity) {
      best = i;
    }
  }
  return best;
}

struct GridSearchResult {
  std::vector<GridResult> cells;
  std::size_t best = 0;
  const LambdaWeights& best_lambda() const { return cells.at(best).lambda; }
};

/// Bootstrap validation of every cell. Work is split into (cell, resample)
/// units over `jobs` threads; results do not depend on `jobs`.
inline GridSearchResult grid_search(const Experiment& ex, std::span<const LambdaWeights> grid,
                                    const TrainingData& data, std::size_t resamples,
                                    std::size_t jobs = 1) {
  if (grid.empty()) throw ValidationError("lambda grid is empty");
  if (resamples < 2) throw ValidationError("bootstrap needs at least 2 resamples");
  for (const auto& l : grid) l.validate();
  const std::vector<int> labels = detail::int_labels(data.y);
  std::vector<Resample> draws;
  for (std::size_t b = 0; b < resamples; ++b) draws.push_back(draw_resample(labels, ex.train.seed, b));

  GridSearchResult out;
  out.cells.resize(grid.size());
  for (std::size_t c = 0; c < grid.size(); ++c) {
    out.cells[c].lambda = grid[c];
    out.cells[c].aurocs.assign(resamples, 0.0);
  }
  parallel_for(grid.size() * resamples, jobs, [&](std::size_t unit) {
    const std::size_t c = unit / resamples, b = unit % resamples;
    const Resample& r = draws[b];
    const TrainingData bag = detail::subset(data, r.in_bag);
    const Params p = train(ex.spec, grid[c], ex.knowledge, bag, detail::resample_config(ex.train, b)).params;
    const TrainingData held = detail::subset(data, r.out_of_bag);
    const Eigen::VectorXd s = forward_probability(ex.spec, p, held.stats.standardize(held.raw));
    std::vector<int> y = detail::int_labels(held.y);
    out.cells[c].aurocs[b] = auroc(std::vector<double>(s.data(), s.data() + s.size()), y);
  });
  for (auto& cell : out.cells) {
    const MeanAndError me = mean_and_standard_error(cell.aurocs);
    cell.mean_auroc = me.mean;
    cell.standard_error = me.standard_error;
  }
  out.best = best_cell(out.cells);
  return out;
}

/// AUROC of `model` on the given raw test rows.
inline double holdout_auroc(const Model& model, const Eigen::MatrixXd& raw_test,
                            std::span<const int> labels_test) {
  const Eigen::VectorXd s = model.probability(raw_test);
  return auroc(std::vector<double>(s.data(), s.data() + s.size()), labels_test);
}

/// One line of a Table-2 style report.
struct HoldoutRow {
  std::string setting;  // "baseline" or "validated"
  LambdaWeights lambda;
  std::string arch;
  double test_auroc = 0.0;
};

struct ScarcityRow {
  double fraction = 0.0;
  double with_knowledge = 0.0;
  double without_knowledge = 0.0;
};

inline std::vector<double> default_scarcity_fractions() {
  return {0.85, 0.80, 0.75, 0.70, 0.65, 0.60, 0.55, 0.50};
}

/// For each training fraction: stratified split, standardize on the training
/// rows, train both weightings and score the complementary rows. The split
/// for a fraction depends only on (cfg.seed, fraction).
inline std::vector<ScarcityRow> scarcity_sweep(const Experiment& ex, std::span<const double> fractions,
                                               const LambdaWeights& with_knowledge,
                                               const LambdaWeights& without_knowledge,
                                               const Dataset& data, std::size_t jobs = 1) {
  std::size_t counts[2] = {0, 0};
  for (int y : data.labels) ++counts[y != 0];
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ValidationError("training fractions must lie in (0, 1)");
    for (std::size_t c : counts) {
      const auto take = std::llround(f * static_cast<double>(c));
      if (take < 1 || take >= static_cast<long long>(c))
        throw ValidationError("fraction " + KnowledgeFunction::format_number(f) +
                              " leaves a class empty on one side of the split");
    }
  }
  std::vector<ScarcityRow> rows(fractions.size());
  std::vector<std::uint64_t> split_seeds;
  for (double f : fractions)
    split_seeds.push_back(derive_seed(ex.train.seed, {0x5ca7, static_cast<std::uint64_t>(std::llround(f * 1e6))}));
  parallel_for(fractions.size() * 2, jobs, [&](std::size_t unit) {
    const std::size_t i = unit / 2;
    const bool knowledge = unit % 2 == 0;
    const Split split = stratified_split(data, fractions[i], split_seeds[i]);
    const StandardizedData sd = impute_and_standardize(data, split.train);
    const TrainingData train_rows = TrainingData::from(data, split.train, sd.stats);
    TrainConfig cfg = ex.train;
    cfg.seed = derive_seed(ex.train.seed, {0x7ea1, 1000 + i});
    cfg.batch_size = std::min<int>(cfg.batch_size, static_cast<int>(split.train.size()));
    const Model m = fit_model(ex.spec, knowledge ? with_knowledge : without_knowledge, ex.knowledge,
                              train_rows, cfg);
    const Dataset test = data.select_rows(split.test);
    const double a = holdout_auroc(m, test.raw, test.labels);
    rows[i].fraction = fractions[i];
    (knowledge ? rows[i].with_knowledge : rows[i].without_knowledge) = a;
  });
  return rows;
}

}  // namespace kinject
