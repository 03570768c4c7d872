#pragma once

// Minibatch training of the scalarized objective with Adam or SGD with
// momentum.

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kinject/autodiff.hpp"
#include "kinject/data.hpp"
#include "kinject/error.hpp"
#include "kinject/knowledge.hpp"
#include "kinject/losses.hpp"
#include "kinject/models.hpp"
#include "kinject/random.hpp"

namespace kinject {

enum class OptimizerKind { adam, sgd_momentum };

inline std::string to_string(OptimizerKind o) { return o == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

inline OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd_momentum" || s == "sgd") return OptimizerKind::sgd_momentum;
  throw ValidationError("unknown optimizer '" + s + "'");
}

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double momentum = 0.9;  // sgd_momentum only
  int epochs = 200;
  int batch_size = 64;
  std::uint64_t seed = 0;
  KnowledgeMode knowledge_mode = KnowledgeMode::hinge;

  /// `n` is the number of training rows.
  void validate(std::size_t n) const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ValidationError("learning rate must be positive");
    if (epochs < 1) throw ValidationError("epochs must be at least 1");
    if (batch_size < 1 || static_cast<std::size_t>(batch_size) > n)
      throw ValidationError("batch size must lie in [1, " + std::to_string(n) + "], got " +
                            std::to_string(batch_size));
    if (optimizer == OptimizerKind::adam) {
      if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
        throw ValidationError("adam betas must lie in [0, 1)");
      if (!(epsilon > 0.0)) throw ValidationError("adam epsilon must be positive");
    } else if (!(momentum >= 0.0 && momentum < 1.0)) {
      throw ValidationError("momentum must lie in [0, 1)");
    }
  }
};

/// Rows of raw training data with the statistics that map them to network
/// inputs.
struct TrainingData {
  Eigen::MatrixXd raw;
  Eigen::VectorXd y;
  FeatureStats stats;

  std::size_t rows() const { return static_cast<std::size_t>(raw.rows()); }

  static TrainingData from(const Dataset& data, std::span<const std::size_t> rows,
                           FeatureStats stats) {
    TrainingData out;
    out.raw.resize(static_cast<Eigen::Index>(rows.size()), data.raw.cols());
    out.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      out.raw.row(static_cast<Eigen::Index>(i)) = data.raw.row(static_cast<Eigen::Index>(rows[i]));
      out.y(static_cast<Eigen::Index>(i)) = data.labels.at(rows[i]);
    }
    out.stats = std::move(stats);
    return out;
  }
};

/// Values of the three objective terms on the full training set at the end
/// of each epoch.
struct LossTrace {
  std::vector<double> fit;
  std::vector<double> complexity;
  std::vector<double> knowledge;
};

struct TrainResult {
  Params params;
  LossTrace trace;
};

struct ObjectiveValues {
  double fit = 0.0;
  double complexity = 0.0;
  double knowledge = 0.0;
};

/// The three terms for standardized inputs `z` with precomputed k values.
inline ObjectiveValues evaluate_terms(const NetworkSpec& spec, const Params& params,
                                      const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                                      const Eigen::MatrixXd& k_values,
                                      const Eigen::RowVectorXd& inverse_sd, KnowledgeMode mode) {
  ad::Tape tape;
  TapeParams tp = record_params(tape, params, false);
  const bool with_knowledge = !k_values.isZero(0.0);
  ad::Var x = with_knowledge ? tape.variable(z, "x") : tape.constant(z);
  ad::Var prob = ad::sigmoid(tape_logit(spec, tp, x));
  ObjectiveValues v;
  v.fit = tape_bce(prob, y).scalar();
  v.complexity = l2_penalty(params);
  if (with_knowledge) v.knowledge = tape_knowledge(x, prob, k_values, inverse_sd, mode).scalar();
  return v;
}

namespace detail {

inline void check_term(int epoch, const char* term, double value) {
  if (!std::isfinite(value))
    throw DivergenceError(epoch, term, "value " + std::to_string(value));
}

struct OptimizerState {
  std::vector<Eigen::MatrixXd> m, v;
  long step = 0;
};

}  // namespace detail

/// Trains `spec` on `data`. Deterministic given `cfg.seed`: initialization
/// and minibatch order derive from it. With a zero knowledge weight the
/// knowledge spec is never consulted by the updates.
inline TrainResult train(const NetworkSpec& spec, const LambdaWeights& lambda,
                         const KnowledgeSpec& kspec, const TrainingData& data,
                         const TrainConfig& cfg, std::optional<Params> initial = std::nullopt) {
  spec.validate();
  lambda.validate();
  const std::size_t n = data.rows();
  if (n == 0) throw ContractError("train: no rows");
  if (static_cast<std::size_t>(data.y.size()) != n) throw ContractError("train: label count differs from rows");
  if (static_cast<std::size_t>(data.raw.cols()) != spec.inputs())
    throw ContractError("train: data has " + std::to_string(data.raw.cols()) + " features, network " +
                        std::to_string(spec.inputs()));
  if (kspec.features() != 0 && kspec.features() != spec.inputs())
    throw ContractError("train: knowledge spec width differs from the network");
  cfg.validate(n);

  const Eigen::MatrixXd z = data.stats.standardize(data.raw);
  const Eigen::MatrixXd k_values = kspec.features() == 0 || kspec.empty()
                                       ? Eigen::MatrixXd::Zero(data.raw.rows(), data.raw.cols())
                                       : kspec.eval(data.stats.impute(data.raw));
  const Eigen::RowVectorXd inverse_sd = data.stats.inverse_sd();

  TrainResult result;
  result.params = initial ? std::move(*initial) : init_params(spec, derive_seed(cfg.seed, {0x1417}));
  check_params(spec, result.params);
  Params& params = result.params;

  detail::OptimizerState state;
  for (const auto& layer : params.layers) {
    state.m.push_back(Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()));
    state.m.push_back(Eigen::MatrixXd::Zero(1, layer.bias.size()));
  }
  state.v = state.m;

  Rng order_rng(derive_seed(cfg.seed, {0x0bad}));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) try {
    shuffle(std::span<std::size_t>(order), order_rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t size = std::min(batch, n - start);
      Eigen::MatrixXd zb(static_cast<Eigen::Index>(size), z.cols());
      Eigen::MatrixXd kb(static_cast<Eigen::Index>(size), z.cols());
      Eigen::VectorXd yb(static_cast<Eigen::Index>(size));
      for (std::size_t i = 0; i < size; ++i) {
        const auto r = static_cast<Eigen::Index>(order[start + i]);
        zb.row(static_cast<Eigen::Index>(i)) = z.row(r);
        kb.row(static_cast<Eigen::Index>(i)) = k_values.row(r);
        yb(static_cast<Eigen::Index>(i)) = data.y(r);
      }

      ad::Tape tape;
      TapeParams tp = record_params(tape, params, true);
      ObjectiveTerms terms =
          record_objective(tape, spec, tp, zb, yb, kb, inverse_sd, lambda, cfg.knowledge_mode);
      detail::check_term(epoch, "fit", terms.fit.scalar());
      detail::check_term(epoch, "complexity", terms.complexity.scalar());
      if (terms.knowledge.valid()) detail::check_term(epoch, "knowledge", terms.knowledge.scalar());
      std::vector<ad::Var> leaves = tp.leaves();
      std::vector<Eigen::MatrixXd> g = ad::grad(terms.total, leaves);

      ++state.step;
      const double t = static_cast<double>(state.step);
      for (std::size_t slot = 0; slot < g.size(); ++slot) {
        if (!g[slot].allFinite()) throw DivergenceError(epoch, "gradient", "non-finite parameter gradient");
        Layer& layer = params.layers[slot / 2];
        Eigen::MatrixXd step;
        if (cfg.optimizer == OptimizerKind::adam) {
          state.m[slot] = cfg.beta1 * state.m[slot] + (1.0 - cfg.beta1) * g[slot];
          state.v[slot] = cfg.beta2 * state.v[slot] + (1.0 - cfg.beta2) * g[slot].cwiseProduct(g[slot]);
          const double c1 = 1.0 - std::pow(cfg.beta1, t);
          const double c2 = 1.0 - std::pow(cfg.beta2, t);
          step = cfg.lr * (state.m[slot] / c1).array() /
                 ((state.v[slot] / c2).array().sqrt() + cfg.epsilon);
        } else {
          state.m[slot] = cfg.momentum * state.m[slot] + g[slot];
          step = cfg.lr * state.m[slot];
        }
        if (slot % 2 == 0)
          layer.weight -= step;
        else
          layer.bias -= step.row(0);
      }
    }

    const ObjectiveValues v =
        evaluate_terms(spec, params, z, data.y, k_values, inverse_sd, cfg.knowledge_mode);
    detail::check_term(epoch, "fit", v.fit);
    detail::check_term(epoch, "complexity", v.complexity);
    detail::check_term(epoch, "knowledge", v.knowledge);
    result.trace.fit.push_back(v.fit);
    result.trace.complexity.push_back(v.complexity);
    result.trace.knowledge.push_back(v.knowledge);
  } catch (const NumericError& e) {
    throw DivergenceError(epoch, "objective", e.what());
  }
  return result;
}

/// Trains and packages the result with its statistics and knowledge.
inline Model fit_model(const NetworkSpec& spec, const LambdaWeights& lambda,
                       const KnowledgeSpec& kspec, const TrainingData& data, const TrainConfig& cfg) {
  Model m;
  m.spec = spec;
  m.params = train(spec, lambda, kspec, data, cfg).params;
  m.stats = data.stats;
  m.knowledge = kspec.features() == 0 ? KnowledgeSpec(spec.inputs()) : kspec;
  m.lambda = lambda.to_vector();
  return m;
}

}  // namespace kinject
