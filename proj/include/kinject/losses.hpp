#pragma once

// The three objective terms (data fit, weight complexity, knowledge
// adherence) and their weighted-sum scalarization.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kinject/autodiff.hpp"
#include "kinject/error.hpp"
#include "kinject/knowledge.hpp"
#include "kinject/models.hpp"

namespace kinject {

/// Weights of (data fit, L2 complexity, knowledge); nonnegative, summing to 1.
struct LambdaWeights {
  double fit = 1.0;
  double complexity = 0.0;
  double knowledge = 0.0;

  static constexpr double kSumTolerance = 1e-12;

  static LambdaWeights make(double fit, double complexity, double knowledge) {
    LambdaWeights w{fit, complexity, knowledge};
    w.validate();
    return w;
  }

  /// Fills the fit weight so the three sum to one.
  static LambdaWeights from_penalties(double complexity, double knowledge) {
    return make(1.0 - complexity - knowledge, complexity, knowledge);
  }

  void validate() const {
    if (!(fit >= 0.0 && complexity >= 0.0 && knowledge >= 0.0))
      throw ValidationError("lambda weights must be nonnegative");
    // Grid values like 1 - 0.1 - 0.2 are off by an ulp or two.
    if (std::abs(fit + complexity + knowledge - 1.0) > kSumTolerance)
      throw ValidationError("lambda weights must sum to 1, got " + to_string());
  }

  std::vector<double> to_vector() const { return {fit, complexity, knowledge}; }

  std::string to_string() const {
    return "(" + KnowledgeFunction::format_number(fit) + ", " +
           KnowledgeFunction::format_number(complexity) + ", " +
           KnowledgeFunction::format_number(knowledge) + ")";
  }

  friend bool operator==(const LambdaWeights&, const LambdaWeights&) = default;
};

enum class KnowledgeMode { hinge, linear };

inline std::string to_string(KnowledgeMode m) { return m == KnowledgeMode::hinge ? "hinge" : "linear"; }

inline KnowledgeMode parse_knowledge_mode(const std::string& s) {
  if (s == "hinge") return KnowledgeMode::hinge;
  if (s == "linear") return KnowledgeMode::linear;
  throw ValidationError("unknown knowledge mode '" + s + "'");
}

inline constexpr double kProbabilityClamp = 1e-7;

namespace detail {
inline void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw ContractError("length mismatch: " + std::to_string(a) + " labels vs " +
                        std::to_string(b) + " predictions");
  if (a == 0) throw ContractError("loss of an empty batch");
}
}  // namespace detail

inline double mse_loss(std::span<const double> y, std::span<const double> yhat) {
  detail::check_lengths(y.size(), yhat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]) * (y[i] - yhat[i]);
  return s / static_cast<double>(y.size());
}

/// Mean binary cross-entropy with predictions clamped into [1e-7, 1 - 1e-7].
inline double bce_loss(std::span<const double> y, std::span<const double> yhat) {
  detail::check_lengths(y.size(), yhat.size());
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double p = std::clamp(yhat[i], kProbabilityClamp, 1.0 - kProbabilityClamp);
    s += y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p);
  }
  return -s / static_cast<double>(y.size());
}

/// Sum of squared weights; biases are not penalized.
inline double l2_penalty(const Params& params) {
  double s = 0.0;
  for (const auto& layer : params.layers) s += layer.weight.squaredNorm();
  return s;
}

// ---------------------------------------------------------------------------
// Tape forms, used for training

inline ad::Var tape_bce(const ad::Var& probability, const Eigen::VectorXd& y) {
  ad::Tape& t = probability.tape();
  ad::Var p = ad::clamp(probability, kProbabilityClamp, 1.0 - kProbabilityClamp);
  ad::Var pos = t.constant(y);
  ad::Var neg = t.constant((1.0 - y.array()).matrix());
  return ad::mean(pos * ad::log(p) + neg * ad::log(1.0 + p * -1.0)) * -1.0;
}

inline ad::Var tape_l2(const TapeParams& params) {
  ad::Var total = ad::sum(ad::square(params.weights.front()));
  for (std::size_t l = 1; l < params.weights.size(); ++l)
    total = total + ad::sum(ad::square(params.weights[l]));
  return total;
}

/// Mean over samples and features of k_ij * dF/dx_ij, with the derivative
/// taken in raw units (standardized gradient times 1/sd). `x` must be a
/// differentiable leaf and `probability` the network output built from it.
/// The returned node stays differentiable w.r.t. the parameters.
inline ad::Var tape_knowledge(const ad::Var& x, const ad::Var& probability,
                              const Eigen::MatrixXd& k_values,
                              const Eigen::RowVectorXd& inverse_sd, KnowledgeMode mode) {
  ad::Tape& t = x.tape();
  if (k_values.rows() != x.rows() || k_values.cols() != x.cols())
    throw ContractError("knowledge values must match the batch shape");
  ad::Var wrt[] = {x};
  ad::Var g = t.grad(ad::sum(probability), wrt)[0];
  ad::Var scale = t.constant(inverse_sd.replicate(x.rows(), 1));
  ad::Var weighted = t.constant(k_values) * (g * scale);
  return mode == KnowledgeMode::hinge ? ad::mean(ad::relu(weighted)) : ad::mean(weighted);
}

struct ObjectiveTerms {
  ad::Var fit;
  ad::Var complexity;
  ad::Var knowledge;  // invalid when the knowledge weight is zero
  ad::Var total;
};

/// Records lambda . [bce, l2, knowledge] for a standardized batch. When the
/// knowledge weight is zero the term is not built at all, so the result does
/// not depend on `k_values`.
inline ObjectiveTerms record_objective(ad::Tape& tape, const NetworkSpec& spec,
                                       const TapeParams& params, const Eigen::MatrixXd& z,
                                       const Eigen::VectorXd& y, const Eigen::MatrixXd& k_values,
                                       const Eigen::RowVectorXd& inverse_sd,
                                       const LambdaWeights& lambda, KnowledgeMode mode) {
  lambda.validate();
  if (y.size() != z.rows()) throw ContractError("labels and batch rows differ");
  const bool with_knowledge = lambda.knowledge > 0.0;
  ad::Var x = with_knowledge ? tape.variable(z, "x") : tape.constant(z);
  ad::Var prob = ad::sigmoid(tape_logit(spec, params, x));
  ObjectiveTerms terms;
  terms.fit = tape_bce(prob, y);
  terms.complexity = tape_l2(params);
  terms.total = terms.fit * lambda.fit + terms.complexity * lambda.complexity;
  if (with_knowledge) {
    terms.knowledge = tape_knowledge(x, prob, k_values, inverse_sd, mode);
    terms.total = terms.total + terms.knowledge * lambda.knowledge;
  }
  return terms;
}

// ---------------------------------------------------------------------------
// Value forms over raw features

/// Knowledge loss of a network on raw rows `raw`, with `stats` mapping raw
/// to network inputs. Zero when every k_j is zero.
inline double knowledge_loss(const NetworkSpec& spec, const Params& params,
                             const FeatureStats& stats, const Eigen::MatrixXd& raw,
                             const KnowledgeSpec& kspec, KnowledgeMode mode) {
  check_params(spec, params);
  if (kspec.features() != 0 && kspec.features() != spec.inputs())
    throw ContractError("knowledge spec covers " + std::to_string(kspec.features()) +
                        " features, network has " + std::to_string(spec.inputs()));
  if (kspec.empty()) return 0.0;
  const Eigen::MatrixXd complete = stats.impute(raw);
  ad::Tape tape;
  TapeParams tp = record_params(tape, params, false);
  ad::Var x = tape.variable(stats.standardize(raw), "x");
  ad::Var prob = ad::sigmoid(tape_logit(spec, tp, x));
  return tape_knowledge(x, prob, kspec.eval(complete), stats.inverse_sd(), mode).scalar();
}

inline double knowledge_loss(const Model& model, const Eigen::MatrixXd& raw, KnowledgeMode mode) {
  return knowledge_loss(model.spec, model.params, model.stats, raw, model.knowledge, mode);
}

/// Everything needed to evaluate the objective on one batch.
struct ObjectiveInput {
  const NetworkSpec& spec;
  const FeatureStats& stats;
  const Eigen::MatrixXd& raw;
  const Eigen::VectorXd& y;
  const KnowledgeSpec& knowledge;
  KnowledgeMode mode = KnowledgeMode::hinge;
};

namespace detail {

inline Eigen::MatrixXd knowledge_values(const ObjectiveInput& in) {
  if (in.knowledge.features() == 0 || in.knowledge.empty())
    return Eigen::MatrixXd::Zero(in.raw.rows(), in.raw.cols());
  return in.knowledge.eval(in.stats.impute(in.raw));
}

}  // namespace detail

inline double scalarized_objective(const LambdaWeights& lambda, const Params& params,
                                   const ObjectiveInput& in) {
  check_params(in.spec, params);
  ad::Tape tape;
  TapeParams tp = record_params(tape, params, false);
  return record_objective(tape, in.spec, tp, in.stats.standardize(in.raw), in.y,
                          detail::knowledge_values(in), in.stats.inverse_sd(), lambda, in.mode)
      .total.scalar();
}

/// Gradient of the scalarized objective w.r.t. every weight and bias, in the
/// layout of Params.
inline Params objective_gradient(const LambdaWeights& lambda, const Params& params,
                                 const ObjectiveInput& in) {
  check_params(in.spec, params);
  ad::Tape tape;
  TapeParams tp = record_params(tape, params, true);
  ObjectiveTerms terms =
      record_objective(tape, in.spec, tp, in.stats.standardize(in.raw), in.y,
                       detail::knowledge_values(in), in.stats.inverse_sd(), lambda, in.mode);
  std::vector<ad::Var> leaves = tp.leaves();
  std::vector<Eigen::MatrixXd> g = ad::grad(terms.total, leaves);
  Params out;
  for (std::size_t l = 0; l < params.layers.size(); ++l)
    out.layers.push_back({g[2 * l], Eigen::RowVectorXd(g[2 * l + 1])});
  return out;
}

}  // namespace kinject
