#pragma once

// Feed-forward binary classifiers: a multilayer perceptron and a residual
// network with identity shortcuts. Both end in a single logit followed by a
// sigmoid.
//
// Weights are stored fan_in x fan_out so a batch X (n x p) maps as X * W + b.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kinject/autodiff.hpp"
#include "kinject/data.hpp"
#include "kinject/error.hpp"
#include "kinject/knowledge.hpp"
#include "kinject/random.hpp"

namespace kinject {

enum class Architecture { mlp, resnet };
enum class Activation { tanh, relu };

inline std::string to_string(Architecture a) { return a == Architecture::mlp ? "mlp" : "resnet"; }
inline std::string to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Architecture parse_architecture(const std::string& s) {
  if (s == "mlp" || s == "MLP") return Architecture::mlp;
  if (s == "resnet" || s == "ResNet") return Architecture::resnet;
  throw ValidationError("unknown architecture '" + s + "'");
}

inline Activation parse_activation(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ValidationError("unknown activation '" + s + "'");
}

/// Layer widths run input, hidden..., 1.
///
/// For a ResNet the first hidden layer is a stem projecting the input to the
/// block width; the remaining hidden layers form blocks of `skip_every`
/// layers each, and every block computes h + F(h) with an identity shortcut.
struct NetworkSpec {
  Architecture arch = Architecture::mlp;
  std::vector<int> layer_sizes;
  Activation activation = Activation::tanh;
  int skip_every = 2;

  std::size_t inputs() const { return static_cast<std::size_t>(layer_sizes.front()); }
  std::size_t layers() const { return layer_sizes.size() - 1; }

  void validate() const {
    if (layer_sizes.size() < 2) throw ContractError("network needs at least input and output sizes");
    for (int s : layer_sizes)
      if (s <= 0) throw ContractError("layer sizes must be positive");
    if (layer_sizes.back() != 1) throw ContractError("output layer must have width 1");
    if (arch == Architecture::resnet) {
      if (skip_every < 1) throw ContractError("skip_every must be positive");
      const std::size_t hidden = layer_sizes.size() - 2;
      if (hidden < 1) throw ContractError("resnet needs a stem layer");
      if ((hidden - 1) % static_cast<std::size_t>(skip_every) != 0)
        throw ContractError("resnet hidden layers after the stem must form whole blocks of " +
                            std::to_string(skip_every));
      const int width = layer_sizes[1];
      for (std::size_t l = 2; l + 1 < layer_sizes.size(); ++l)
        if (layer_sizes[l] != width)
          throw ContractError("resnet identity shortcut needs equal widths, got " +
                              std::to_string(layer_sizes[l]) + " vs " + std::to_string(width));
    }
  }

  /// Two hidden tanh layers of width 32.
  static NetworkSpec default_mlp(int inputs) {
    return {Architecture::mlp, {inputs, 32, 32, 1}, Activation::tanh, 2};
  }

  /// Stem plus two blocks of two width-32 layers.
  static NetworkSpec default_resnet(int inputs) {
    return {Architecture::resnet, {inputs, 32, 32, 32, 32, 32, 1}, Activation::tanh, 2};
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

struct Layer {
  Eigen::MatrixXd weight;  // fan_in x fan_out
  Eigen::RowVectorXd bias;
};

struct Params {
  std::vector<Layer> layers;

  bool all_finite() const {
    for (const auto& l : layers)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }
};

inline void check_params(const NetworkSpec& spec, const Params& params) {
  if (params.layers.size() != spec.layers())
    throw ContractError("expected " + std::to_string(spec.layers()) + " layers, got " +
                        std::to_string(params.layers.size()));
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (layer.weight.rows() != spec.layer_sizes[l] || layer.weight.cols() != spec.layer_sizes[l + 1] ||
        layer.bias.size() != spec.layer_sizes[l + 1])
      throw ContractError("layer " + std::to_string(l) + " has inconsistent shape");
  }
}

/// Glorot-uniform weights, zero biases; deterministic in `seed`.
inline Params init_params(const NetworkSpec& spec, std::uint64_t seed) {
  spec.validate();
  Params params;
  Rng rng(derive_seed(seed, {0x1417}));
  for (std::size_t l = 0; l < spec.layers(); ++l) {
    const int fan_in = spec.layer_sizes[l];
    const int fan_out = spec.layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Layer layer;
    layer.weight.resize(fan_in, fan_out);
    for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        layer.weight(i, j) = uniform(rng, -bound, bound);
    layer.bias = Eigen::RowVectorXd::Zero(fan_out);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

inline Params zero_params(const NetworkSpec& spec) {
  Params params;
  for (std::size_t l = 0; l < spec.layers(); ++l)
    params.layers.push_back({Eigen::MatrixXd::Zero(spec.layer_sizes[l], spec.layer_sizes[l + 1]),
                             Eigen::RowVectorXd::Zero(spec.layer_sizes[l + 1])});
  return params;
}

/// Runs the architecture over a backend providing `affine(layer, h)`,
/// `activate(h)` and `add(a, b)`. Returns the n x 1 logit.
template <class Backend>
typename Backend::Value network_logit(const NetworkSpec& spec, Backend& be,
                                      typename Backend::Value x) {
  const std::size_t last = spec.layers() - 1;
  if (spec.arch == Architecture::mlp) {
    auto h = x;
    for (std::size_t l = 0; l < last; ++l) h = be.activate(be.affine(l, h));
    return be.affine(last, h);
  }
  auto h = be.activate(be.affine(0, x));
  const auto block = static_cast<std::size_t>(spec.skip_every);
  for (std::size_t l = 1; l < last; l += block) {
    auto branch = h;
    for (std::size_t k = 0; k < block; ++k) branch = be.activate(be.affine(l + k, branch));
    h = be.add(h, branch);
  }
  return be.affine(last, h);
}

namespace detail {

struct EigenBackend {
  using Value = Eigen::MatrixXd;
  const Params& params;
  Activation activation;

  Value affine(std::size_t l, const Value& h) const {
    const auto& layer = params.layers[l];
    return (h * layer.weight).rowwise() + layer.bias;
  }
  Value activate(const Value& h) const {
    if (activation == Activation::tanh) return h.array().tanh().matrix();
    return h.cwiseMax(0.0);
  }
  Value add(const Value& a, const Value& b) const { return a + b; }
};

}  // namespace detail

/// Parameters registered on a tape, either as differentiable leaves or as
/// constants.
struct TapeParams {
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;

  std::vector<ad::Var> leaves() const {
    std::vector<ad::Var> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(weights[l]);
      out.push_back(biases[l]);
    }
    return out;
  }
};

inline TapeParams record_params(ad::Tape& tape, const Params& params, bool differentiable) {
  TapeParams out;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    if (differentiable) {
      out.weights.push_back(tape.variable(layer.weight, "W" + std::to_string(l)));
      out.biases.push_back(tape.variable(layer.bias, "b" + std::to_string(l)));
    } else {
      out.weights.push_back(tape.constant(layer.weight));
      out.biases.push_back(tape.constant(layer.bias));
    }
  }
  return out;
}

namespace detail {

struct TapeBackend {
  using Value = ad::Var;
  const TapeParams& params;
  Activation activation;

  Value affine(std::size_t l, const Value& h) const {
    return ad::add_row(ad::matmul(h, params.weights[l]), params.biases[l]);
  }
  Value activate(const Value& h) const {
    return activation == Activation::tanh ? ad::tanh(h) : ad::relu(h);
  }
  Value add(const Value& a, const Value& b) const { return a + b; }
};

}  // namespace detail

/// Batch logits (n x 1) of standardized inputs on a tape.
inline ad::Var tape_logit(const NetworkSpec& spec, const TapeParams& params, const ad::Var& x) {
  if (static_cast<std::size_t>(x.cols()) != spec.inputs())
    throw ContractError("expected " + std::to_string(spec.inputs()) + " inputs, got " +
                        std::to_string(x.cols()));
  detail::TapeBackend be{params, spec.activation};
  return network_logit(spec, be, x);
}

/// Batch logits of standardized inputs.
inline Eigen::VectorXd forward_logit(const NetworkSpec& spec, const Params& params,
                                     const Eigen::MatrixXd& x) {
  if (static_cast<std::size_t>(x.cols()) != spec.inputs())
    throw ContractError("expected " + std::to_string(spec.inputs()) + " inputs, got " +
                        std::to_string(x.cols()));
  check_params(spec, params);
  detail::EigenBackend be{params, spec.activation};
  return network_logit(spec, be, x).col(0);
}

/// Logistic function, kept inside the open interval (0, 1) even where the
/// exact value rounds to 0 or 1.
inline double sigmoid(double z) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  const double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
  return std::clamp(s, lo, hi);
}

inline Eigen::VectorXd forward_probability(const NetworkSpec& spec, const Params& params,
                                           const Eigen::MatrixXd& x) {
  Eigen::VectorXd z = forward_logit(spec, params, x);
  return z.unaryExpr([](double v) { return sigmoid(v); });
}

inline double single_forward(const NetworkSpec& spec, const Params& params,
                             std::span<const double> x) {
  if (x.size() != spec.inputs())
    throw ContractError("expected " + std::to_string(spec.inputs()) + " features, got " +
                        std::to_string(x.size()));
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(x.size()));
  for (std::size_t j = 0; j < x.size(); ++j) row(0, static_cast<Eigen::Index>(j)) = x[j];
  return forward_probability(spec, params, row)(0);
}

inline double mlp_forward(const NetworkSpec& spec, const Params& params, std::span<const double> x) {
  if (spec.arch != Architecture::mlp) throw ContractError("mlp_forward on a non-MLP spec");
  return single_forward(spec, params, x);
}

inline double resnet_forward(const NetworkSpec& spec, const Params& params,
                             std::span<const double> x) {
  if (spec.arch != Architecture::resnet) throw ContractError("resnet_forward on a non-ResNet spec");
  spec.validate();
  return single_forward(spec, params, x);
}

/// Gradient of the summed network output w.r.t. each standardized input row.
inline Eigen::MatrixXd standardized_input_gradient(const NetworkSpec& spec, const Params& params,
                                                   const Eigen::MatrixXd& z, bool on_probability) {
  ad::Tape tape;
  TapeParams tp = record_params(tape, params, false);
  ad::Var x = tape.variable(z, "x");
  ad::Var out = tape_logit(spec, tp, x);
  if (on_probability) out = ad::sigmoid(out);
  ad::Var wrt[] = {x};
  return ad::grad(ad::sum(out), wrt)[0];
}

/// A trained classifier: architecture, weights, the training statistics that
/// map raw features to network inputs, and the knowledge it was trained with.
struct Model {
  NetworkSpec spec;
  Params params;
  FeatureStats stats;
  KnowledgeSpec knowledge;
  std::optional<std::vector<double>> lambda;

  std::size_t features() const { return spec.inputs(); }

  Eigen::VectorXd logit(const Eigen::MatrixXd& raw) const {
    return forward_logit(spec, params, stats.standardize(raw));
  }

  Eigen::VectorXd probability(const Eigen::MatrixXd& raw) const {
    return forward_probability(spec, params, stats.standardize(raw));
  }

  /// Raw-unit input gradient of the logit (or the probability), n x p.
  Eigen::MatrixXd input_gradient(const Eigen::MatrixXd& raw, bool on_probability) const {
    Eigen::MatrixXd g = standardized_input_gradient(spec, params, stats.standardize(raw), on_probability);
    return g.array().rowwise() * stats.inverse_sd().array();
  }
};

}  // namespace kinject
